"""Backend selection for the remeshing kernels.

The compiled extension is used when it imports; otherwise the pure-Python
module with identical semantics. Set ``APSADAPT_PURE_PYTHON=1`` to force the
fallback.
"""

import os

if os.environ.get("APSADAPT_PURE_PYTHON") == "1":
    from . import _kernels as _impl

    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels as _impl

        BACKEND = "python"

collapse_pass = _impl.collapse_pass
edge_lengths = _impl.edge_lengths
flip_pass = _impl.flip_pass
interpolate_metrics = _impl.interpolate_metrics
locate_points = _impl.locate_points
qualities = _impl.qualities
smooth_pass = _impl.smooth_pass
