import json
import os
import subprocess
import sys

import numpy as np
import pytest

from apsadapt import _kernels as pure
from apsadapt import kernels
from apsadapt.mesh import perturbed_mesh
from apsadapt.remesh import MetricField, _grid_hints

compiled = pytest.importorskip("apsadapt._ckernels")

REMESH_SCRIPT = """
import json, numpy as np
from apsadapt import kernels
from apsadapt.mesh import perturbed_mesh
from apsadapt.remesh import MetricField, adapt_to_metric
mesh = perturbed_mesh(10, 10, jitter=0.25, seed=7)
x = mesh.vertices
metric = MetricField(np.full(mesh.nv, 0.15), 0.01 + 0.05 * np.abs(x[:, 1] - 0.5), np.full(mesh.nv, 0.2))
new, _ = adapt_to_metric(mesh, metric)
print(json.dumps({"backend": kernels.BACKEND, "p": new.vertices.tolist(), "t": new.triangles.tolist()}))
"""


def sample():
    mesh = perturbed_mesh(8, 6, jitter=0.25, seed=1)
    rng = np.random.default_rng(0)
    metric = MetricField(np.full(mesh.nv, 0.3), rng.uniform(0.02, 0.3, mesh.nv), rng.uniform(0, np.pi, mesh.nv))
    met = np.ascontiguousarray(metric.tensors())
    return mesh, met, np.ascontiguousarray(metric.log_tensors())


def test_selected_backend_is_compiled():
    assert kernels.BACKEND == "compiled"


@pytest.mark.parametrize("module", [pure, compiled])
def test_backends_export_same_functions(module):
    for name in ("collapse_pass", "edge_lengths", "flip_pass", "interpolate_metrics", "locate_points",
                 "qualities", "smooth_pass"):
        assert callable(getattr(module, name))


def test_edge_lengths_and_qualities_agree():
    mesh, met, _ = sample()
    p, e, t = np.array(mesh.vertices), np.array(mesh.edges), np.array(mesh.triangles)
    assert np.allclose(pure.edge_lengths(p, met, e), compiled.edge_lengths(p, met, e), rtol=1e-13)
    assert np.allclose(pure.qualities(p, met, t), compiled.qualities(p, met, t), rtol=1e-13)


def test_locate_and_interpolate_agree():
    mesh, _, logm = sample()
    p, t, nb = np.array(mesh.vertices), np.array(mesh.triangles), np.array(mesh.neighbors)
    pts = np.random.default_rng(3).uniform(0, 1, (300, 2))
    hints = _grid_hints(mesh, pts)
    a = pure.locate_points(p, t, nb, pts, hints.copy())
    b = compiled.locate_points(p, t, nb, pts, hints.copy())
    assert np.array_equal(a[0], b[0])
    assert np.allclose(a[1], b[1], rtol=0, atol=1e-14)
    out = []
    for mod in (pure, compiled):
        lg = np.zeros((len(pts), 3))
        mt = np.zeros((len(pts), 3))
        mod.interpolate_metrics(p, t, nb, logm, pts, hints.copy(), lg, mt, 0)
        out.append(mt)
    assert np.allclose(out[0], out[1], rtol=1e-12)


def test_full_remesh_identical_across_backends():
    env = dict(os.environ)
    runs = {}
    for flag in ("0", "1"):
        env["APSADAPT_PURE_PYTHON"] = flag
        res = subprocess.run([sys.executable, "-c", REMESH_SCRIPT], env=env, capture_output=True, text=True,
                             check=True, timeout=600)
        data = json.loads(res.stdout)
        runs[data["backend"]] = data
    assert set(runs) == {"compiled", "python"}
    assert runs["compiled"]["t"] == runs["python"]["t"]
    assert np.allclose(runs["compiled"]["p"], runs["python"]["p"], rtol=0, atol=1e-12)
