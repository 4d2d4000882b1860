# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# Compiled build of the mesh kernels; the source of truth is _kernels.py.
include "_kernels.py"
