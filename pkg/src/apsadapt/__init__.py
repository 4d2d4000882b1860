"""Stabilized asymptotic-preserving P1 solver for strongly anisotropic
diffusion, with anisotropic a posteriori indicators and metric-driven
mesh adaptation on the unit square."""

from .adapt import AdaptConfig, AdaptError, AdaptTrace, adapt_loop, initial_mesh
from .estimate import IndicatorReport, element_indicators, zz_estimate
from .fem import ApsSolution, SolverError, h1_relative_error, solve_aps, solve_p_direct
from .kernels import BACKEND
from .mesh import (
    BoundaryKind,
    Mesh,
    MeshError,
    audit,
    build_structured_mesh,
    classify_boundary,
    element_geometry,
    perturbed_mesh,
    read_mesh,
    write_mesh,
)
from .problem import AnisotropyField, Coefficients, HypothesisError, ManufacturedCase, Problem, make_case, wavy_field
from .remesh import MetricField, adapt_to_metric
from .vtk import read_vtk, write_vtk

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig", "AdaptError", "AdaptTrace", "AnisotropyField", "ApsSolution", "BACKEND", "BoundaryKind",
    "Coefficients", "HypothesisError", "IndicatorReport", "ManufacturedCase", "Mesh", "MeshError",
    "MetricField", "Problem", "SolverError", "adapt_loop", "adapt_to_metric", "audit", "build_structured_mesh",
    "classify_boundary", "element_geometry", "element_indicators", "h1_relative_error", "initial_mesh",
    "make_case", "wavy_field", "perturbed_mesh", "read_mesh", "read_vtk", "solve_aps", "solve_p_direct",
    "write_mesh", "write_vtk", "zz_estimate",
]
