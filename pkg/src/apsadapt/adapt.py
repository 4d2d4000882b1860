"""Anisotropic adaptive loop: nodal directional indicators, size and
direction updates, metric construction and remeshing."""

import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimate import element_indicators
from .fem import solve_aps
from .mesh import audit, classify_boundary, perturbed_mesh
from .remesh import MetricField, adapt_to_metric, interpolate_vertex_field

VARIANTS = ("full", "simplified")
FRAMES = ("metric", "element")
COARSEN_FACTOR = {"full": 4.0, "simplified": 2.0}
REFINE_FACTOR = 2.0
TIE_TOL = 1e-10
# E^-1 E^-T for E mapping the right reference triangle onto the unit equilateral one
EQUILATERAL_GRAM = np.array([[2.0, -1.0], [-1.0, 2.0]]) * (2.0 / 3.0)


class AdaptError(RuntimeError):
    """Remesher or solver failure inside the loop; ``trace`` holds the
    iterations completed so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class AdaptConfig:
    tol: float
    max_iterations: int = 30
    indicator: str = "full"
    band: tuple = (0.75, 1.25)
    growth: float = 1.5
    shrink: float = 2.0 / 3.0
    h_min: float = 1e-5
    h_max: float = 0.5
    max_aspect: float = 2000.0
    consecutive: int = 2
    fixed_iterations: bool = False
    coarsen_factor: float = None  # None: 4 for full, 2 for simplified
    refine_factor: float = REFINE_FACTOR
    frame: str = "metric"  # "element": directions r_i of each triangle

    def __post_init__(self):
        if self.indicator not in VARIANTS:
            raise ValueError(f"indicator must be one of {VARIANTS}, got {self.indicator!r}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        lo, hi = self.band
        if not 0 < lo < 1 < hi:
            raise ValueError(f"band must satisfy 0 < low < 1 < high, got {self.band}")
        if not 0 < self.shrink < 1 < self.growth:
            raise ValueError("need 0 < shrink < 1 < growth")
        if not 0 < self.h_min < self.h_max:
            raise ValueError("need 0 < h_min < h_max")
        if self.max_aspect < 1:
            raise ValueError("max_aspect must be at least 1")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    @property
    def coarsen(self):
        return COARSEN_FACTOR[self.indicator] if self.coarsen_factor is None else self.coarsen_factor


TRACE_COLUMNS = [
    "iteration", "nv", "nt", "ratio", "err", "ar_max", "ar_avg",
    "ei_zz", "ei_a", "ei_sa", "in_band", "seconds",
]


@dataclass
class AdaptTrace:
    records: list = field(default_factory=list)
    status: str = "running"

    def append(self, **row):
        self.records.append(row)

    def __len__(self):
        return len(self.records)

    @property
    def last(self):
        return self.records[-1]

    def column(self, name):
        return [r[name] for r in self.records]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow([_fmt(r.get(c)) for c in TRACE_COLUMNS])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


@dataclass(frozen=True)
class NodalIndicators:
    eta4: np.ndarray  # (nv, 2) fourth powers per stretching direction
    lam: np.ndarray  # (nv, 2) mean stretching amplitudes


def _mean_lambda(mesh, per_corner):
    ptr, _ = mesh.vertex_to_triangles
    count = np.diff(ptr).astype(float)
    if np.any(count == 0):
        raise ValueError("isolated vertex")
    lam = np.zeros((mesh.nv, 2))
    for i in range(3):
        np.add.at(lam, mesh.triangles[:, i], per_corner[:, i])
    return lam / count[:, None]


def vertex_directional_indicators(report, mesh, variant, theta=None):
    """Per-vertex directional indicators and mean element stretchings.

    Without ``theta`` the directions are each triangle's own stretching
    directions ``r_i``. With ``theta`` they are the vertex frame
    ``(cos t, sin t)`` and its normal, and the stretching of a triangle
    along a unit vector ``d`` is ``|S^T d|`` with ``S`` the map from the unit
    equilateral triangle, which does not depend on the corner labelling.
    """
    geo = mesh.geometry
    if theta is None:
        lam = _mean_lambda(mesh, np.repeat(geo.lam[:, None, :], 3, axis=1))
        return NodalIndicators(np.array(report.eta_dir(variant), dtype=float), lam)
    t = np.asarray(theta)[mesh.triangles]  # (nt, 3)
    d = np.stack([np.stack([np.cos(t), np.sin(t)], -1), np.stack([-np.sin(t), np.cos(t)], -1)], axis=2)
    mmt = np.einsum("tik,kl,tjl->tij", geo.map_matrix, EQUILATERAL_GRAM, geo.map_matrix)
    w = combined_matrix(report, variant)
    s2 = np.einsum("tcjd,tde,tcje->tcj", d, mmt, d)  # (nt, 3, 2)
    wq = np.einsum("tcjd,tde,tcje->tcj", d, w, d)
    eta4 = np.zeros((mesh.nv, 2))
    for i in range(3):
        np.add.at(eta4, mesh.triangles[:, i], s2[:, i] * wq[:, i])
    return NodalIndicators(eta4, _mean_lambda(mesh, np.sqrt(s2)))


def thresholds(nv, tol, grad_norm_sq, band=(0.75, 1.25)):
    base = 3.0 / nv**2 * tol**4 * grad_norm_sq**2
    return base * band[0] ** 4, base * band[1] ** 4


def directional_sizes(nodal, config, grad_norm_sq):
    """Refine/coarsen/keep rule per direction, clamped, in input order."""
    nv = len(nodal.lam)
    if nv == 0 or not grad_norm_sq > 0:
        raise ValueError("need vertices and a nonzero discrete gradient")
    t_low, t_high = thresholds(nv, config.tol, grad_norm_sq, config.band)
    eta4, lam = nodal.eta4, nodal.lam
    h = np.where(config.coarsen * eta4 < t_low, config.growth * lam, lam)
    h = np.where(config.refine_factor * eta4 > t_high, config.shrink * lam, h)
    return np.clip(h, config.h_min, config.h_max)


def _clamp_aspect(h1, h2, max_aspect):
    return np.minimum(h1, max_aspect * h2), h2


def update_sizes(nodal, config, grad_norm_sq):
    """New sizes ``(h1, h2)`` per vertex with ``h1 >= h2``."""
    h = directional_sizes(nodal, config, grad_norm_sq)
    return _clamp_aspect(h.max(axis=1), h.min(axis=1), config.max_aspect)


def _sizes_and_direction(mesh, report, config, theta_prev):
    """``(h, theta, coarsen_all)``: per-direction sizes (nv, 2) paired with
    ``theta`` and its normal, and whether every direction coarsened."""
    variant = config.indicator
    theta = update_direction(mesh, report, variant, theta_prev)
    frame = None if config.frame == "element" else theta
    nodal = vertex_directional_indicators(report, mesh, variant, frame)
    h = directional_sizes(nodal, config, report.grad_norm_sq)
    t_low, _ = thresholds(mesh.nv, config.tol, report.grad_norm_sq, config.band)
    coarsen_all = bool(np.all(config.coarsen * nodal.eta4 < t_low))
    return h, theta, coarsen_all


def metric_update(mesh, report, config, theta_prev=None, return_state=False):
    """Sizes and stretch angle for the next mesh as a :class:`MetricField`.

    With ``return_state`` also reports whether every direction at every
    vertex fell in the coarsening branch.
    """
    h, theta, coarsen_all = _sizes_and_direction(mesh, report, config, theta_prev)
    if config.frame == "metric":
        swap = h[:, 1] > h[:, 0]
        theta = np.where(swap, np.mod(theta + 0.5 * np.pi, np.pi), theta)
    h1, h2 = _clamp_aspect(h.max(axis=1), h.min(axis=1), config.max_aspect)
    metric = MetricField(h1, h2, theta)
    return (metric, coarsen_all) if return_state else metric


def combined_matrix(report, variant):
    w = report.rho_phi_K[:, None, None] ** 2 * report.G_phi
    if variant == "full":
        w = w + report.rho_q_K[:, None, None] ** 2 * report.G_q
    return w


def update_direction(mesh, report, variant, previous=None):
    """Stretch angle per vertex in ``[0, pi)``: perpendicular to the largest
    eigenvector of the area-averaged error matrix. Ties keep ``previous``."""
    w = combined_matrix(report, variant) * mesh.geometry.area[:, None, None]
    wp = np.zeros((mesh.nv, 2, 2))
    for i in range(3):
        np.add.at(wp, mesh.triangles[:, i], w)
    a, b, c = wp[:, 0, 0], wp[:, 0, 1], wp[:, 1, 1]
    gap = np.hypot(a - c, 2.0 * b)
    scale = np.abs(a) + np.abs(c)
    major = 0.5 * np.arctan2(2.0 * b, a - c)
    theta = np.mod(major + 0.5 * np.pi, np.pi)
    prev = np.zeros(mesh.nv) if previous is None else np.asarray(previous, dtype=float)
    tie = gap <= TIE_TOL * scale
    tie |= scale == 0.0
    return np.where(tie, prev, theta)


def carry_direction(old, theta, new):
    """Transfer an angle field modulo pi by interpolating ``(cos 2t, sin 2t)``."""
    v = np.column_stack([np.cos(2 * theta), np.sin(2 * theta)])
    vi = interpolate_vertex_field(old, v, new.vertices)
    return np.mod(0.5 * np.arctan2(vi[:, 1], vi[:, 0]), np.pi)


def initial_mesh(seed=0):
    """Isotropic pseudo-unstructured start with h = 0.02."""
    return perturbed_mesh(50, 50, jitter=0.15, seed=seed)


def _record(trace, it, mesh, report, variant, band_hit, seconds):
    eff = report.effectivity
    aspect = mesh.geometry.aspect
    trace.append(
        iteration=it,
        nv=mesh.nv,
        nt=mesh.nt,
        ratio=float(report.relative(variant)),
        err=report.true_error.get("relative_h1"),
        ar_max=float(aspect.max()),
        ar_avg=float(aspect.mean()),
        ei_zz=eff.get("ZZ"),
        ei_a=eff.get("A"),
        ei_sa=eff.get("SA"),
        in_band=bool(band_hit),
        seconds=seconds,
    )


def adapt_loop(initial, problem, config, case=None, callback=None):
    """Solve, estimate and remesh until the relative indicator stays in the
    TOL band for ``config.consecutive`` iterations.

    Returns ``(mesh, solution, trace)`` for the last solved mesh. ``case``
    supplies exact gradients for the traced error and effectivities.
    """
    variant = config.indicator
    mesh = classify_boundary(initial, problem.field)
    trace = AdaptTrace()
    theta = None
    streak = 0
    previous_nv = -1
    lo, hi = config.band[0] * config.tol, config.band[1] * config.tol
    for it in range(config.max_iterations):
        t0 = time.perf_counter()
        try:
            sol = solve_aps(mesh, problem)
        except Exception as exc:
            trace.status = "failed"
            raise AdaptError(f"solve failed at iteration {it}: {exc}", trace) from exc
        report = element_indicators(mesh, sol, problem, case)
        ratio = report.relative(variant)
        in_band = lo <= ratio <= hi
        streak = streak + 1 if in_band else 0
        _record(trace, it, mesh, report, variant, in_band, time.perf_counter() - t0)
        if callback is not None:
            callback(it, mesh, sol, report)
        if not config.fixed_iterations and streak >= config.consecutive:
            trace.status = "converged"
            break
        if it == config.max_iterations - 1:
            trace.status = "max_iterations"
            break
        metric, coarsen_all = metric_update(mesh, report, config, theta, return_state=True)
        if coarsen_all and mesh.nv == previous_nv and not config.fixed_iterations:
            # the last pure-coarsening remesh left the mesh size unchanged
            trace.status = "saturated"
            break
        previous_nv = mesh.nv if coarsen_all else -1
        theta = metric.theta
        try:
            new, _ = adapt_to_metric(mesh, metric, b=problem.field)
            audit(new)
        except Exception as exc:
            trace.status = "failed"
            raise AdaptError(f"remesh failed at iteration {it}: {exc}", trace) from exc
        theta = carry_direction(mesh, theta, new)
        mesh = new
        trace.records[-1]["seconds"] = time.perf_counter() - t0
    return mesh, sol, trace


def config_dict(config):
    return asdict(config)
