"""Gradient recovery and anisotropic residual error indicators."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .fem import discrete_gradients
from .mesh import BoundaryKind
from .quadrature import EDGE_POINTS, EDGE_WEIGHTS, RULES

RESIDUAL_DEGREE = 4
FD_STEP = 1e-6


@dataclass(frozen=True)
class RecoveredGradient:
    element_gradient: np.ndarray  # (nt, 2), raw constant gradient
    vertex_gradient: np.ndarray  # (nv, 2), area-weighted average
    differences: np.ndarray  # (nt, 3, 2), raw minus recovered at the corners

    def zz_at(self, bary):
        """ZZ error field on every element at barycentric points (nq, 3)."""
        return np.einsum("qi,tid->tqd", np.atleast_2d(bary), self.differences)


def recover_gradient(mesh, u):
    """Area-weighted vertex average of the elementwise gradients of ``u``."""
    g = discrete_gradients(mesh, u)
    area = mesh.geometry.area
    tri = mesh.triangles
    w = np.bincount(tri.ravel(), np.repeat(area, 3), minlength=mesh.nv)
    vg = np.column_stack(
        [np.bincount(tri.ravel(), np.repeat(area * g[:, d], 3), minlength=mesh.nv) for d in range(2)]
    )
    vg /= w[:, None]
    diff = g[:, None, :] - vg[tri]
    return RecoveredGradient(g, vg, diff)


def gradient_matrix(mesh, rg, k=None):
    """``int_K eta^ZZ (eta^ZZ)^T`` for element ``k`` or for all elements.

    The ZZ field is linear, so with corner values ``d_i``
    ``int_K d d^T = |K|/12 (sum_i d_i d_i^T + (sum_i d_i)(sum_i d_i)^T)``.
    """
    d = rg.differences if k is None else rg.differences[k : k + 1]
    area = mesh.geometry.area if k is None else mesh.geometry.area[k : k + 1]
    s = d.sum(axis=1)
    G = (np.einsum("tid,tie->tde", d, d) + s[:, :, None] * s[:, None, :]) * (area / 12.0)[:, None, None]
    return G if k is None else G[0]


def zz_estimate(mesh, u):
    G = gradient_matrix(mesh, recover_gradient(mesh, u))
    return float(np.sqrt(np.trace(G, axis1=1, axis2=2).sum()))


def matrix_divergence(problem, x, parallel=False):
    """Row divergence ``(div M)_j = sum_i d_i M_ij`` of ``A`` or of
    ``A_par b b^T`` at points ``x``."""
    coeffs = problem.coefficients
    if coeffs.constant and np.ndim(coeffs.a_perp) == 0:
        b, Jb, divb = problem.field.derivatives(x)
        div_bb = divb[:, None] * b + np.einsum("nij,nj->ni", Jb, b)
        a = float(coeffs.a_par)
        return (a if parallel else a - float(coeffs.a_perp)) * div_bb

    def mat(p):
        if parallel:
            b = problem.field(p)
            return coeffs.par(p)[:, None, None] * b[:, :, None] * b[:, None, :]
        return coeffs.matrix(problem.field, p, False)

    out = np.zeros((len(x), 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = FD_STEP
        out += (mat(x + e)[:, i, :] - mat(x - e)[:, i, :]) / (2 * FD_STEP)
    return out


def edge_tags(mesh):
    """Boundary kind of every unique edge, ``-1`` for interior edges."""
    tags = np.full(len(mesh.edges), -1, dtype=np.int64)
    be = np.sort(mesh.boundary_edges, axis=1)
    key = mesh.edges[:, 0] * mesh.nv + mesh.edges[:, 1]
    pos = np.searchsorted(key, be[:, 0] * mesh.nv + be[:, 1])
    tags[pos] = mesh.boundary_tags
    return tags


@dataclass
class _EdgeData:
    points: np.ndarray  # (nt, 3, 2, 2) Gauss points per local edge
    normals: np.ndarray  # (nt, 3, 2) outward
    lengths: np.ndarray  # (nt, 3)
    neighbor: np.ndarray  # (nt, 3)
    tag: np.ndarray  # (nt, 3), -1 interior


def _edge_data(mesh):
    p = mesh.vertices[mesh.triangles]
    a = p[:, [1, 2, 0]]
    b = p[:, [2, 0, 1]]
    t = b - a
    length = np.hypot(t[..., 0], t[..., 1])
    n = np.stack([t[..., 1], -t[..., 0]], axis=-1) / length[..., None]
    pts = a[:, :, None, :] + EDGE_POINTS[None, None, :, None] * t[:, :, None, :]
    tag = edge_tags(mesh)[mesh.tri_edges]
    return _EdgeData(pts, n, length, mesh.neighbors, tag)


def _edge_norm(values, ed):
    """``||.||_{L2(dK)}`` from values at the edge Gauss points (nt, 3, 2)."""
    return np.sqrt((ed.lengths[..., None] * EDGE_WEIGHTS * values**2).sum(axis=(1, 2)))


def _flux_jump(mats, grads, ed):
    """Normal jump of ``M grad u_h`` across each local edge.

    ``mats`` (nt, 3, 2, 2, 2): coefficient at the edge points; ``grads``
    (nt, 2). Dirichlet edges give zero, Neumann edges twice the missing
    flux (zero data minus the discrete flux).
    """
    own = np.einsum("tegij,tj->tegi", mats, grads)
    nb = np.where(ed.neighbor >= 0, ed.neighbor, 0)
    other = np.einsum("tegij,tej->tegi", mats, grads[nb])
    jump = np.einsum("tegi,tei->teg", own - other, ed.normals)
    flux = np.einsum("tegi,tei->teg", own, ed.normals)
    neumann = (ed.tag == BoundaryKind.INFLOW) | (ed.tag == BoundaryKind.OUTFLOW)
    jump = np.where((ed.tag < 0)[..., None], jump, 0.0)
    jump = np.where(neumann[..., None], -2.0 * flux, jump)
    return jump, flux


def _element_norm(values, weights, area):
    return np.sqrt(area * (values**2 @ weights))


def residual_weights(mesh, sol, problem):
    """``(rho_phi, rho_q)`` for all elements."""
    eps = sol.eps
    geo = mesh.geometry
    lam2 = geo.lam[:, 1]
    coeffs = problem.coefficients

    rule = RULES[RESIDUAL_DEGREE]
    xq = rule.points(mesh.vertices[mesh.triangles]).reshape(-1, 2)
    nq = len(rule.weights)
    gphi = discrete_gradients(mesh, sol.phi)
    gq = discrete_gradients(mesh, sol.q)
    gp = gphi - eps * gq

    f = np.asarray(problem.forcing(xq)).reshape(mesh.nt, nq)
    divA = matrix_divergence(problem, xq).reshape(mesh.nt, nq, 2)
    divP = matrix_divergence(problem, xq, parallel=True).reshape(mesh.nt, nq, 2)
    r_int = f + np.einsum("tqd,td->tq", divA, gphi) + (1 - eps) * np.einsum("tqd,td->tq", divP, gq)
    r_par = np.einsum("tqd,td->tq", divP, gp)
    r_stab = np.einsum("tqd,td->tq", divA, gq)

    ed = _edge_data(mesh)
    xe = ed.points.reshape(-1, 2)
    A_e = coeffs.matrix(problem.field, xe, False).reshape(mesh.nt, 3, 2, 2, 2)
    b = problem.field(xe)
    P_e = (coeffs.par(xe)[:, None, None] * b[:, :, None] * b[:, None, :]).reshape(mesh.nt, 3, 2, 2, 2)

    j_phi, _ = _flux_jump(A_e, gphi, ed)
    j_q, _ = _flux_jump(P_e, gq, ed)
    j_p, _ = _flux_jump(P_e, gp, ed)
    own_q = np.einsum("tegij,tj,tei->teg", A_e, gq, ed.normals)

    w = rule.weights
    area = geo.area
    edge_w = 1.0 / (2.0 * np.sqrt(lam2))
    rho_phi = (
        _element_norm(r_int, w, area)
        + edge_w * _edge_norm(j_phi, ed)
        + (1 - eps) * edge_w * _edge_norm(j_q, ed)
    )
    rho_q = (1 - eps) * (
        _element_norm(r_par, w, area)
        + edge_w * _edge_norm(j_p, ed)
        + lam2**2 * _element_norm(r_stab, w, area)
        + lam2**1.5 * _edge_norm(own_q, ed)
    )
    return rho_phi, rho_q


def _stretch_quadratic(geo, G):
    """``(lambda_i^2 r_i^T G r_i)`` for i = 1, 2, shape (nt, 2)."""
    rGr = np.einsum("tid,tde,tie->ti", geo.r, G, geo.r)
    return geo.lam**2 * rGr


@dataclass
class IndicatorReport:
    rho_phi_K: np.ndarray
    rho_q_K: np.ndarray
    G_phi: np.ndarray
    G_q: np.ndarray
    eta_phi_K: np.ndarray  # squared-indicator convention: eta_phi_K**2 = rho_phi * sqrt(...)
    eta_q_K: np.ndarray
    eta_dir_full_P: np.ndarray  # (nv, 2) fourth powers
    eta_dir_simpl_P: np.ndarray
    eta_P4_full: np.ndarray
    eta_P4_simpl: np.ndarray
    eta_global_zz: float
    eta_global_full: float
    eta_global_simpl: float
    grad_norm_sq: float
    aspect_K: np.ndarray
    effectivity: dict = field(default_factory=dict)
    true_error: dict = field(default_factory=dict)

    @property
    def eta_full_K(self):
        return np.sqrt(self.eta_phi_K**2 + self.eta_q_K**2)

    @property
    def eta_simpl_K(self):
        return self.eta_phi_K

    def eta_K(self, variant):
        return self.eta_full_K if variant == "full" else self.eta_simpl_K

    def eta_dir(self, variant):
        return self.eta_dir_full_P if variant == "full" else self.eta_dir_simpl_P

    def eta_global(self, variant):
        return self.eta_global_full if variant == "full" else self.eta_global_simpl

    def relative(self, variant):
        """Global indicator over ``|grad phi_h|_L2``."""
        return self.eta_global(variant) / np.sqrt(self.grad_norm_sq)


def _vertex_sum(mesh, per_element):
    """Sum per-element values (nt, ...) onto the three corner vertices."""
    out = np.zeros((mesh.nv,) + per_element.shape[1:])
    for i in range(3):
        np.add.at(out, mesh.triangles[:, i], per_element)
    return out


def error_norms(mesh, sol, problem, case):
    """True-error denominators of the effectivity indices."""
    rule = RULES[RESIDUAL_DEGREE]
    xq = rule.points(mesh.vertices[mesh.triangles]).reshape(-1, 2)
    nq = len(rule.weights)
    area = mesh.geometry.area
    eps = sol.eps
    e = case.grad_phi_exact(xq).reshape(mesh.nt, nq, 2) - discrete_gradients(mesh, sol.phi)[:, None, :]
    eq = case.grad_q_exact(xq).reshape(mesh.nt, nq, 2) - discrete_gradients(mesh, sol.q)[:, None, :]
    A = problem.coefficients.matrix(problem.field, xq, False).reshape(mesh.nt, nq, 2, 2)
    b = problem.field(xq).reshape(mesh.nt, nq, 2)
    apar = problem.coefficients.par(xq).reshape(mesh.nt, nq)

    def integrate(v):
        return float((area * (v @ rule.weights)).sum())

    grad_sq = integrate((e**2).sum(axis=2))
    energy = integrate(np.einsum("tqi,tqij,tqj->tq", e, A, e))
    par_q = integrate(apar * np.einsum("tqi,tqi->tq", b, eq) ** 2)
    return {"grad": grad_sq, "energy": energy, "energy_q": energy + eps * (1 - eps) * par_q}


def element_indicators(mesh, sol, problem, case=None):
    """Full and simplified anisotropic indicators, nodal values, globals and,
    when ``case`` provides exact gradients, effectivity indices."""
    geo = mesh.geometry
    rho_phi, rho_q = residual_weights(mesh, sol, problem)
    G_phi = gradient_matrix(mesh, recover_gradient(mesh, sol.phi))
    G_q = gradient_matrix(mesh, recover_gradient(mesh, sol.q))
    s_phi = _stretch_quadratic(geo, G_phi)
    s_q = _stretch_quadratic(geo, G_q)
    eta_phi2 = rho_phi * np.sqrt(np.maximum(s_phi.sum(axis=1), 0.0))
    eta_q2 = rho_q * np.sqrt(np.maximum(s_q.sum(axis=1), 0.0))
    eta_full2 = eta_phi2 + eta_q2

    dir_simpl = _vertex_sum(mesh, rho_phi[:, None] ** 2 * s_phi)
    dir_full = dir_simpl + _vertex_sum(mesh, rho_q[:, None] ** 2 * s_q)
    gphi = discrete_gradients(mesh, sol.phi)
    grad_norm_sq = float((geo.area * (gphi**2).sum(axis=1)).sum())

    report = IndicatorReport(
        rho_phi_K=rho_phi,
        rho_q_K=rho_q,
        G_phi=G_phi,
        G_q=G_q,
        eta_phi_K=np.sqrt(eta_phi2),
        eta_q_K=np.sqrt(eta_q2),
        eta_dir_full_P=dir_full,
        eta_dir_simpl_P=dir_simpl,
        eta_P4_full=_vertex_sum(mesh, eta_full2**2),
        eta_P4_simpl=_vertex_sum(mesh, eta_phi2**2),
        eta_global_zz=float(np.sqrt(np.trace(G_phi, axis1=1, axis2=2).sum())),
        eta_global_full=float(np.sqrt(eta_full2.sum())),
        eta_global_simpl=float(np.sqrt(eta_phi2.sum())),
        grad_norm_sq=grad_norm_sq,
        aspect_K=geo.aspect,
    )
    if case is not None:
        norms = error_norms(mesh, sol, problem, case)
        report.true_error = dict(norms, relative_h1=float(np.sqrt(norms["grad"] / grad_norm_sq)))

        def ratio(num, den):
            return num / np.sqrt(den) if den > 0 else None

        report.effectivity = {
            "ZZ": ratio(report.eta_global_zz, norms["grad"]),
            "A": ratio(report.eta_global_full, norms["energy_q"]),
            "SA": ratio(report.eta_global_simpl, norms["energy"]),
        }
    return report


ELEMENT_COLUMNS = ["element", "eta_full", "eta_simpl", "rho_phi", "rho_q", "lambda1", "lambda2", "aspect"]
SUMMARY_COLUMNS = ["eta_zz", "eta_full", "eta_simpl", "grad_norm", "ei_zz", "ei_a", "ei_sa", "rel_h1_error"]


def write_report_csv(report, mesh, path, summary_path=None):
    """Per-element rows to ``path``; globals and effectivities to
    ``summary_path`` (defaults to ``<path stem>_summary.csv``)."""
    lam = mesh.geometry.lam
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ELEMENT_COLUMNS)
        for k in range(mesh.nt):
            w.writerow(
                [k, f"{report.eta_full_K[k]:.10e}", f"{report.eta_simpl_K[k]:.10e}", f"{report.rho_phi_K[k]:.10e}",
                 f"{report.rho_q_K[k]:.10e}", f"{lam[k, 0]:.10e}", f"{lam[k, 1]:.10e}", f"{report.aspect_K[k]:.6g}"]
            )
    if summary_path is None:
        summary_path = str(path).rsplit(".", 1)[0] + "_summary.csv"
    eff = report.effectivity
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        w.writerow(
            [report.eta_global_zz, report.eta_global_full, report.eta_global_simpl, np.sqrt(report.grad_norm_sq),
             _fmt(eff.get("ZZ")), _fmt(eff.get("A")), _fmt(eff.get("SA")),
             _fmt(report.true_error.get("relative_h1"))]
        )
    return path, summary_path


def _fmt(v):
    return "" if v is None else f"{v:.6g}"
