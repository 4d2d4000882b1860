"""P1 assembly and solution of the P-model and the stabilized APS system."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import BoundaryKind
from .quadrature import RULES

COEFF_DEGREE = 2
LOAD_DEGREE = 4
ERROR_DEGREE = 4
REFINE_STEPS = 2
RESIDUAL_TOL = 1e-8


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_map: np.ndarray  # vertex -> row, -1 on Dirichlet vertices

    def __post_init__(self):
        n = self.matrix.shape
        if n[0] != n[1] or n[0] != len(self.rhs):
            raise ValueError(f"matrix {n} does not match rhs of length {len(self.rhs)}")


@dataclass(frozen=True)
class ApsSolution:
    phi: np.ndarray
    q: np.ndarray
    eps: float
    solver_stats: dict = field(default_factory=dict)

    @property
    def p(self):
        return self.phi - self.eps * self.q


def _quad_points(mesh, degree):
    rule = RULES[degree]
    return rule, rule.points(mesh.vertices[mesh.triangles])


def _assemble(mesh, kmat):
    """Global matrix from per-element coefficient matrices ``kmat`` (nt, 2, 2)
    already averaged over the element."""
    g = mesh.geometry
    local = np.einsum("tid,tde,tje->tij", g.grads, kmat, g.grads) * g.area[:, None, None]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    m = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.nv, mesh.nv)).tocsr()
    m.sum_duplicates()
    return m


def _averaged(mesh, fun, degree=COEFF_DEGREE):
    """Quadrature average over each element of a matrix-valued ``fun``."""
    rule, pts = _quad_points(mesh, degree)
    vals = fun(pts.reshape(-1, 2)).reshape(mesh.nt, len(rule.weights), 2, 2)
    return np.einsum("q,tqij->tij", rule.weights, vals)


def parallel_coefficient(problem, x):
    b = problem.field(x)
    a = problem.coefficients.par(x)
    return a[:, None, None] * b[:, :, None] * b[:, None, :]


def assemble_parallel_form(mesh, problem):
    """Matrix of ``int A_par (b . grad u)(b . grad v)``."""
    return _assemble(mesh, _averaged(mesh, lambda x: parallel_coefficient(problem, x)))


def assemble_full_form(mesh, problem, use_eps=False):
    """Stiffness matrix of the full diffusion tensor (``A_eps`` if ``use_eps``)."""
    c = problem.coefficients
    return _assemble(mesh, _averaged(mesh, lambda x: c.matrix(problem.field, x, use_eps)))


def stabilization_size(mesh):
    """``h_K = sqrt(2) lambda_2``: the small stretching of the element scaled
    so that the reference triangle gets its diameter. On anisotropic elements
    this follows the short direction instead of the longest edge."""
    return np.sqrt(2.0) * mesh.geometry.lam[:, 1]


def assemble_stabilization(mesh, problem):
    """Element stiffness of ``A`` weighted by ``h_K^2``."""
    c = problem.coefficients
    kmat = _averaged(mesh, lambda x: c.matrix(problem.field, x, False))
    return _assemble(mesh, kmat * (stabilization_size(mesh) ** 2)[:, None, None])


def assemble_load(mesh, forcing, degree=LOAD_DEGREE):
    rule, pts = _quad_points(mesh, degree)
    f = np.asarray(forcing(pts.reshape(-1, 2))).reshape(mesh.nt, -1)
    # P1 basis values at the points are the barycentric coordinates.
    local = np.einsum("q,tq,qi->ti", rule.weights, f, rule.bary) * mesh.geometry.area[:, None]
    return np.bincount(mesh.triangles.ravel(), local.ravel(), minlength=mesh.nv)


def dof_map(mesh):
    dirichlet = mesh.dirichlet_mask()
    if not dirichlet.any():
        if np.any(mesh.boundary_tags == BoundaryKind.UNCLASSIFIED):
            raise ValueError("mesh boundary is unclassified; call classify_boundary first")
        raise ValueError("no Dirichlet vertex: the problem is not well posed")
    dofs = np.full(mesh.nv, -1, dtype=np.int64)
    free = np.flatnonzero(~dirichlet)
    if len(free) == 0:
        raise ValueError("every vertex is on the Dirichlet boundary: nothing to solve")
    dofs[free] = np.arange(len(free))
    return dofs, free


def _factorize(matrix):
    try:
        lu = spla.splu(matrix.tocsc(), diag_pivot_thresh=1e-13)
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    piv = np.abs(lu.U.diagonal())
    if piv.min() == 0.0:
        raise SolverError(f"singular matrix: smallest pivot {piv.min():.3e} at row {int(piv.argmin())}")
    return lu, float(piv.min())


def _solve_refined(matrix, rhs, lu):
    x = lu.solve(rhs)
    for _ in range(REFINE_STEPS):
        x = x + lu.solve(rhs - matrix @ x)
    res = float(np.linalg.norm(rhs - matrix @ x))
    return x, res


def aps_system(mesh, problem):
    """Stabilized APS block system on the free vertices."""
    eps = problem.eps
    dofs, free = dof_map(mesh)
    A = assemble_full_form(mesh, problem)[free][:, free]
    P = assemble_parallel_form(mesh, problem)[free][:, free]
    S = assemble_stabilization(mesh, problem)[free][:, free]
    F = assemble_load(mesh, problem.forcing)[free]
    K = sp.bmat([[A, (1.0 - eps) * P], [P, -eps * P - S]], format="csr")
    return SparseSystem(K, np.concatenate([F, np.zeros(len(free))]), dofs)


def solve_aps(mesh, problem):
    sysm = aps_system(mesh, problem)
    n = len(sysm.rhs) // 2
    lu, pivot = _factorize(sysm.matrix)
    x, res = _solve_refined(sysm.matrix, sysm.rhs, lu)
    fnorm = float(np.linalg.norm(sysm.rhs))
    if res > RESIDUAL_TOL * max(fnorm, 1e-300) and fnorm > 0:
        raise SolverError(f"residual {res:.3e} exceeds {RESIDUAL_TOL:g} * |F| = {RESIDUAL_TOL * fnorm:.3e}")
    free = np.flatnonzero(sysm.dof_map >= 0)
    phi = np.zeros(mesh.nv)
    q = np.zeros(mesh.nv)
    phi[free] = x[:n]
    q[free] = x[n:]
    stats = {"unknowns": 2 * n, "residual": res, "rhs_norm": fnorm, "min_pivot": pivot, "refinement_steps": REFINE_STEPS}
    return ApsSolution(phi, q, problem.eps, stats)


def condition_estimate(matrix, lu=None, iterations=50, seed=0):
    """``lambda_max / lambda_min`` of an SPD matrix by power and inverse
    iteration."""
    if lu is None:
        lu, _ = _factorize(matrix)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(matrix.shape[0])
    w = v.copy()
    lmax = lmin_inv = 0.0
    for _ in range(iterations):
        v /= np.linalg.norm(v)
        v = matrix @ v
        lmax = np.linalg.norm(v)
        w /= np.linalg.norm(w)
        w = lu.solve(w)
        lmin_inv = np.linalg.norm(w)
    return float(lmax * lmin_inv)


def solve_p_direct(mesh, problem, condition=True):
    """Single-field P-model solve. Returns ``(phi, stats)``; on factorization
    failure ``phi`` is None and ``stats['error']`` holds the reason."""
    dofs, free = dof_map(mesh)
    K = assemble_full_form(mesh, problem, use_eps=True)[free][:, free].tocsr()
    F = assemble_load(mesh, problem.forcing)[free]
    stats = {"unknowns": len(free)}
    try:
        lu, pivot = _factorize(K)
    except SolverError as exc:
        stats["error"] = str(exc)
        return None, stats
    x, res = _solve_refined(K, F, lu)
    phi = np.zeros(mesh.nv)
    phi[free] = x
    stats.update(residual=res, rhs_norm=float(np.linalg.norm(F)), min_pivot=pivot)
    if condition:
        stats["condition"] = condition_estimate(K, lu)
    return phi, stats


def discrete_gradients(mesh, u):
    """Constant gradient of the P1 function ``u`` on each element (nt, 2)."""
    return np.einsum("tid,ti->td", mesh.geometry.grads, np.asarray(u)[mesh.triangles])


def h1_relative_error(mesh, sol, grad_exact):
    """``|grad(u_h - u)|_L2 / |grad u_h|_L2``. ``grad_exact`` is a callable
    or a case exposing ``grad_phi_exact``."""
    g = getattr(grad_exact, "grad_phi_exact", grad_exact)
    rule, pts = _quad_points(mesh, ERROR_DEGREE)
    gh = discrete_gradients(mesh, sol)
    ge = g(pts.reshape(-1, 2)).reshape(mesh.nt, -1, 2)
    err = np.einsum("q,tq->t", rule.weights, ((ge - gh[:, None, :]) ** 2).sum(axis=2))
    area = mesh.geometry.area
    den = float((area * (gh**2).sum(axis=1)).sum())
    if den == 0.0:
        raise ZeroDivisionError("discrete solution has zero gradient")
    return float(np.sqrt((area * err).sum() / den))
