"""Anisotropy fields, diffusion coefficients and manufactured solutions.

All point-wise functions take an ``(n, 2)`` array of points and are
vectorized over the first axis.
"""

from dataclasses import dataclass, field

import numpy as np

PI = np.pi


class HypothesisError(ValueError):
    """Raised when a field or coefficient violates the model assumptions."""


def _pts(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 2)


class AnisotropyField:
    """Unit direction ``b = B / |B|`` of a divergence-free field ``B``.

    Parameters
    ----------
    B : callable
        Maps points (n, 2) to vectors (n, 2).
    jacobian : callable, optional
        Maps points to ``dB_i/dx_j`` of shape (n, 2, 2). Central differences
        are used when omitted.
    alpha : float, optional
        Variation parameter, kept for bookkeeping.
    check : bool
        Sample ``|B| > 0`` and ``div B = 0`` on a 101 x 101 grid.
    """

    def __init__(self, B, jacobian=None, alpha=None, check=True):
        self._B = B
        self._jac = jacobian
        self.alpha = alpha
        if check:
            self._check()

    def _check(self):
        s = np.linspace(0.0, 1.0, 101)
        X, Y = np.meshgrid(s, s)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        norm = np.linalg.norm(self.B(pts), axis=1)
        if norm.min() < 1e-14:
            raise HypothesisError(f"B vanishes near {pts[np.argmin(norm)]}")
        inner = pts[(pts.min(axis=1) > 0.01) & (pts.max(axis=1) < 0.99)]
        div = _fd_jacobian(self.B, inner, 1e-5)
        div = div[:, 0, 0] + div[:, 1, 1]
        if np.abs(div).max() > 1e-6 * max(1.0, norm.max()):
            raise HypothesisError(f"div B = {np.abs(div).max():.2e} is not zero")

    def B(self, x):
        return np.asarray(self._B(_pts(x)), dtype=float).reshape(-1, 2)

    def jacobian_B(self, x):
        x = _pts(x)
        if self._jac is None:
            return _fd_jacobian(self.B, x, 1e-6)
        return np.asarray(self._jac(x), dtype=float).reshape(-1, 2, 2)

    def __call__(self, x):
        """Unit direction b at the points ``x``."""
        B = self.B(x)
        n = np.linalg.norm(B, axis=1)
        if np.any(n < 1e-14):
            raise HypothesisError("|B| < 1e-14: direction undefined")
        return B / n[:, None]

    def derivatives(self, x):
        """``(b, J_b, div b)`` with ``J_b[i, j] = d b_i / d x_j``."""
        B = self.B(x)
        n = np.linalg.norm(B, axis=1)
        b = B / n[:, None]
        JB = self.jacobian_B(x)
        proj = np.eye(2) - b[:, :, None] * b[:, None, :]
        Jb = np.einsum("nik,nkj->nij", proj, JB) / n[:, None, None]
        return b, Jb, Jb[:, 0, 0] + Jb[:, 1, 1]


def _fd_jacobian(fun, x, step):
    J = np.empty((len(x), 2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        J[:, :, j] = (fun(x + e) - fun(x - e)) / (2 * step)
    return J


def _level(x, alpha):
    """Field-line coordinate s = pi y + alpha (y^2 - y) cos(pi x) and its
    first and second derivatives."""
    X, Y = x[:, 0], x[:, 1]
    c, s_ = np.cos(PI * X), np.sin(PI * X)
    w = Y * Y - Y
    s = PI * Y + alpha * w * c
    sx = -PI * alpha * w * s_
    sy = PI + alpha * (2 * Y - 1) * c
    sxx = -PI * PI * alpha * w * c
    sxy = -PI * alpha * (2 * Y - 1) * s_
    syy = 2 * alpha * c
    return s, np.column_stack([sx, sy]), np.stack([np.column_stack([sxx, sxy]), np.column_stack([sxy, syy])], axis=1)


def wavy_field(alpha):
    """``B = (alpha (2y-1) cos(pi x) + pi, pi alpha (y^2-y) sin(pi x))``.

    B is the rotated gradient of the field-line coordinate, hence
    divergence free; alpha = 0 gives b = (1, 0).
    """

    def B(x):
        _, g, _ = _level(x, alpha)
        return np.column_stack([g[:, 1], -g[:, 0]])

    def jac(x):
        _, _, H = _level(x, alpha)
        return np.stack([H[:, 1, :], -H[:, 0, :]], axis=1)

    return AnisotropyField(B, jac, alpha=alpha)


def uniform_field(direction):
    d = np.asarray(direction, dtype=float)

    def B(x):
        return np.broadcast_to(d, (len(x), 2)).copy()

    def jac(x):
        return np.zeros((len(x), 2, 2))

    return AnisotropyField(B, jac, alpha=0.0)


def _as_function(v):
    if callable(v):
        return v
    return lambda x: np.full(len(x), float(v))


@dataclass(frozen=True)
class Coefficients:
    """``A_par`` (scalar) and ``A_perp = (I - bb) A~ (I - bb)``.

    ``a_par`` is a float or a callable of points. ``a_perp`` is a float, a
    scalar callable, or a callable returning (n, 2, 2) matrices ``A~``; it
    is projected so that ``A_perp b = A_perp^T b = 0`` holds by construction.
    """

    a_par: object = 1.0
    a_perp: object = 1.0
    eps: float = 1.0
    bounds: tuple = (1e-12, 1e12)

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise HypothesisError(f"eps must lie in (0, 1], got {self.eps}")

    @property
    def constant(self):
        return not callable(self.a_par) and not callable(self.a_perp)

    def par(self, x):
        v = _as_function(self.a_par)(_pts(x))
        lo, hi = self.bounds
        if np.any(v < lo) or np.any(v > hi):
            raise HypothesisError("A_par outside its bounds")
        return v

    def perp(self, x, b):
        x = _pts(x)
        proj = np.eye(2) - b[:, :, None] * b[:, None, :]
        raw = _as_function(self.a_perp)(x)
        raw = np.asarray(raw, dtype=float)
        if raw.ndim == 1:
            return raw[:, None, None] * proj
        return np.einsum("nij,njk,nkl->nil", proj, raw, proj)

    def matrix(self, field_, x, use_eps=False):
        """Diffusion matrix ``A`` (``use_eps=False``) or ``A_eps``."""
        x = _pts(x)
        b = field_(x)
        scale = 1.0 / self.eps if use_eps else 1.0
        bb = b[:, :, None] * b[:, None, :]
        return (scale * self.par(x))[:, None, None] * bb + self.perp(x, b)


def full_diffusion_matrix(coeffs, field_, x, use_eps=False):
    return coeffs.matrix(field_, x, use_eps)


def eval_b(field_, x):
    return field_(x)


def _layer_profile(s, delta):
    """F(s) = sin(s) exp(-((s - 0.5)/delta)^2) and its first two derivatives
    (plain sin(s) when delta == 0)."""
    sn, cs = np.sin(s), np.cos(s)
    if delta == 0:
        return sn, cs, -sn
    u = (s - 0.5) / delta
    G = np.exp(-u * u)
    G1 = -2.0 * u / delta * G
    G2 = (4.0 * u * u - 2.0) / (delta * delta) * G
    return sn * G, cs * G + sn * G1, -sn * G + 2.0 * cs * G1 + sn * G2


def _fluctuation(x):
    """psi = cos(2 pi x) sin(pi y) with gradient and Hessian."""
    X, Y = x[:, 0], x[:, 1]
    c2, s2 = np.cos(2 * PI * X), np.sin(2 * PI * X)
    cy, sy = np.cos(PI * Y), np.sin(PI * Y)
    psi = c2 * sy
    g = np.column_stack([-2 * PI * s2 * sy, PI * c2 * cy])
    hxy = -2 * PI * PI * s2 * cy
    H = np.stack([np.column_stack([-4 * PI * PI * psi, hxy]), np.column_stack([hxy, -PI * PI * psi])], axis=1)
    return psi, g, H


@dataclass(frozen=True)
class Problem:
    """What the solvers need: direction field, coefficients and load ``f``."""

    field: AnisotropyField
    coefficients: Coefficients
    forcing: object

    @property
    def eps(self):
        return self.coefficients.eps


@dataclass(frozen=True)
class ManufacturedCase:
    """``phi_eps = F(s) + eps psi`` with ``F(s) = sin(s) exp(-((s-0.5)/delta)^2)``.

    ``s`` is the field-line coordinate of :func:`wavy_field`, so the limit
    solution ``F(s)`` is constant along field lines. ``delta = 0`` drops the
    Gaussian factor. Coefficients are the constants ``a_par`` and
    ``a_perp`` (scalar perpendicular diffusion).
    """

    alpha: float = 0.0
    eps: float = 1.0
    delta: float = 0.0
    a_par: float = 1.0
    a_perp: float = 1.0
    field: AnisotropyField = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise HypothesisError(f"eps must lie in (0, 1], got {self.eps}")
        if self.alpha < 0 or self.delta < 0:
            raise HypothesisError("alpha and delta must be nonnegative")
        if self.field is None:
            object.__setattr__(self, "field", wavy_field(self.alpha))

    @property
    def coefficients(self):
        return Coefficients(self.a_par, self.a_perp, self.eps)

    @property
    def problem(self):
        return Problem(self.field, self.coefficients, self.forcing)

    def phi_limit(self, x):
        s, _, _ = _level(_pts(x), self.alpha)
        return _layer_profile(s, self.delta)[0]

    def grad_phi_limit(self, x):
        s, g, _ = _level(_pts(x), self.alpha)
        return _layer_profile(s, self.delta)[1][:, None] * g

    def phi_exact(self, x):
        x = _pts(x)
        return self.phi_limit(x) + self.eps * _fluctuation(x)[0]

    def grad_phi_exact(self, x):
        x = _pts(x)
        return self.grad_phi_limit(x) + self.eps * _fluctuation(x)[1]

    def q_exact(self, x):
        return _fluctuation(_pts(x))[0]

    def grad_q_exact(self, x):
        return _fluctuation(_pts(x))[1]

    def forcing(self, x):
        """``f = -div(A_eps grad phi_eps)``.

        With ``A_eps = c I + (a/eps - c) b b`` and ``b . grad F(s) = 0`` the
        singular part reduces to ``(a - c eps) div(b (b . grad psi))``, which
        stays bounded as eps -> 0.
        """
        x = _pts(x)
        s, gs, Hs = _level(x, self.alpha)
        _, F1, F2 = _layer_profile(s, self.delta)
        lap_limit = F2 * (gs * gs).sum(axis=1) + F1 * (Hs[:, 0, 0] + Hs[:, 1, 1])
        _, gpsi, Hpsi = _fluctuation(x)
        lap = lap_limit + self.eps * (Hpsi[:, 0, 0] + Hpsi[:, 1, 1])
        b, Jb, divb = self.field.derivatives(x)
        bg = (b * gpsi).sum(axis=1)
        D = divb * bg + np.einsum("ni,nij,nj->n", gpsi, Jb, b) + np.einsum("ni,nij,nj->n", b, Hpsi, b)
        c, a = self.a_perp, self.a_par
        return -c * lap - (a - c * self.eps) * D


def make_case(name, alpha=0.0, eps=1.0):
    """``smooth`` (no Gaussian layer) or ``layer`` (delta = 0.1)."""
    deltas = {"smooth": 0.0, "layer": 0.1}
    if name not in deltas:
        raise ValueError(f"unknown case {name!r}; expected one of {sorted(deltas)}")
    return ManufacturedCase(alpha=alpha, eps=eps, delta=deltas[name])
