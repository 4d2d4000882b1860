"""Metric-driven local remeshing: edge splits, collapses, flips and smoothing.

The target is a unit mesh: every edge close to length 1 in the Riemannian
metric ``M = Q diag(1/h1^2, 1/h2^2) Q^T``, where the first column of ``Q``
is the stretch direction ``theta``. Metrics are interpolated from the
background mesh in the log-Euclidean sense.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .mesh import BoundaryKind, Mesh, MeshError, classify_boundary

SPLIT_LENGTH = np.sqrt(2.0)
COLLAPSE_LENGTH = 1.0 / np.sqrt(2.0)
MAX_CREATED_LENGTH = 1.3
ALIGN_ASPECT = 1.0  # metric anisotropy above which rows are straightened
ALIGN_ANGLE = np.tan(np.pi / 6)  # row edges: within 30 degrees of the stretch axis in metric space
ALIGN_MIN_AREA = 0.25  # a move may not shrink an incident triangle below this fraction


def metric_tensors(h1, h2, theta):
    """``(m11, m12, m22)`` per vertex."""
    c, s = np.cos(theta), np.sin(theta)
    a, b = 1.0 / np.asarray(h1) ** 2, 1.0 / np.asarray(h2) ** 2
    return np.column_stack([a * c * c + b * s * s, (a - b) * c * s, a * s * s + b * c * c])


def log_metric(h1, h2, theta):
    c, s = np.cos(theta), np.sin(theta)
    a, b = -2.0 * np.log(h1), -2.0 * np.log(h2)
    return np.column_stack([a * c * c + b * s * s, (a - b) * c * s, a * s * s + b * c * c])


def exp_metric(logm):
    """Inverse of :func:`log_metric` on stacked ``(l11, l12, l22)`` rows."""
    l11, l12, l22 = logm[:, 0], logm[:, 1], logm[:, 2]
    tr = 0.5 * (l11 + l22)
    d = 0.5 * (l11 - l22)
    r = np.hypot(d, l12)
    e1, e2 = np.exp(tr + r), np.exp(tr - r)
    safe = np.where(r > 1e-14, r, 1.0)
    c2 = np.where(r > 1e-14, d / safe, 1.0)
    s2 = np.where(r > 1e-14, l12 / safe, 0.0)
    cc, ss, cs = 0.5 * (1 + c2), 0.5 * (1 - c2), 0.5 * s2
    return np.column_stack([e1 * cc + e2 * ss, (e1 - e2) * cs, e1 * ss + e2 * cc])


def sizes_from_metric(met):
    """``(h1, h2, theta)`` with h1 >= h2 from stacked metric rows."""
    m11, m12, m22 = met[:, 0], met[:, 1], met[:, 2]
    tr = 0.5 * (m11 + m22)
    r = np.hypot(0.5 * (m11 - m22), m12)
    lo, hi = tr - r, tr + r
    # stretch axis = eigenvector of the smaller eigenvalue
    theta = 0.5 * np.arctan2(-2.0 * m12, m22 - m11)
    return 1.0 / np.sqrt(lo), 1.0 / np.sqrt(hi), np.mod(theta, np.pi)


@dataclass(frozen=True)
class MetricField:
    """Per-vertex target sizes ``h1 >= h2`` and stretch angle ``theta`` of
    the mesh they are attached to."""

    h1: np.ndarray
    h2: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.h2) <= 0) or np.any(np.asarray(self.h1) < np.asarray(self.h2)):
            raise ValueError("metric sizes must satisfy h1 >= h2 > 0")

    @classmethod
    def isotropic(cls, nv, h):
        return cls(np.full(nv, float(h)), np.full(nv, float(h)), np.zeros(nv))

    def tensors(self):
        return metric_tensors(self.h1, self.h2, self.theta)

    def log_tensors(self):
        return log_metric(self.h1, self.h2, self.theta)


@dataclass
class RemeshStats:
    sweeps: int = 0
    splits: int = 0
    collapses: int = 0
    flips: int = 0
    moves: int = 0
    history: list = field(default_factory=list)
    metric: tuple = None


def _topology(p, tri):
    m = Mesh(p, tri, np.empty((0, 2)), np.empty(0))
    return m


def _writable(a, dtype):
    # typed memoryviews in the kernels need writable buffers
    return np.array(a, dtype=dtype, order="C", copy=True)


def _signed_area(p, tri):
    a, b, c = p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _vertex_flags(p):
    tol = 1e-12
    x, y = p[:, 0], p[:, 1]
    f = np.zeros(len(p), dtype=np.int64)
    f |= np.where(np.abs(x) <= tol, 1, 0)
    f |= np.where(np.abs(x - 1.0) <= tol, 2, 0)
    f |= np.where(np.abs(y) <= tol, 4, 0)
    f |= np.where(np.abs(y - 1.0) <= tol, 8, 0)
    return f


class _Remesher:
    def __init__(self, mesh, metric):
        self.bp = _writable(mesh.vertices, float)
        self.btri = _writable(mesh.triangles, np.int64)
        self.bnbr = _writable(mesh.neighbors, np.int64)
        self.blog = np.ascontiguousarray(metric.log_tensors())
        self.p = self.bp.copy()
        self.tri = self.btri.copy()
        self.logm = self.blog.copy()
        self.met = np.ascontiguousarray(exp_metric(self.logm))
        self.flags = _vertex_flags(self.p)
        ptr, idx = mesh.vertex_to_triangles
        self.hint = np.ascontiguousarray(idx[ptr[:-1]], dtype=np.int64)
        self.stats = RemeshStats()

    def lengths(self, edges):
        return kernels.edge_lengths(self.p, self.met, np.ascontiguousarray(edges, dtype=np.int64))

    def split(self):
        topo = _topology(self.p, self.tri)
        edges, tri_edges, edge_tris = topo.edges, topo.tri_edges, topo.edge_triangles
        L = self.lengths(edges)
        cand = L > SPLIT_LENGTH
        if not cand.any():
            return 0
        rank = np.empty(len(L), dtype=np.int64)
        rank[np.argsort(L, kind="stable")] = np.arange(len(L))
        prio = np.where(cand, rank, -1)
        tri_best = prio[tri_edges].max(axis=1)
        t0, t1 = edge_tris[:, 0], edge_tris[:, 1]
        sel = cand & (prio == tri_best[t0]) & ((t1 < 0) | (prio == tri_best[np.maximum(t1, 0)]))
        chosen = np.flatnonzero(sel)
        ns = len(chosen)
        nv = len(self.p)
        new_id = np.full(len(edges), -1, dtype=np.int64)
        new_id[chosen] = nv + np.arange(ns)
        a, b = edges[chosen, 0], edges[chosen, 1]
        mid = 0.5 * (self.p[a] + self.p[b])
        fl = self.flags[a] & self.flags[b]
        # snap exactly onto the side
        mid[(fl & 1) != 0, 0] = 0.0
        mid[(fl & 2) != 0, 0] = 1.0
        mid[(fl & 4) != 0, 1] = 0.0
        mid[(fl & 8) != 0, 1] = 1.0
        self.p = np.ascontiguousarray(np.vstack([self.p, mid]))
        self.flags = np.concatenate([self.flags, fl])
        self.hint = np.concatenate([self.hint, self.hint[a]])
        self.logm = np.ascontiguousarray(np.vstack([self.logm, np.zeros((ns, 3))]))
        self.met = np.ascontiguousarray(np.vstack([self.met, np.zeros((ns, 3))]))
        kernels.interpolate_metrics(self.bp, self.btri, self.bnbr, self.blog, self.p, self.hint, self.logm, self.met, nv)

        loc = new_id[tri_edges]  # (nt, 3)
        t_idx, i_loc = np.nonzero(loc >= 0)
        m = loc[t_idx, i_loc]
        tri = self.tri
        vi = tri[t_idx, i_loc]
        vj = tri[t_idx, (i_loc + 1) % 3]
        vk = tri[t_idx, (i_loc + 2) % 3]
        new_tris = np.column_stack([vi, m, vk])
        tri = tri.copy()
        tri[t_idx] = np.column_stack([vi, vj, m])
        self.tri = np.ascontiguousarray(np.vstack([tri, new_tris]))
        return ns

    def collapse(self):
        topo = _topology(self.p, self.tri)
        edges = topo.edges
        L = self.lengths(edges)
        short = np.flatnonzero(L < COLLAPSE_LENGTH)
        if len(short) == 0:
            return 0
        order = short[np.argsort(L[short], kind="stable")]
        cand = np.ascontiguousarray(edges[order])
        ptr, idx = topo.vertex_to_triangles
        tri = np.ascontiguousarray(self.tri.copy())
        tri_alive = np.ones(len(tri), dtype=np.int8)
        vert_alive = np.ones(len(self.p), dtype=np.int8)
        n = kernels.collapse_pass(
            self.p, self.met, tri, tri_alive, vert_alive, self.flags, ptr, idx, cand, MAX_CREATED_LENGTH, 0.5
        )
        if n == 0:
            return 0
        tri = tri[tri_alive.astype(bool)]
        keep = vert_alive.astype(bool)
        new_index = np.cumsum(keep) - 1
        self.tri = np.ascontiguousarray(new_index[tri])
        self.p = np.ascontiguousarray(self.p[keep])
        self.flags = self.flags[keep]
        self.hint = np.ascontiguousarray(self.hint[keep])
        self.logm = np.ascontiguousarray(self.logm[keep])
        self.met = np.ascontiguousarray(self.met[keep])
        return n

    def flip(self, sweeps=4):
        topo = _topology(self.p, self.tri)
        nbr = np.ascontiguousarray(topo.neighbors.copy())
        tri = np.ascontiguousarray(self.tri.copy())
        n = kernels.flip_pass(self.p, self.met, tri, nbr, sweeps)
        self.tri = tri
        return n

    def smooth(self, relax=0.5):
        topo = _topology(self.p, self.tri)
        ptr, idx = topo.vertex_to_triangles
        return kernels.smooth_pass(
            self.p, self.met, self.logm, self.tri, self.flags, ptr, idx,
            self.bp, self.btri, self.bnbr, self.blog, self.hint, relax,
        )

    def align(self, relax=0.5):
        """Move vertices along the metric normal toward the mean normal
        offset of their row neighbours, so that rows follow the stretch
        axis. Moves that crush an incident triangle are undone."""
        h1, h2, th = sizes_from_metric(self.met)
        t = np.column_stack([np.cos(th), np.sin(th)])
        n = np.column_stack([-t[:, 1], t[:, 0]])
        e = _topology(self.p, self.tri).edges
        P = np.concatenate([e[:, 0], e[:, 1]])
        Q = np.concatenate([e[:, 1], e[:, 0]])
        d = self.p[Q] - self.p[P]
        dn = (d * n[P]).sum(axis=1)
        row = np.abs(dn / h2[P]) < ALIGN_ANGLE * np.abs((d * t[P]).sum(axis=1) / h1[P])
        nv = len(self.p)
        cnt = np.bincount(P[row], minlength=nv)
        off = np.bincount(P[row], dn[row], minlength=nv)
        movable = (cnt > 0) & (h1 >= ALIGN_ASPECT * h2)
        shift = np.where(movable, relax * off / np.maximum(cnt, 1), 0.0)[:, None] * n
        f = self.flags
        shift[(f & 3) != 0, 0] = 0.0
        shift[(f & 12) != 0, 1] = 0.0
        moved = np.abs(shift).sum(axis=1) > 0
        if not moved.any():
            return 0
        area0 = _signed_area(self.p, self.tri)
        new = self.p + shift
        for _ in range(20):
            bad = _signed_area(new, self.tri) < ALIGN_MIN_AREA * area0
            if not bad.any():
                break
            undo = np.unique(self.tri[bad])
            new[undo] = self.p[undo]
            moved[undo] = False
        else:
            return 0
        self.p = np.ascontiguousarray(new)
        kernels.interpolate_metrics(self.bp, self.btri, self.bnbr, self.blog, self.p, self.hint, self.logm, self.met, 0)
        return int(moved.sum())

    def run(self, max_sweeps, min_change):
        for sweep in range(max_sweeps):
            s = self.split()
            f = self.flip()
            c = self.collapse()
            f += self.flip()
            mv = self.smooth()
            f += self.flip()
            mv += self.align()
            f += self.flip()
            st = self.stats
            st.sweeps = sweep + 1
            st.splits += s
            st.collapses += c
            st.flips += f
            st.moves += mv
            st.history.append((len(self.p), s, c, f, mv))
            if s + c <= min_change * len(self.p):
                break
        for _ in range(2):
            self.smooth()
            self.flip()
            self.align()
            self.flip()
        return self.stats


def inherit_tags(old, new):
    """Tag each new boundary edge like the old boundary edge on the same side
    that contains its midpoint."""
    p_old, p_new = old.vertices, new.vertices
    e_old, e_new = old.boundary_edges, new.boundary_edges
    tags = np.full(len(e_new), BoundaryKind.UNCLASSIFIED, dtype=np.int8)
    mid_old = 0.5 * (p_old[e_old[:, 0]] + p_old[e_old[:, 1]])
    mid_new = 0.5 * (p_new[e_new[:, 0]] + p_new[e_new[:, 1]])
    for axis, value in ((0, 0.0), (0, 1.0), (1, 0.0), (1, 1.0)):
        on_old = np.flatnonzero(np.abs(mid_old[:, axis] - value) < 1e-12)
        on_new = np.flatnonzero(np.abs(mid_new[:, axis] - value) < 1e-12)
        if len(on_old) == 0 or len(on_new) == 0:
            continue
        other = 1 - axis
        lo = np.minimum(p_old[e_old[on_old, 0], other], p_old[e_old[on_old, 1], other])
        order = np.argsort(lo)
        pos = np.searchsorted(lo[order], mid_new[on_new, other], side="right") - 1
        tags[on_new] = old.boundary_tags[on_old[order[np.clip(pos, 0, len(order) - 1)]]]
    return tags


def adapt_to_metric(mesh, metric, b=None, max_sweeps=30, min_change=1e-3):
    """Remesh ``mesh`` so that its edges have unit length in ``metric``.

    Boundary edges are reclassified with the direction field ``b`` when
    given, otherwise inherited from ``mesh``. Returns ``(new_mesh, stats)``.
    """
    r = _Remesher(mesh, metric)
    stats = r.run(max_sweeps, min_change)
    new = Mesh.from_triangles(r.p, r.tri)
    if b is not None:
        new = classify_boundary(new, b)
    elif len(mesh.boundary_tags):
        new = Mesh(new.vertices, new.triangles, new.boundary_edges, inherit_tags(mesh, new))
    new.geometry  # raises MeshError on inverted elements
    stats.metric = (r.met, r.logm)
    return new, stats


def vertex_metric(background, metric, points):
    """Log-Euclidean interpolation of ``metric`` (on ``background``) at points."""
    tri, bary = locate(background, points)
    logm = np.einsum("ni,nik->nk", bary, metric.log_tensors()[background.triangles[tri]])
    return exp_metric(logm)


def locate(mesh, points, hints=None):
    pts = np.ascontiguousarray(points, dtype=float).reshape(-1, 2)
    if hints is None:
        hints = _grid_hints(mesh, pts)
    return kernels.locate_points(
        _writable(mesh.vertices, float), _writable(mesh.triangles, np.int64),
        _writable(mesh.neighbors, np.int64), _writable(pts, float), _writable(hints, np.int64),
    )


def _grid_hints(mesh, pts, cells=64):
    """Start triangles for point location: the triangle whose centroid falls
    in the same cell of a coarse grid (nearest filled cell otherwise)."""
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    ci = np.clip((cent * cells).astype(np.int64), 0, cells - 1)
    grid = np.full(cells * cells, -1, dtype=np.int64)
    grid[ci[:, 0] * cells + ci[:, 1]] = np.arange(mesh.nt)
    filled = np.flatnonzero(grid >= 0)
    pi = np.clip((pts * cells).astype(np.int64), 0, cells - 1)
    key = pi[:, 0] * cells + pi[:, 1]
    h = grid[key]
    miss = h < 0
    if miss.any():
        fx, fy = filled // cells, filled % cells
        d = (pi[miss, 0, None] - fx) ** 2 + (pi[miss, 1, None] - fy) ** 2
        h[miss] = grid[filled[np.argmin(d, axis=1)]]
    return h


def interpolate_vertex_field(old, values, points):
    """P1 interpolation of per-vertex ``values`` (nv, ...) of ``old`` at points."""
    tri, bary = locate(old, points)
    vals = np.asarray(values)[old.triangles[tri]]
    return np.einsum("ni,ni...->n...", bary, vals)


def metric_edge_lengths(mesh, metric_rows):
    """Metric length of every edge of ``mesh`` for per-vertex metric rows."""
    return kernels.edge_lengths(
        _writable(mesh.vertices, float), _writable(metric_rows, float), _writable(mesh.edges, np.int64)
    )


def unit_fraction(mesh, metric_rows, lo=0.5, hi=2.0):
    L = metric_edge_lengths(mesh, metric_rows)
    return float(np.mean((L >= lo) & (L <= hi)))


__all__ = [
    "MeshError",
    "MetricField",
    "adapt_to_metric",
    "exp_metric",
    "interpolate_vertex_field",
    "locate",
    "log_metric",
    "metric_tensors",
    "sizes_from_metric",
    "unit_fraction",
    "vertex_metric",
]
