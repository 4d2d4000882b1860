"""Triangulations of the unit square, element geometry and mesh I/O."""

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay

MAX_TRIANGLES = 2_000_000
BOUNDARY_TOL = 1e-10

# Side bits used to pin vertices to the unit-square boundary.
LEFT, RIGHT, BOTTOM, TOP = 1, 2, 4, 8


class MeshError(ValueError):
    pass


class BoundaryKind(IntEnum):
    DIRICHLET = 0
    INFLOW = 1
    OUTFLOW = 2
    UNCLASSIFIED = 3


_TAG_TEXT = {
    BoundaryKind.DIRICHLET: "D",
    BoundaryKind.INFLOW: "IN",
    BoundaryKind.OUTFLOW: "OUT",
    BoundaryKind.UNCLASSIFIED: "U",
}
_TEXT_TAG = {v: k for k, v in _TAG_TEXT.items()}


@dataclass(frozen=True)
class ElementGeometry:
    """Affine map ``x = M x_hat + t`` from the reference triangle and its SVD.

    ``map_matrix = r_factor.T @ diag(lambda1, lambda2) @ p_factor`` where the
    rows of ``r_factor`` are ``r1`` (direction of maximal stretching) and
    ``r2``.
    """

    map_matrix: np.ndarray
    translation: np.ndarray
    lambda1: float
    lambda2: float
    r1: np.ndarray
    r2: np.ndarray
    p_factor: np.ndarray
    h_k: float

    @property
    def r_factor(self):
        return np.vstack([self.r1, self.r2])

    @property
    def aspect_ratio(self):
        return self.lambda1 / self.lambda2


@dataclass(frozen=True)
class GeometryArrays:
    """Vectorized element geometry for a whole mesh."""

    map_matrix: np.ndarray  # (nt, 2, 2)
    translation: np.ndarray  # (nt, 2)
    lam: np.ndarray  # (nt, 2), lam[:, 0] >= lam[:, 1]
    r: np.ndarray  # (nt, 2, 2), r[:, i] is r_{i+1,K}
    p_factor: np.ndarray  # (nt, 2, 2)
    h: np.ndarray  # (nt,) longest edge
    area: np.ndarray  # (nt,)
    grads: np.ndarray  # (nt, 3, 2) P1 basis gradients, mesh vertex order

    @property
    def aspect(self):
        return self.lam[:, 0] / self.lam[:, 1]


def _as_index_array(a, width):
    a = np.ascontiguousarray(a, dtype=np.int64).reshape(-1, width)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with tagged boundary edges.

    Triangles are counterclockwise. ``boundary_edges`` are oriented as in
    their triangle, so the outward normal of edge ``(a, b)`` is the
    clockwise rotation of ``x_b - x_a``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", _as_index_array(self.triangles, 3))
        object.__setattr__(self, "boundary_edges", _as_index_array(self.boundary_edges, 2))
        tags = np.ascontiguousarray(self.boundary_tags, dtype=np.int8).reshape(-1)
        tags.setflags(write=False)
        object.__setattr__(self, "boundary_tags", tags)
        if len(self.triangles) > MAX_TRIANGLES:
            raise MeshError(f"{len(self.triangles)} triangles exceeds the {MAX_TRIANGLES} cap")
        if len(tags) != len(self.boundary_edges):
            raise MeshError("one tag per boundary edge required")

    @classmethod
    def from_triangles(cls, vertices, triangles, tags=None):
        """Build a mesh, orienting triangles and extracting boundary edges."""
        vertices = np.asarray(vertices, dtype=float)
        tri = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        p = vertices[tri]
        signed = _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        flip = signed < 0
        tri[flip] = tri[flip][:, [0, 2, 1]]
        edges = _boundary_edges(tri)
        if tags is None:
            tags = np.full(len(edges), BoundaryKind.UNCLASSIFIED)
        return cls(vertices, tri, edges, tags)

    @property
    def nv(self):
        return len(self.vertices)

    @property
    def nt(self):
        return len(self.triangles)

    @cached_property
    def vertex_to_triangles(self):
        """CSR pair ``(ptr, idx)``: triangles incident to vertex ``v`` are
        ``idx[ptr[v]:ptr[v + 1]]``, in increasing order."""
        return _csr(self.triangles, self.nv)

    @cached_property
    def _edge_data(self):
        tri = self.triangles
        a = tri[:, [1, 2, 0]].ravel()
        b = tri[:, [2, 0, 1]].ravel()
        key = np.minimum(a, b) * self.nv + np.maximum(a, b)
        uniq, inv = np.unique(key, return_inverse=True)
        edges = np.column_stack([uniq // self.nv, uniq % self.nv])
        tri_edges = inv.reshape(-1, 3)
        edge_tris = np.full((len(uniq), 2), -1, dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        first = np.ones(len(order), dtype=bool)
        first[1:] = inv[order][1:] != inv[order][:-1]
        half = order // 3
        edge_tris[inv[order][first], 0] = half[first]
        edge_tris[inv[order][~first], 1] = half[~first]
        if np.any(np.bincount(inv, minlength=len(uniq)) > 2):
            raise MeshError("non-manifold edge: more than two incident triangles")
        return edges, tri_edges, edge_tris

    @property
    def edges(self):
        """Unique edges ``(a, b)`` with ``a < b``."""
        return self._edge_data[0]

    @property
    def tri_edges(self):
        """Edge index of the edge opposite local vertex ``i`` of each triangle."""
        return self._edge_data[1]

    @property
    def edge_triangles(self):
        """The one or two triangles sharing each edge (``-1`` if boundary)."""
        return self._edge_data[2]

    @cached_property
    def neighbors(self):
        """``neighbors[t, i]`` is the triangle across the edge opposite vertex i."""
        et = self.edge_triangles[self.tri_edges]
        own = np.arange(self.nt)[:, None]
        return np.where(et[..., 0] == own, et[..., 1], et[..., 0])

    @cached_property
    def geometry(self):
        return _geometry(self.vertices, self.triangles)

    @cached_property
    def side_flags(self):
        """Bitmask of unit-square sides each vertex lies on."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        tol = 1e-12
        flags = np.zeros(self.nv, dtype=np.int64)
        flags |= np.where(np.abs(x) <= tol, LEFT, 0)
        flags |= np.where(np.abs(x - 1.0) <= tol, RIGHT, 0)
        flags |= np.where(np.abs(y) <= tol, BOTTOM, 0)
        flags |= np.where(np.abs(y - 1.0) <= tol, TOP, 0)
        return flags

    def boundary_normals(self):
        """Outward unit normals and lengths of the boundary edges."""
        p = self.vertices
        t = p[self.boundary_edges[:, 1]] - p[self.boundary_edges[:, 0]]
        length = np.hypot(t[:, 0], t[:, 1])
        n = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
        return n, length

    def dirichlet_mask(self):
        mask = np.zeros(self.nv, dtype=bool)
        d = self.boundary_edges[self.boundary_tags == BoundaryKind.DIRICHLET]
        mask[d.ravel()] = True
        return mask

    def total_area(self):
        return float(self.geometry.area.sum())


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _csr(tri, nv):
    flat = tri.ravel()
    order = np.argsort(flat, kind="stable")
    ptr = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(np.bincount(flat, minlength=nv), out=ptr[1:])
    return ptr, (order // 3).astype(np.int64)


def _boundary_edges(tri):
    a = tri[:, [0, 1, 2]].ravel()
    b = tri[:, [1, 2, 0]].ravel()
    n = int(tri.max()) + 1 if len(tri) else 0
    key = np.minimum(a, b) * n + np.maximum(a, b)
    uniq, counts = np.unique(key, return_counts=True)
    single = np.isin(key, uniq[counts == 1])
    return np.column_stack([a[single], b[single]])


def _geometry(p, tri):
    corners = p[tri]
    e0 = np.linalg.norm(corners[:, 2] - corners[:, 1], axis=1)
    e1 = np.linalg.norm(corners[:, 0] - corners[:, 2], axis=1)
    e2 = np.linalg.norm(corners[:, 1] - corners[:, 0], axis=1)
    lengths = np.column_stack([e0, e1, e2])
    h = lengths.max(axis=1)
    area = 0.5 * _cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    if np.any(area <= 1e-14 * h * h):
        bad = int(np.argmin(area / (h * h)))
        raise MeshError(f"degenerate or inverted triangle {bad} (area {area[bad]:.3e})")

    # The reference vertex (0,0) is mapped to the vertex opposite the longest
    # edge; cyclic rotation keeps the orientation.
    start = np.argmax(lengths, axis=1)
    rows = np.arange(len(tri))
    c0 = corners[rows, start]
    c1 = corners[rows, (start + 1) % 3]
    c2 = corners[rows, (start + 2) % 3]
    m = np.stack([c1 - c0, c2 - c0], axis=2)
    u, s, vt = np.linalg.svd(m)
    r = np.transpose(u, (0, 2, 1))

    # grad(lambda_i) is x_{i+2} - x_{i+1} rotated by +90 degrees, over 2|K|.
    d = corners[:, [2, 0, 1]] - corners[:, [1, 2, 0]]
    grads = np.stack([-d[..., 1], d[..., 0]], axis=2) / (2.0 * area)[:, None, None]
    return GeometryArrays(m, c0, s, r, vt, h, area, grads)


def element_geometry(mesh, k):
    """Affine-map geometry and SVD factors of triangle ``k``."""
    if not 0 <= k < mesh.nt:
        raise IndexError(f"triangle {k} out of range")
    g = mesh.geometry
    return ElementGeometry(
        map_matrix=g.map_matrix[k].copy(),
        translation=g.translation[k].copy(),
        lambda1=float(g.lam[k, 0]),
        lambda2=float(g.lam[k, 1]),
        r1=g.r[k, 0].copy(),
        r2=g.r[k, 1].copy(),
        p_factor=g.p_factor[k].copy(),
        h_k=float(g.h[k]),
    )


def build_structured_mesh(nx, ny, h1=None, h2=None):
    """Unit square split into ``nx x ny`` rectangles, alternating diagonals.

    Each triangle is listed starting from its right-angle vertex, so the
    element map of a ``h1 x h2`` rectangle half has singular values
    ``h1`` and ``h2``.
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be at least 1")
    h1 = 1.0 / nx if h1 is None else h1
    h2 = 1.0 / ny if h2 is None else h2
    if abs(nx * h1 - 1.0) > 1e-12 or abs(ny * h2 - 1.0) > 1e-12:
        raise MeshError("nx*h1 and ny*h2 must both equal 1")
    if 2 * nx * ny > MAX_TRIANGLES:
        raise MeshError(f"{2 * nx * ny} triangles exceeds the {MAX_TRIANGLES} cap")
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10, v01 = v00 + 1, v00 + nx + 1
    v11 = v01 + 1
    a = (i + j) % 2 == 0
    t1 = np.where(a[:, None], np.column_stack([v10, v11, v00]), np.column_stack([v00, v10, v01]))
    t2 = np.where(a[:, None], np.column_stack([v01, v00, v11]), np.column_stack([v11, v01, v10]))
    tri = np.empty((2 * len(i), 3), dtype=np.int64)
    tri[0::2], tri[1::2] = t1, t2
    return Mesh.from_triangles(verts, tri)


def perturbed_mesh(nx, ny, jitter=0.15, seed=0):
    """Pseudo-unstructured mesh: jittered grid points, Delaunay-triangulated.

    Interior points move by up to ``jitter`` times the local spacing in each
    direction, boundary points slide along their side, corners stay. The
    triangulation is Delaunay in coordinates scaled by the spacings, which
    keeps anisotropic families well shaped.
    """
    hx, hy = 1.0 / nx, 1.0 / ny
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-jitter, jitter, size=pts.shape) * np.array([hx, hy])
    on_x = (np.abs(pts[:, 0]) < 1e-14) | (np.abs(pts[:, 0] - 1.0) < 1e-14)
    on_y = (np.abs(pts[:, 1]) < 1e-14) | (np.abs(pts[:, 1] - 1.0) < 1e-14)
    shift[on_x, 0] = 0.0
    shift[on_y, 1] = 0.0
    pts = pts + shift
    scaled = pts / np.array([hx, hy])
    dt = Delaunay(scaled)
    if len(dt.coplanar):
        raise MeshError("Delaunay dropped input points")
    return Mesh.from_triangles(pts, dt.simplices)


def classify_boundary(mesh, b, tol=BOUNDARY_TOL):
    """Tag boundary edges by the sign of ``b . n`` at their midpoints.

    ``b`` maps an (n, 2) array of points to unit vectors.
    """
    p = mesh.vertices
    e = mesh.boundary_edges
    mid = 0.5 * (p[e[:, 0]] + p[e[:, 1]])
    n, _ = mesh.boundary_normals()
    bn = np.einsum("ij,ij->i", np.asarray(b(mid)), n)
    tags = np.where(
        np.abs(bn) <= tol,
        BoundaryKind.DIRICHLET,
        np.where(bn < 0, BoundaryKind.INFLOW, BoundaryKind.OUTFLOW),
    )
    return Mesh(mesh.vertices, mesh.triangles, mesh.boundary_edges, tags)


def audit(mesh, area=1.0, area_tol=1e-10):
    """Check orientation, conformity, boundary closure and total area.

    Raises MeshError on the first violation.
    """
    g = mesh.geometry  # raises on inverted or degenerate elements
    _ = mesh.edges  # raises on non-manifold edges
    boundary = mesh.edge_triangles[:, 1] < 0
    n_boundary = int(boundary.sum())
    if n_boundary != len(mesh.boundary_edges):
        raise MeshError(f"{n_boundary} single-triangle edges but {len(mesh.boundary_edges)} boundary edges")
    e = mesh.edges[boundary]
    flags = mesh.side_flags
    if np.any((flags[e[:, 0]] & flags[e[:, 1]]) == 0):
        raise MeshError("a boundary edge leaves the unit-square boundary (hanging node or hole)")
    used = np.zeros(mesh.nv, dtype=bool)
    used[mesh.triangles.ravel()] = True
    if not used.all():
        raise MeshError(f"{int((~used).sum())} vertices belong to no triangle")
    total = g.area.sum()
    if area is not None and abs(total - area) > area_tol:
        raise MeshError(f"total area {total!r} differs from {area}")
    ptr, idx = mesh.vertex_to_triangles
    counts = np.bincount(mesh.triangles.ravel(), minlength=mesh.nv)
    if not np.array_equal(np.diff(ptr), counts):
        raise MeshError("vertex-to-triangle map out of sync")
    return True


def write_mesh(mesh, path):
    """Write the ``aniso-mesh v1`` text format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("aniso-mesh v1\n")
        fh.write(f"{mesh.nv} {mesh.nt} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            fh.write(f"{i} {j} {_TAG_TEXT[BoundaryKind(tag)]}\n")


def read_mesh(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "aniso-mesh v1":
        raise MeshError(f"{path}: missing 'aniso-mesh v1' header")
    nv, nt, ne = (int(s) for s in lines[1].split())
    body = lines[2:]
    if len(body) != nv + nt + ne:
        raise MeshError(f"{path}: expected {nv + nt + ne} records, found {len(body)}")
    try:
        verts = np.array([[float(s) for s in ln.split()] for ln in body[:nv]]).reshape(-1, 2)
        tri = np.array([[int(s) for s in ln.split()] for ln in body[nv : nv + nt]]).reshape(-1, 3)
        edges, tags = [], []
        for ln in body[nv + nt :]:
            i, j, tag = ln.split()
            edges.append((int(i), int(j)))
            tags.append(_TEXT_TAG[tag])
    except (ValueError, KeyError) as exc:
        raise MeshError(f"{path}: malformed record ({exc})") from exc
    if len(tri) and (tri.min() < 0 or tri.max() >= nv):
        raise MeshError(f"{path}: triangle references a missing vertex")
    return Mesh(verts, tri, np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(tags))
