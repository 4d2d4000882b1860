"""Sequential remeshing kernels.

Written in Cython's pure-Python mode: the module runs as plain Python and is
also compiled (through ``_ckernels.pyx``) into the extension that
:mod:`apsadapt.kernels` prefers at import.

Metrics are stored per vertex as ``(m11, m12, m22)``; log-metrics likewise.
Triangles are counterclockwise. ``nbr[t, i]`` is the triangle across the edge
opposite local vertex ``i`` (``-1`` on the boundary).
"""

import cython
import numpy as np

from cython.cimports.libc.math import exp, log, sqrt

SQRT3x4 = 6.928203230275509


@cython.cfunc
@cython.inline
@cython.exceptval(check=False)
def _orient(ax: cython.double, ay: cython.double, bx: cython.double, by: cython.double,
            cx: cython.double, cy: cython.double) -> cython.double:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@cython.cfunc
@cython.inline
@cython.exceptval(check=False)
def _mlen(m: cython.double[:, ::1], a: cython.Py_ssize_t, b: cython.Py_ssize_t,
          ex: cython.double, ey: cython.double) -> cython.double:
    """Metric length of vector (ex, ey) between vertices a and b, assuming
    geometric variation of the size along the edge."""
    la: cython.double = sqrt(max(m[a, 0] * ex * ex + 2.0 * m[a, 1] * ex * ey + m[a, 2] * ey * ey, 0.0))
    lb: cython.double = sqrt(max(m[b, 0] * ex * ex + 2.0 * m[b, 1] * ex * ey + m[b, 2] * ey * ey, 0.0))
    if la <= 0.0 or lb <= 0.0:
        return 0.5 * (la + lb)
    r: cython.double = la / lb
    if r > 0.999 and r < 1.001:
        return 0.5 * (la + lb)
    return (la - lb) / log(r)


@cython.cfunc
@cython.exceptval(check=False)
def _quality(p: cython.double[:, ::1], m: cython.double[:, ::1], a: cython.Py_ssize_t,
             b: cython.Py_ssize_t, c: cython.Py_ssize_t) -> cython.double:
    """Mean-ratio quality in the averaged vertex metric; 1 for a unit
    equilateral, <= 0 for inverted triangles."""
    m11: cython.double = (m[a, 0] + m[b, 0] + m[c, 0]) / 3.0
    m12: cython.double = (m[a, 1] + m[b, 1] + m[c, 1]) / 3.0
    m22: cython.double = (m[a, 2] + m[b, 2] + m[c, 2]) / 3.0
    det: cython.double = m11 * m22 - m12 * m12
    if det <= 0.0:
        return -1.0
    ar: cython.double = 0.5 * _orient(p[a, 0], p[a, 1], p[b, 0], p[b, 1], p[c, 0], p[c, 1])
    s: cython.double = 0.0
    ex: cython.double
    ey: cython.double
    ex = p[b, 0] - p[a, 0]
    ey = p[b, 1] - p[a, 1]
    s += m11 * ex * ex + 2.0 * m12 * ex * ey + m22 * ey * ey
    ex = p[c, 0] - p[b, 0]
    ey = p[c, 1] - p[b, 1]
    s += m11 * ex * ex + 2.0 * m12 * ex * ey + m22 * ey * ey
    ex = p[a, 0] - p[c, 0]
    ey = p[a, 1] - p[c, 1]
    s += m11 * ex * ex + 2.0 * m12 * ex * ey + m22 * ey * ey
    if s <= 0.0:
        return -1.0
    return SQRT3x4 * ar * sqrt(det) / s


@cython.cfunc
@cython.exceptval(check=False)
def _sym_exp(l11: cython.double, l12: cython.double, l22: cython.double,
             out: cython.double[:, ::1], row: cython.Py_ssize_t) -> cython.void:
    """Matrix exponential of a symmetric 2x2 matrix, written to out[row]."""
    tr: cython.double = 0.5 * (l11 + l22)
    d: cython.double = 0.5 * (l11 - l22)
    r: cython.double = sqrt(d * d + l12 * l12)
    e1: cython.double = exp(tr + r)
    e2: cython.double = exp(tr - r)
    if r < 1e-14:
        out[row, 0] = e1
        out[row, 1] = 0.0
        out[row, 2] = e1
        return
    # eigenvector of the larger eigenvalue: (cos t, sin t)
    c2: cython.double = d / r
    s2: cython.double = l12 / r
    cc: cython.double = 0.5 * (1.0 + c2)
    ss: cython.double = 0.5 * (1.0 - c2)
    cs: cython.double = 0.5 * s2
    out[row, 0] = e1 * cc + e2 * ss
    out[row, 1] = (e1 - e2) * cs
    out[row, 2] = e1 * ss + e2 * cc


@cython.cfunc
@cython.exceptval(check=False)
def _walk(bp: cython.double[:, ::1], btri: cython.longlong[:, ::1], bnbr: cython.longlong[:, ::1],
          x: cython.double, y: cython.double, start: cython.Py_ssize_t,
          bary: cython.double[::1]) -> cython.Py_ssize_t:
    """Containing background triangle of (x, y), by visibility walk from
    ``start``; falls back to the best triangle by exhaustive search.
    Barycentric coordinates are clamped to [0, 1] and renormalized."""
    nt: cython.Py_ssize_t = btri.shape[0]
    t: cython.Py_ssize_t = start
    if t < 0 or t >= nt:
        t = 0
    steps: cython.Py_ssize_t
    i: cython.Py_ssize_t
    worst: cython.Py_ssize_t
    a: cython.Py_ssize_t
    b: cython.Py_ssize_t
    c: cython.Py_ssize_t
    area: cython.double
    l0: cython.double
    l1: cython.double
    l2: cython.double
    lmin: cython.double
    best: cython.Py_ssize_t = -1
    best_val: cython.double = -1e300
    tol: cython.double = 1e-12
    for steps in range(4 * nt + 16):
        a = btri[t, 0]
        b = btri[t, 1]
        c = btri[t, 2]
        area = _orient(bp[a, 0], bp[a, 1], bp[b, 0], bp[b, 1], bp[c, 0], bp[c, 1])
        l0 = _orient(x, y, bp[b, 0], bp[b, 1], bp[c, 0], bp[c, 1]) / area
        l1 = _orient(bp[a, 0], bp[a, 1], x, y, bp[c, 0], bp[c, 1]) / area
        l2 = 1.0 - l0 - l1
        worst = 0
        lmin = l0
        if l1 < lmin:
            lmin = l1
            worst = 1
        if l2 < lmin:
            lmin = l2
            worst = 2
        if lmin > best_val:
            best_val = lmin
            best = t
        if lmin >= -tol:
            break
        if bnbr[t, worst] < 0:
            # Outside across a boundary edge; try the other negative side.
            if worst != 0 and l0 < -tol and bnbr[t, 0] >= 0:
                worst = 0
            elif worst != 1 and l1 < -tol and bnbr[t, 1] >= 0:
                worst = 1
            elif worst != 2 and l2 < -tol and bnbr[t, 2] >= 0:
                worst = 2
            else:
                break
        t = bnbr[t, worst]
    else:
        t = best
    if best_val < -1e-6:
        # Exhaustive fallback (point far outside or walk trapped).
        for i in range(nt):
            a = btri[i, 0]
            b = btri[i, 1]
            c = btri[i, 2]
            area = _orient(bp[a, 0], bp[a, 1], bp[b, 0], bp[b, 1], bp[c, 0], bp[c, 1])
            l0 = _orient(x, y, bp[b, 0], bp[b, 1], bp[c, 0], bp[c, 1]) / area
            l1 = _orient(bp[a, 0], bp[a, 1], x, y, bp[c, 0], bp[c, 1]) / area
            l2 = 1.0 - l0 - l1
            lmin = min(l0, min(l1, l2))
            if lmin > best_val:
                best_val = lmin
                best = i
                if lmin >= -tol:
                    break
        t = best
    a = btri[t, 0]
    b = btri[t, 1]
    c = btri[t, 2]
    area = _orient(bp[a, 0], bp[a, 1], bp[b, 0], bp[b, 1], bp[c, 0], bp[c, 1])
    l0 = max(_orient(x, y, bp[b, 0], bp[b, 1], bp[c, 0], bp[c, 1]) / area, 0.0)
    l1 = max(_orient(bp[a, 0], bp[a, 1], x, y, bp[c, 0], bp[c, 1]) / area, 0.0)
    l2 = max(_orient(bp[a, 0], bp[a, 1], bp[b, 0], bp[b, 1], x, y) / area, 0.0)
    area = l0 + l1 + l2
    bary[0] = l0 / area
    bary[1] = l1 / area
    bary[2] = l2 / area
    return t


@cython.cfunc
@cython.exceptval(check=False)
def _interp_metric(bp: cython.double[:, ::1], btri: cython.longlong[:, ::1], bnbr: cython.longlong[:, ::1],
                   blog: cython.double[:, ::1], x: cython.double, y: cython.double,
                   hint: cython.longlong[::1], v: cython.Py_ssize_t,
                   logm: cython.double[:, ::1], met: cython.double[:, ::1],
                   bary: cython.double[::1]) -> cython.void:
    t: cython.Py_ssize_t = _walk(bp, btri, bnbr, x, y, hint[v], bary)
    hint[v] = t
    k: cython.Py_ssize_t
    j: cython.Py_ssize_t
    for k in range(3):
        logm[v, k] = 0.0
        for j in range(3):
            logm[v, k] += bary[j] * blog[btri[t, j], k]
    _sym_exp(logm[v, 0], logm[v, 1], logm[v, 2], met, v)


def locate_points(bp: cython.double[:, ::1], btri: cython.longlong[:, ::1], bnbr: cython.longlong[:, ::1],
                  pts: cython.double[:, ::1], hints: cython.longlong[::1]):
    """Containing triangle and barycentric coordinates for every point."""
    n: cython.Py_ssize_t = pts.shape[0]
    tri_out = np.empty(n, dtype=np.int64)
    bary_out = np.empty((n, 3), dtype=np.float64)
    tv: cython.longlong[::1] = tri_out
    bv: cython.double[:, ::1] = bary_out
    bary = np.empty(3, dtype=np.float64)
    bb: cython.double[::1] = bary
    i: cython.Py_ssize_t
    for i in range(n):
        tv[i] = _walk(bp, btri, bnbr, pts[i, 0], pts[i, 1], hints[i], bb)
        bv[i, 0] = bb[0]
        bv[i, 1] = bb[1]
        bv[i, 2] = bb[2]
    return tri_out, bary_out


def interpolate_metrics(bp: cython.double[:, ::1], btri: cython.longlong[:, ::1], bnbr: cython.longlong[:, ::1],
                        blog: cython.double[:, ::1], pts: cython.double[:, ::1], hint: cython.longlong[::1],
                        logm: cython.double[:, ::1], met: cython.double[:, ::1], first: cython.Py_ssize_t):
    """Log-Euclidean metric interpolation for vertices ``first:``."""
    bary = np.empty(3, dtype=np.float64)
    bb: cython.double[::1] = bary
    v: cython.Py_ssize_t
    for v in range(first, pts.shape[0]):
        _interp_metric(bp, btri, bnbr, blog, pts[v, 0], pts[v, 1], hint, v, logm, met, bb)


def edge_lengths(p: cython.double[:, ::1], m: cython.double[:, ::1], edges: cython.longlong[:, ::1]):
    n: cython.Py_ssize_t = edges.shape[0]
    out = np.empty(n, dtype=np.float64)
    ov: cython.double[::1] = out
    i: cython.Py_ssize_t
    a: cython.Py_ssize_t
    b: cython.Py_ssize_t
    for i in range(n):
        a = edges[i, 0]
        b = edges[i, 1]
        ov[i] = _mlen(m, a, b, p[b, 0] - p[a, 0], p[b, 1] - p[a, 1])
    return out


def qualities(p: cython.double[:, ::1], m: cython.double[:, ::1], tri: cython.longlong[:, ::1]):
    n: cython.Py_ssize_t = tri.shape[0]
    out = np.empty(n, dtype=np.float64)
    ov: cython.double[::1] = out
    i: cython.Py_ssize_t
    for i in range(n):
        ov[i] = _quality(p, m, tri[i, 0], tri[i, 1], tri[i, 2])
    return out


def collapse_pass(p: cython.double[:, ::1], m: cython.double[:, ::1], tri: cython.longlong[:, ::1],
                  tri_alive: cython.schar[::1], vert_alive: cython.schar[::1], flags: cython.longlong[::1],
                  vptr: cython.longlong[::1], vidx: cython.longlong[::1],
                  cand: cython.longlong[:, ::1], max_new_length: cython.double,
                  min_quality_ratio: cython.double) -> cython.Py_ssize_t:
    """Collapse short edges ``cand`` (in priority order) when valid.

    A vertex ``v`` may be merged into ``w`` if ``v`` is not a corner, every
    side ``v`` lies on is also a side of ``w``, the link condition holds, no
    surviving triangle inverts, no created edge exceeds ``max_new_length`` in
    the metric and the worst quality of the star does not drop below
    ``min_quality_ratio`` times its previous value. The star of a collapsed
    vertex is locked for the rest of the pass, so the vertex-to-triangle map
    stays valid for every unlocked vertex.
    """
    nv: cython.Py_ssize_t = p.shape[0]
    lock = np.zeros(nv, dtype=np.int8)
    lk: cython.schar[::1] = lock
    mark = np.full(nv, -1, dtype=np.int64)
    mk: cython.longlong[::1] = mark
    count: cython.Py_ssize_t = 0
    e: cython.Py_ssize_t
    side: cython.Py_ssize_t
    v: cython.Py_ssize_t
    w: cython.Py_ssize_t
    k: cython.Py_ssize_t
    t: cython.Py_ssize_t
    j: cython.Py_ssize_t
    x: cython.Py_ssize_t
    shared: cython.Py_ssize_t
    common: cython.Py_ssize_t
    ok: cython.bint
    a: cython.Py_ssize_t
    b: cython.Py_ssize_t
    c: cython.Py_ssize_t
    qold: cython.double
    qnew: cython.double
    q: cython.double
    for e in range(cand.shape[0]):
        for side in range(2):
            if side == 0:
                v = cand[e, 0]
                w = cand[e, 1]
            else:
                v = cand[e, 1]
                w = cand[e, 0]
            if lk[v] or lk[w] or not vert_alive[v] or not vert_alive[w]:
                break
            # corners never move; boundary vertices only along their side
            if flags[v] != 0:
                if (flags[v] & (flags[v] - 1)) != 0:
                    continue
                if (flags[v] & flags[w]) != flags[v]:
                    continue
            # link of w, stamped with e * 2 + side
            for k in range(vptr[w], vptr[w + 1]):
                t = vidx[k]
                if not tri_alive[t]:
                    continue
                for j in range(3):
                    mk[tri[t, j]] = e * 2 + side
            shared = 0
            common = 0
            ok = True
            qold = 2.0
            qnew = 2.0
            for k in range(vptr[v], vptr[v + 1]):
                t = vidx[k]
                if not tri_alive[t]:
                    continue
                a = tri[t, 0]
                b = tri[t, 1]
                c = tri[t, 2]
                q = _quality(p, m, a, b, c)
                if q < qold:
                    qold = q
                if a == w or b == w or c == w:
                    shared += 1
                    continue
                for j in range(3):
                    x = tri[t, j]
                    if x != v and mk[x] == e * 2 + side:
                        common += 1
                # triangle t with v replaced by w
                if a == v:
                    a = w
                elif b == v:
                    b = w
                else:
                    c = w
                if _orient(p[a, 0], p[a, 1], p[b, 0], p[b, 1], p[c, 0], p[c, 1]) <= 0.0:
                    ok = False
                    break
                q = _quality(p, m, a, b, c)
                if q < qnew:
                    qnew = q
                for j in range(3):
                    x = tri[t, j]
                    if x != v and x != w:
                        if _mlen(m, w, x, p[x, 0] - p[w, 0], p[x, 1] - p[w, 1]) > max_new_length:
                            ok = False
            if not ok or shared == 0:
                continue
            # the vertices opposite the removed edge sit in exactly one
            # surviving triangle each; any other common neighbor pinches.
            if common != shared:
                continue
            if flags[v] != 0 and shared != 1:
                continue
            if qnew < min_quality_ratio * qold:
                continue
            # apply
            for k in range(vptr[v], vptr[v + 1]):
                t = vidx[k]
                if not tri_alive[t]:
                    continue
                for j in range(3):
                    lk[tri[t, j]] = 1
                if tri[t, 0] == w or tri[t, 1] == w or tri[t, 2] == w:
                    tri_alive[t] = 0
                    continue
                for j in range(3):
                    if tri[t, j] == v:
                        tri[t, j] = w
            vert_alive[v] = 0
            count += 1
            break
    return count


@cython.cfunc
@cython.exceptval(check=False)
def _replace_nbr(nbr: cython.longlong[:, ::1], t: cython.Py_ssize_t, old: cython.Py_ssize_t,
                 new: cython.Py_ssize_t) -> cython.void:
    j: cython.Py_ssize_t
    if t < 0:
        return
    for j in range(3):
        if nbr[t, j] == old:
            nbr[t, j] = new
            return


@cython.cfunc
@cython.exceptval(check=False)
def _incircle_metric(p: cython.double[:, ::1], m: cython.double[:, ::1], a: cython.Py_ssize_t,
                     b: cython.Py_ssize_t, c: cython.Py_ssize_t, d: cython.Py_ssize_t) -> cython.double:
    """In-circle predicate of d against (a, b, c) after mapping by the
    Cholesky factor of the mean metric of the four vertices (> 0: inside)."""
    m11: cython.double = 0.25 * (m[a, 0] + m[b, 0] + m[c, 0] + m[d, 0])
    m12: cython.double = 0.25 * (m[a, 1] + m[b, 1] + m[c, 1] + m[d, 1])
    m22: cython.double = 0.25 * (m[a, 2] + m[b, 2] + m[c, 2] + m[d, 2])
    l11: cython.double = sqrt(m11)
    l21: cython.double = m12 / l11
    l22: cython.double = sqrt(max(m22 - l21 * l21, 1e-300))
    # x -> L^T x with M = L L^T; work relative to d for conditioning.
    ax: cython.double = p[a, 0] - p[d, 0]
    ay: cython.double = p[a, 1] - p[d, 1]
    bx: cython.double = p[b, 0] - p[d, 0]
    by: cython.double = p[b, 1] - p[d, 1]
    cx: cython.double = p[c, 0] - p[d, 0]
    cy: cython.double = p[c, 1] - p[d, 1]
    u: cython.double
    u = l11 * ax + l21 * ay
    ay = l22 * ay
    ax = u
    u = l11 * bx + l21 * by
    by = l22 * by
    bx = u
    u = l11 * cx + l21 * cy
    cy = l22 * cy
    cx = u
    a2: cython.double = ax * ax + ay * ay
    b2: cython.double = bx * bx + by * by
    c2: cython.double = cx * cx + cy * cy
    det: cython.double = ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
    scale: cython.double = (a2 + b2 + c2)
    return det / (scale * scale + 1e-300)


def flip_pass(p: cython.double[:, ::1], m: cython.double[:, ::1], tri: cython.longlong[:, ::1],
              nbr: cython.longlong[:, ::1], max_sweeps: cython.Py_ssize_t) -> cython.Py_ssize_t:
    """Delaunay-in-metric edge flips; keeps ``nbr`` consistent.

    For t = (a, b, c) and its neighbor u = (d, c, b) across edge bc the flip
    produces t' = (a, b, d) and u' = (a, d, c).
    """
    nt: cython.Py_ssize_t = tri.shape[0]
    total: cython.Py_ssize_t = 0
    flips: cython.Py_ssize_t
    sweep: cython.Py_ssize_t
    t: cython.Py_ssize_t
    i: cython.Py_ssize_t
    u: cython.Py_ssize_t
    j: cython.Py_ssize_t
    a: cython.Py_ssize_t
    b: cython.Py_ssize_t
    c: cython.Py_ssize_t
    d: cython.Py_ssize_t
    nt_c: cython.Py_ssize_t
    nt_b: cython.Py_ssize_t
    nu_b: cython.Py_ssize_t
    nu_c: cython.Py_ssize_t
    jb: cython.Py_ssize_t
    jc: cython.Py_ssize_t
    qold: cython.double
    qnew: cython.double
    for sweep in range(max_sweeps):
        flips = 0
        for t in range(nt):
            for i in range(3):
                u = nbr[t, i]
                if u < 0 or u < t:
                    continue
                a = tri[t, i]
                b = tri[t, (i + 1) % 3]
                c = tri[t, (i + 2) % 3]
                j = 0
                while j < 3 and (tri[u, j] == b or tri[u, j] == c):
                    j += 1
                d = tri[u, j]
                if _incircle_metric(p, m, a, b, c, d) <= 1e-10:
                    continue
                if _orient(p[a, 0], p[a, 1], p[b, 0], p[b, 1], p[d, 0], p[d, 1]) <= 0.0:
                    continue
                if _orient(p[a, 0], p[a, 1], p[d, 0], p[d, 1], p[c, 0], p[c, 1]) <= 0.0:
                    continue
                qold = min(_quality(p, m, a, b, c), _quality(p, m, d, c, b))
                qnew = min(_quality(p, m, a, b, d), _quality(p, m, a, d, c))
                if qnew <= qold:
                    continue
                nt_c = nbr[t, (i + 2) % 3]  # across (a, b)
                nt_b = nbr[t, (i + 1) % 3]  # across (c, a)
                jb = 0
                while tri[u, jb] != b:
                    jb += 1
                jc = 0
                while tri[u, jc] != c:
                    jc += 1
                nu_b = nbr[u, jb]  # across (d, c)
                nu_c = nbr[u, jc]  # across (b, d)
                tri[t, 0] = a
                tri[t, 1] = b
                tri[t, 2] = d
                nbr[t, 0] = nu_c
                nbr[t, 1] = u
                nbr[t, 2] = nt_c
                tri[u, 0] = a
                tri[u, 1] = d
                tri[u, 2] = c
                nbr[u, 0] = nu_b
                nbr[u, 1] = nt_b
                nbr[u, 2] = t
                _replace_nbr(nbr, nu_c, u, t)
                _replace_nbr(nbr, nt_b, t, u)
                flips += 1
                break
        total += flips
        if flips == 0:
            break
    return total


def smooth_pass(p: cython.double[:, ::1], m: cython.double[:, ::1], logm: cython.double[:, ::1],
                tri: cython.longlong[:, ::1], flags: cython.longlong[::1],
                vptr: cython.longlong[::1], vidx: cython.longlong[::1],
                bp: cython.double[:, ::1], btri: cython.longlong[:, ::1], bnbr: cython.longlong[:, ::1],
                blog: cython.double[:, ::1], hint: cython.longlong[::1],
                relax: cython.double) -> cython.Py_ssize_t:
    """Move each vertex toward the mean of the points at unit metric distance
    from its neighbors. Boundary vertices slide along their side; corners are
    fixed. A move is kept only if the star stays valid and its worst quality
    does not decrease."""
    nv: cython.Py_ssize_t = p.shape[0]
    moved: cython.Py_ssize_t = 0
    bary = np.empty(3, dtype=np.float64)
    bb: cython.double[::1] = bary
    v: cython.Py_ssize_t
    k: cython.Py_ssize_t
    t: cython.Py_ssize_t
    j: cython.Py_ssize_t
    x: cython.Py_ssize_t
    n: cython.Py_ssize_t
    ok: cython.bint
    tx: cython.double
    ty: cython.double
    l: cython.double
    ox: cython.double
    oy: cython.double
    nx: cython.double
    ny: cython.double
    qold: cython.double
    qnew: cython.double
    q: cython.double
    o0: cython.double
    o1: cython.double
    o2: cython.double
    lo0: cython.double
    lo1: cython.double
    lo2: cython.double
    oh: cython.longlong
    for v in range(nv):
        if vptr[v] == vptr[v + 1]:
            continue
        if flags[v] != 0 and (flags[v] & (flags[v] - 1)) != 0:
            continue
        ox = p[v, 0]
        oy = p[v, 1]
        tx = 0.0
        ty = 0.0
        n = 0
        qold = 2.0
        for k in range(vptr[v], vptr[v + 1]):
            t = vidx[k]
            q = _quality(p, m, tri[t, 0], tri[t, 1], tri[t, 2])
            if q < qold:
                qold = q
            for j in range(3):
                x = tri[t, j]
                if x == v:
                    continue
                l = _mlen(m, x, v, ox - p[x, 0], oy - p[x, 1])
                if l <= 0.0:
                    continue
                tx += p[x, 0] + (ox - p[x, 0]) / l
                ty += p[x, 1] + (oy - p[x, 1]) / l
                n += 1
        if n == 0:
            continue
        nx = ox + relax * (tx / n - ox)
        ny = oy + relax * (ty / n - oy)
        if flags[v] == 1 or flags[v] == 2:
            nx = ox
        elif flags[v] == 4 or flags[v] == 8:
            ny = oy
        if nx < 0.0 or nx > 1.0 or ny < 0.0 or ny > 1.0:
            continue
        p[v, 0] = nx
        p[v, 1] = ny
        o0 = m[v, 0]
        o1 = m[v, 1]
        o2 = m[v, 2]
        lo0 = logm[v, 0]
        lo1 = logm[v, 1]
        lo2 = logm[v, 2]
        oh = hint[v]
        _interp_metric(bp, btri, bnbr, blog, nx, ny, hint, v, logm, m, bb)
        ok = True
        qnew = 2.0
        for k in range(vptr[v], vptr[v + 1]):
            t = vidx[k]
            q = _quality(p, m, tri[t, 0], tri[t, 1], tri[t, 2])
            if q <= 0.0 or _orient(p[tri[t, 0], 0], p[tri[t, 0], 1], p[tri[t, 1], 0], p[tri[t, 1], 1],
                                   p[tri[t, 2], 0], p[tri[t, 2], 1]) <= 0.0:
                ok = False
                break
            if q < qnew:
                qnew = q
        if ok and qnew >= qold:
            moved += 1
        else:
            p[v, 0] = ox
            p[v, 1] = oy
            m[v, 0] = o0
            m[v, 1] = o1
            m[v, 2] = o2
            logm[v, 0] = lo0
            logm[v, 1] = lo1
            logm[v, 2] = lo2
            hint[v] = oh
    return moved
