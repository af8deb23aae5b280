"""Hot numeric kernels, each in a numba and a vectorised numpy flavour.

The public functions at the bottom dispatch on :data:`fractura._accel.USE_NUMBA`.
Both flavours are importable directly (``numpy_*`` / ``numba_*``) so the test
suite and the benchmark can compare them.

Segment arrays are ``(n, 4)`` float64 rows ``[x1, y1, x2, y2]``; point arrays
are ``(p, 2)``.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA

_SQRT1_2 = 1.0 / math.sqrt(2.0)

# ---------------------------------------------------------------------------
# numpy flavour
# ---------------------------------------------------------------------------


def numpy_distances_to_parts(px, py, segs, pts):
    """Distance from ``(px, py)`` to every segment and every point."""
    ax, ay = segs[:, 0], segs[:, 1]
    dx, dy = segs[:, 2] - ax, segs[:, 3] - ay
    ll = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / ll, 0.0, 1.0)
    ds = np.hypot(px - (ax + t * dx), py - (ay + t * dy))
    dp = np.hypot(px - pts[:, 0], py - pts[:, 1])
    return np.concatenate((ds, dp))


def _numpy_distance_matrix(p, segs, pts):
    """Distances from each row of ``p`` (k, 2) to every part of ``B``, shape (k, nb)."""
    px, py = p[:, 0:1], p[:, 1:2]
    ax, ay = segs[:, 0], segs[:, 1]
    dx, dy = segs[:, 2] - ax, segs[:, 3] - ay
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
    ds = np.hypot(px - (ax + t * dx), py - (ay + t * dy))
    dp = np.hypot(px - pts[:, 0], py - pts[:, 1])
    return np.concatenate((ds, dp), axis=1)


def numpy_directed_hausdorff(segs_a, pts_a, segs_b, pts_b, tol):
    """Certified ``sup_{x in A} dist(x, B)`` for nonempty ``B``.

    Returns a value ``v`` that is attained by some point of ``A`` and satisfies
    ``v <= sup <= v + tol``.  Along a segment of ``A`` the distance to each part
    of ``B`` is convex, so on any parameter interval the distance to ``B`` is
    bounded by ``min_j max(g_j(s0), g_j(s1))``; the 1-Lipschitz bound is used as
    well and the tighter of the two decides pruning.  All live intervals are
    bisected together, one sweep per refinement level.
    """
    best = 0.0
    if len(pts_a):
        best = float(_numpy_distance_matrix(pts_a, segs_b, pts_b).min(1).max())
    if not len(segs_a):
        return best
    p0 = segs_a[:, :2]
    d = segs_a[:, 2:] - p0
    length = np.hypot(d[:, 0], d[:, 1])
    idx = np.arange(len(segs_a))
    s0, s1 = np.zeros(len(idx)), np.ones(len(idx))
    ga = _numpy_distance_matrix(p0, segs_b, pts_b)
    gb = _numpy_distance_matrix(p0 + d, segs_b, pts_b)
    best = max(best, float(ga.min(1).max()), float(gb.min(1).max()))
    while len(idx):
        ub = np.minimum(np.maximum(ga, gb).min(1),
                        0.5 * (ga.min(1) + gb.min(1) + (s1 - s0) * length[idx]))
        live = ub > best + tol
        if not live.any():
            break
        idx, s0, s1, ga, gb = idx[live], s0[live], s1[live], ga[live], gb[live]
        sm = 0.5 * (s0 + s1)
        gm = _numpy_distance_matrix(p0[idx] + sm[:, None] * d[idx], segs_b, pts_b)
        best = max(best, float(gm.min(1).max()))
        idx = np.concatenate((idx, idx))
        s0, s1 = np.concatenate((s0, sm)), np.concatenate((sm, s1))
        ga, gb = np.vstack((ga, gm)), np.vstack((gm, gb))
    return best


def _numpy_gradients(nodes, tris):
    p = nodes[tris]  # (m, 3, 2)
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    j = [1, 2, 0]
    k = [2, 0, 1]
    gx = (y[:, j] - y[:, k]) / det[:, None]
    gy = (x[:, k] - x[:, j]) / det[:, None]
    return gx, gy, 0.5 * np.abs(det)


def numpy_scalar_stiffness(nodes, tris, coef):
    """P1 element matrices ``area * G a G^T`` for per-element 2x2 ``coef``."""
    gx, gy, area = _numpy_gradients(nodes, tris)
    g = np.stack((gx, gy), axis=-1)  # (m, 3, 2)
    return area[:, None, None] * np.einsum("mia,mab,mjb->mij", g, coef, g)


def numpy_vector_stiffness(nodes, tris, cmat):
    """P1 element matrices ``area * B^T C B`` in the Mandel strain basis."""
    gx, gy, area = _numpy_gradients(nodes, tris)
    m = tris.shape[0]
    b = np.zeros((m, 3, 6))
    b[:, 0, 0::2] = gx
    b[:, 1, 1::2] = gy
    b[:, 2, 0::2] = gy * _SQRT1_2
    b[:, 2, 1::2] = gx * _SQRT1_2
    return area[:, None, None] * np.einsum("mai,mab,mbj->mij", b, cmat, b)


# ---------------------------------------------------------------------------
# numba flavour
# ---------------------------------------------------------------------------

if USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _nb_dist_parts(px, py, segs, pts, out):
        ns = segs.shape[0]
        for i in range(ns):
            ax = segs[i, 0]
            ay = segs[i, 1]
            dx = segs[i, 2] - ax
            dy = segs[i, 3] - ay
            t = ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            out[i] = math.hypot(px - (ax + t * dx), py - (ay + t * dy))
        for i in range(pts.shape[0]):
            out[ns + i] = math.hypot(px - pts[i, 0], py - pts[i, 1])
        m = np.inf
        for i in range(out.shape[0]):
            if out[i] < m:
                m = out[i]
        return m

    @njit(cache=True)
    def numba_directed_hausdorff(segs_a, pts_a, segs_b, pts_b, tol):
        nb = segs_b.shape[0] + pts_b.shape[0]
        buf = np.empty(nb)
        best = 0.0
        for i in range(pts_a.shape[0]):
            d = _nb_dist_parts(pts_a[i, 0], pts_a[i, 1], segs_b, pts_b, buf)
            if d > best:
                best = d
        cap = 256
        s_lo = np.empty(cap)
        s_hi = np.empty(cap)
        g_lo = np.empty((cap, nb))
        g_hi = np.empty((cap, nb))
        gm = np.empty(nb)
        for k in range(segs_a.shape[0]):
            x0 = segs_a[k, 0]
            y0 = segs_a[k, 1]
            ex = segs_a[k, 2] - x0
            ey = segs_a[k, 3] - y0
            length = math.hypot(ex, ey)
            d0 = _nb_dist_parts(x0, y0, segs_b, pts_b, g_lo[0])
            d1 = _nb_dist_parts(x0 + ex, y0 + ey, segs_b, pts_b, g_hi[0])
            best = max(best, d0, d1)
            s_lo[0] = 0.0
            s_hi[0] = 1.0
            top = 1
            while top > 0:
                top -= 1
                s0 = s_lo[top]
                s1 = s_hi[top]
                ub = np.inf
                ma = np.inf
                mb = np.inf
                for j in range(nb):
                    a = g_lo[top, j]
                    b = g_hi[top, j]
                    c = a if a > b else b
                    if c < ub:
                        ub = c
                    if a < ma:
                        ma = a
                    if b < mb:
                        mb = b
                lip = 0.5 * (ma + mb + (s1 - s0) * length)
                if lip < ub:
                    ub = lip
                if ub <= best + tol:
                    continue
                sm = 0.5 * (s0 + s1)
                dm = _nb_dist_parts(x0 + sm * ex, y0 + sm * ey, segs_b, pts_b, gm)
                if dm > best:
                    best = dm
                if top + 2 > cap:
                    cap *= 2
                    s_lo2 = np.empty(cap)
                    s_hi2 = np.empty(cap)
                    g_lo2 = np.empty((cap, nb))
                    g_hi2 = np.empty((cap, nb))
                    s_lo2[:top + 1] = s_lo[:top + 1]
                    s_hi2[:top + 1] = s_hi[:top + 1]
                    g_lo2[:top + 1] = g_lo[:top + 1]
                    g_hi2[:top + 1] = g_hi[:top + 1]
                    s_lo, s_hi, g_lo, g_hi = s_lo2, s_hi2, g_lo2, g_hi2
                # left half reuses slot ``top``; right half goes to ``top + 1``
                s_lo[top + 1] = sm
                s_hi[top + 1] = s1
                g_lo[top + 1, :] = gm
                g_hi[top + 1, :] = g_hi[top, :]
                s_hi[top] = sm
                g_hi[top, :] = gm
                top += 2
        return best

    @njit(cache=True)
    def _nb_gradients(nodes, tri, g):
        x0 = nodes[tri[0], 0]
        y0 = nodes[tri[0], 1]
        x1 = nodes[tri[1], 0]
        y1 = nodes[tri[1], 1]
        x2 = nodes[tri[2], 0]
        y2 = nodes[tri[2], 1]
        det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        g[0, 0] = (y1 - y2) / det
        g[1, 0] = (y2 - y0) / det
        g[2, 0] = (y0 - y1) / det
        g[0, 1] = (x2 - x1) / det
        g[1, 1] = (x0 - x2) / det
        g[2, 1] = (x1 - x0) / det
        return 0.5 * abs(det)

    @njit(cache=True)
    def numba_scalar_stiffness(nodes, tris, coef):
        m = tris.shape[0]
        out = np.empty((m, 3, 3))
        g = np.empty((3, 2))
        for e in range(m):
            area = _nb_gradients(nodes, tris[e], g)
            for i in range(3):
                for j in range(3):
                    s = 0.0
                    for a in range(2):
                        for b in range(2):
                            s += g[i, a] * coef[e, a, b] * g[j, b]
                    out[e, i, j] = area * s
        return out

    @njit(cache=True)
    def numba_vector_stiffness(nodes, tris, cmat):
        m = tris.shape[0]
        out = np.empty((m, 6, 6))
        g = np.empty((3, 2))
        b = np.zeros((3, 6))
        r = 1.0 / math.sqrt(2.0)
        for e in range(m):
            area = _nb_gradients(nodes, tris[e], g)
            for i in range(3):
                b[0, 2 * i] = g[i, 0]
                b[1, 2 * i + 1] = g[i, 1]
                b[2, 2 * i] = g[i, 1] * r
                b[2, 2 * i + 1] = g[i, 0] * r
            for i in range(6):
                for j in range(6):
                    s = 0.0
                    for p in range(3):
                        for q in range(3):
                            s += b[p, i] * cmat[e, p, q] * b[q, j]
                    out[e, i, j] = area * s
        return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _f64(a, shape_tail):
    a = np.ascontiguousarray(a, dtype=np.float64)
    return a.reshape((-1,) + shape_tail)


def directed_hausdorff(segs_a, pts_a, segs_b, pts_b, tol=1e-9):
    segs_a, segs_b = _f64(segs_a, (4,)), _f64(segs_b, (4,))
    pts_a, pts_b = _f64(pts_a, (2,)), _f64(pts_b, (2,))
    if segs_b.shape[0] + pts_b.shape[0] == 0:
        raise ValueError("target set must be nonempty")
    if USE_NUMBA:
        return float(numba_directed_hausdorff(segs_a, pts_a, segs_b, pts_b, float(tol)))
    return numpy_directed_hausdorff(segs_a, pts_a, segs_b, pts_b, float(tol))


def scalar_stiffness(nodes, tris, coef):
    nodes = _f64(nodes, (2,))
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    coef = _f64(coef, (2, 2))
    if USE_NUMBA:
        return numba_scalar_stiffness(nodes, tris, coef)
    return numpy_scalar_stiffness(nodes, tris, coef)


def vector_stiffness(nodes, tris, cmat):
    nodes = _f64(nodes, (2,))
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    cmat = _f64(cmat, (3, 3))
    if USE_NUMBA:
        return numba_vector_stiffness(nodes, tris, cmat)
    return numpy_vector_stiffness(nodes, tris, cmat)
