"""Bounding volume hierarchy over a triangle soup, with numba ray kernels.

The tree is built top-down with median splits on the longest centroid axis
and stored as flat arrays. Nearest-hit queries break exact distance ties
towards the lowest triangle index, which makes results independent of
traversal order and identical to the brute-force kernel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

T_MIN = 1e-7
LEAF_SIZE = 4
_STACK = 128


class BVHError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BVH:
    lo: np.ndarray        # (nodes, 3) node box minimum
    hi: np.ndarray        # (nodes, 3) node box maximum
    left: np.ndarray      # child index, -1 for leaves
    right: np.ndarray
    start: np.ndarray     # leaf range into ``order``
    count: np.ndarray
    order: np.ndarray     # triangle indices in leaf order
    v0: np.ndarray        # (m, 3) first vertex per triangle
    e1: np.ndarray        # (m, 3) v1 - v0
    e2: np.ndarray        # (m, 3) v2 - v0

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left < 0))

    def arrays(self):
        return (self.lo, self.hi, self.left, self.right, self.start, self.count, self.order,
                self.v0, self.e1, self.e2)


@nb.njit(cache=True)
def _build(tri_lo, tri_hi, cent, leaf_size):
    m = tri_lo.shape[0]
    cap = 2 * m
    lo = np.empty((cap, 3))
    hi = np.empty((cap, 3))
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    start = np.zeros(cap, np.int64)
    count = np.zeros(cap, np.int64)
    order = np.arange(m)
    stack_n = np.empty(cap, np.int64)
    stack_s = np.empty(cap, np.int64)
    stack_e = np.empty(cap, np.int64)
    sp = 0
    stack_n[0] = 0
    stack_s[0] = 0
    stack_e[0] = m
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack_n[sp]
        s = stack_s[sp]
        e = stack_e[sp]
        for k in range(3):
            lo[node, k] = np.inf
            hi[node, k] = -np.inf
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for i in range(s, e):
            t = order[i]
            for k in range(3):
                lo[node, k] = min(lo[node, k], tri_lo[t, k])
                hi[node, k] = max(hi[node, k], tri_hi[t, k])
                clo[k] = min(clo[k], cent[t, k])
                chi[k] = max(chi[k], cent[t, k])
        for k in range(3):
            pad = 1e-9 * (1.0 + max(abs(lo[node, k]), abs(hi[node, k])))
            lo[node, k] -= pad
            hi[node, k] += pad
        axis = 0
        ext = chi[0] - clo[0]
        for k in range(1, 3):
            if chi[k] - clo[k] > ext:
                ext = chi[k] - clo[k]
                axis = k
        if e - s <= leaf_size or ext <= 0.0:
            start[node] = s
            count[node] = e - s
            continue
        seg = order[s:e].copy()
        keys = np.empty(e - s)
        for i in range(e - s):
            keys[i] = cent[seg[i], axis]
        perm = np.argsort(keys, kind="mergesort")
        for i in range(e - s):
            order[s + i] = seg[perm[i]]
        mid = (s + e) // 2
        a = n_nodes
        b = n_nodes + 1
        n_nodes += 2
        left[node] = a
        right[node] = b
        stack_n[sp] = b
        stack_s[sp] = mid
        stack_e[sp] = e
        sp += 1
        stack_n[sp] = a
        stack_s[sp] = s
        stack_e[sp] = mid
        sp += 1
    return lo[:n_nodes], hi[:n_nodes], left[:n_nodes], right[:n_nodes], start[:n_nodes], count[:n_nodes], order


def build_bvh(vertices: np.ndarray, triangles: np.ndarray, leaf_size: int = LEAF_SIZE) -> BVH:
    """Build a BVH from vertex and triangle arrays (or pass ``mesh.vertices, mesh.triangles``)."""
    v = np.ascontiguousarray(vertices, dtype=np.float64)
    t = np.ascontiguousarray(triangles, dtype=np.int64)
    if len(t) == 0:
        raise BVHError("cannot build a BVH over an empty mesh")
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    tri_lo = np.minimum(np.minimum(a, b), c)
    tri_hi = np.maximum(np.maximum(a, b), c)
    cent = (a + b + c) / 3.0
    lo, hi, left, right, start, count, order = _build(tri_lo, tri_hi, cent, leaf_size)
    return BVH(lo, hi, left, right, start, count, order,
               np.ascontiguousarray(a), np.ascontiguousarray(b - a), np.ascontiguousarray(c - a))


def mesh_bvh(mesh) -> BVH:
    return build_bvh(mesh.vertices, mesh.triangles)


@nb.njit(cache=True, inline="always")
def _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, t):
    """Möller–Trumbore; returns the ray parameter or inf."""
    e1x, e1y, e1z = e1[t, 0], e1[t, 1], e1[t, 2]
    e2x, e2y, e2z = e2[t, 0], e2[t, 1], e2[t, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return np.inf
    inv = 1.0 / det
    sx = ox - v0[t, 0]
    sy = oy - v0[t, 1]
    sz = oz - v0[t, 2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    w = (dx * qx + dy * qy + dz * qz) * inv
    if w < 0.0 or u + w > 1.0:
        return np.inf
    return (e2x * qx + e2y * qy + e2z * qz) * inv


@nb.njit(cache=True, inline="always")
def _box_entry(ox, oy, oz, ix, iy, iz, lo, hi, node, tmax):
    t0 = 0.0
    t1 = tmax
    a = (lo[node, 0] - ox) * ix
    b = (hi[node, 0] - ox) * ix
    t0 = max(t0, min(a, b))
    t1 = min(t1, max(a, b))
    a = (lo[node, 1] - oy) * iy
    b = (hi[node, 1] - oy) * iy
    t0 = max(t0, min(a, b))
    t1 = min(t1, max(a, b))
    a = (lo[node, 2] - oz) * iz
    b = (hi[node, 2] - oz) * iz
    t0 = max(t0, min(a, b))
    t1 = min(t1, max(a, b))
    if t0 <= t1:
        return t0
    return np.inf


@nb.njit(cache=True, inline="always")
def _safe_inv(d):
    if d == 0.0:
        return 1e300
    return 1.0 / d


@nb.njit(cache=True)
def ray_nearest(lo, hi, left, right, start, count, order, v0, e1, e2, o, d, tmin, tmax):
    """Nearest hit along one ray: (t, triangle) or (inf, -1)."""
    ox, oy, oz = o[0], o[1], o[2]
    dx, dy, dz = d[0], d[1], d[2]
    ix, iy, iz = _safe_inv(dx), _safe_inv(dy), _safe_inv(dz)
    best_t = tmax
    best = -1
    stack = np.empty(_STACK, np.int64)
    sp = 0
    if _box_entry(ox, oy, oz, ix, iy, iz, lo, hi, 0, best_t) == np.inf:
        return np.inf, -1
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                t = order[k]
                h = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, t)
                if h > tmin and h < tmax and (h < best_t or (h == best_t and t < best)):
                    best_t = h
                    best = t
            continue
        a = left[node]
        b = right[node]
        ta = _box_entry(ox, oy, oz, ix, iy, iz, lo, hi, a, best_t)
        tb = _box_entry(ox, oy, oz, ix, iy, iz, lo, hi, b, best_t)
        # push the farther child first so the nearer one is visited next
        if ta <= tb:
            if tb != np.inf:
                stack[sp] = b
                sp += 1
            if ta != np.inf:
                stack[sp] = a
                sp += 1
        else:
            if ta != np.inf:
                stack[sp] = a
                sp += 1
            if tb != np.inf:
                stack[sp] = b
                sp += 1
    if best < 0:
        return np.inf, -1
    return best_t, best


@nb.njit(cache=True)
def ray_occluded(lo, hi, left, right, start, count, order, v0, e1, e2, o, d, tmin, tmax):
    """True if anything lies strictly between tmin and tmax along the ray."""
    ox, oy, oz = o[0], o[1], o[2]
    dx, dy, dz = d[0], d[1], d[2]
    ix, iy, iz = _safe_inv(dx), _safe_inv(dy), _safe_inv(dz)
    stack = np.empty(_STACK, np.int64)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_entry(ox, oy, oz, ix, iy, iz, lo, hi, node, tmax) == np.inf:
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                h = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, order[k])
                if h > tmin and h < tmax:
                    return True
            continue
        stack[sp] = left[node]
        sp += 1
        stack[sp] = right[node]
        sp += 1
    return False


@nb.njit(cache=True)
def _nearest_batch(lo, hi, left, right, start, count, order, v0, e1, e2, origins, dirs, tmin):
    n = dirs.shape[0]
    t_out = np.empty(n)
    tri_out = np.empty(n, np.int64)
    for i in range(n):
        t, tri = ray_nearest(lo, hi, left, right, start, count, order, v0, e1, e2,
                             origins[i], dirs[i], tmin, np.inf)
        t_out[i] = t
        tri_out[i] = tri
    return t_out, tri_out


@nb.njit(cache=True)
def _occluded_batch(lo, hi, left, right, start, count, order, v0, e1, e2, origins, dirs, tmin, tmax):
    n = dirs.shape[0]
    out = np.empty(n, np.bool_)
    for i in range(n):
        out[i] = ray_occluded(lo, hi, left, right, start, count, order, v0, e1, e2,
                              origins[i], dirs[i], tmin, tmax[i])
    return out


@nb.njit(cache=True)
def _brute_batch(v0, e1, e2, origins, dirs, tmin):
    n = dirs.shape[0]
    m = v0.shape[0]
    t_out = np.full(n, np.inf)
    tri_out = np.full(n, -1, np.int64)
    for i in range(n):
        ox, oy, oz = origins[i, 0], origins[i, 1], origins[i, 2]
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        for t in range(m):
            h = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, t)
            if h > tmin and h < t_out[i]:
                t_out[i] = h
                tri_out[i] = t
    return t_out, tri_out


def _rays(origins, dirs):
    d = np.ascontiguousarray(np.atleast_2d(dirs), dtype=np.float64)
    o = np.ascontiguousarray(np.broadcast_to(np.asarray(origins, dtype=np.float64), d.shape))
    return o, d


def intersect(bvh: BVH, origins, dirs, tmin: float = T_MIN) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit per ray. Returns (t, triangle) with (inf, -1) for misses.

    ``t`` is in units of the direction vector; pass unit directions to get range.
    """
    o, d = _rays(origins, dirs)
    return _nearest_batch(*bvh.arrays(), o, d, float(tmin))


def occluded(bvh: BVH, origins, dirs, tmax, tmin: float = T_MIN) -> np.ndarray:
    o, d = _rays(origins, dirs)
    tmax = np.ascontiguousarray(np.broadcast_to(np.asarray(tmax, dtype=np.float64), len(d)))
    return _occluded_batch(*bvh.arrays(), o, d, float(tmin), tmax)


def intersect_brute(vertices, triangles, origins, dirs, tmin: float = T_MIN) -> tuple[np.ndarray, np.ndarray]:
    """Reference nearest hit over all triangles, same primitive and tie rule as :func:`intersect`."""
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    a = np.ascontiguousarray(v[t[:, 0]])
    e1 = np.ascontiguousarray(v[t[:, 1]] - a)
    e2 = np.ascontiguousarray(v[t[:, 2]] - a)
    o, d = _rays(origins, dirs)
    return _brute_batch(a, e1, e2, o, d, float(tmin))
