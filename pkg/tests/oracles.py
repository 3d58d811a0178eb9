"""Independent reference implementations used only by the tests.

They are written for clarity rather than speed and share no code with the
library beyond the data containers.
"""
from __future__ import annotations

from collections import Counter

import numpy as np


def directed_edges(triangles):
    e = Counter()
    for a, b, c in np.asarray(triangles).tolist():
        for u, v in ((a, b), (b, c), (c, a)):
            e[(u, v)] += 1
    return e


def is_watertight(triangles) -> bool:
    """Every directed edge appears once and its reverse appears exactly once."""
    e = directed_edges(triangles)
    return all(n == 1 and e.get((v, u), 0) == 1 for (u, v), n in e.items())


def euler_characteristic(triangles) -> int:
    t = np.asarray(triangles)
    v = len(np.unique(t))
    edges = {tuple(sorted(k)) for k in directed_edges(t)}
    return v - len(edges) + len(t)


def signed_volume(vertices, triangles) -> float:
    v = np.asarray(vertices, dtype=np.float64)
    total = 0.0
    for a, b, c in np.asarray(triangles).tolist():
        total += np.dot(v[a], np.cross(v[b], v[c])) / 6.0
    return total


def barycentric_height(tri_xyz, x, y):
    """z of the plane through a triangle at (x, y), or None if outside its projection."""
    (x1, y1, z1), (x2, y2, z2), (x3, y3, z3) = tri_xyz
    det = (y2 - y3) * (x1 - x3) + (x3 - x2) * (y1 - y3)
    l1 = ((y2 - y3) * (x - x3) + (x3 - x2) * (y - y3)) / det
    l2 = ((y3 - y1) * (x - x3) + (x1 - x3) * (y - y3)) / det
    l3 = 1 - l1 - l2
    if min(l1, l2, l3) < -1e-9:
        return None
    return l1 * z1 + l2 * z2 + l3 * z3


def ray_triangle(orig, d, a, b, c):
    """Intersection distance via the plane equation and inside-edge tests, or inf."""
    n = np.cross(b - a, c - a)
    denom = np.dot(n, d)
    if abs(denom) < 1e-14:
        return np.inf
    t = np.dot(n, a - orig) / denom
    if t <= 1e-9:
        return np.inf
    p = orig + t * d
    for u, v in ((a, b), (b, c), (c, a)):
        if np.dot(np.cross(v - u, p - u), n) < -1e-12 * np.dot(n, n):
            return np.inf
    return t


def brute_nearest(points, queries):
    """Index of the nearest point (lowest index on ties) and its distance."""
    idx = np.empty(len(queries), dtype=np.int64)
    dist = np.empty(len(queries))
    for i, q in enumerate(queries):
        d = np.sqrt(((points - q) ** 2).sum(axis=1))
        j = int(np.argmin(d))
        idx[i], dist[i] = j, d[j]
    return idx, dist


def components_bfs(points, radius):
    """Connected components of the radius graph by breadth-first search; labels are the lowest member index."""
    n = len(points)
    label = -np.ones(n, dtype=np.int64)
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = s
        queue = [s]
        while queue:
            u = queue.pop()
            d = np.sqrt(((points - points[u]) ** 2).sum(axis=1))
            for v in np.flatnonzero((d <= radius) & (label < 0)):
                label[v] = s
                queue.append(v)
    return label


def confusion_loop(gt, pred, n):
    cm = np.zeros((n, n), dtype=np.int64)
    for g, p in zip(gt, pred):
        cm[g, p] += 1
    return cm


def voxel_groups(points, spacing):
    """Voxel key -> list of member indices, grid anchored at the min corner."""
    lo = points.min(axis=0)
    groups = {}
    for i, p in enumerate(points):
        key = tuple(int(np.floor((p[k] - lo[k]) / spacing)) for k in range(3))
        groups.setdefault(key, []).append(i)
    return groups


def majority_smallest(values):
    c = Counter(int(v) for v in values)
    top = max(c.values())
    return min(v for v, n in c.items() if n == top)


def set_iou(a, b) -> float:
    a, b = set(a), set(b)
    return len(a & b) / len(a | b)


def ap_101(tp_flags, n_gt) -> float:
    """101-point interpolated AP written as the textbook double loop."""
    tp = fp = 0
    prec, rec = [], []
    for f in tp_flags:
        tp += bool(f)
        fp += not f
        prec.append(tp / (tp + fp))
        rec.append(tp / n_gt)
    total = 0.0
    for k in range(101):
        r = k / 100
        best = 0.0
        for p, q in zip(prec, rec):
            if q >= r - 1e-12 and p > best:
                best = p
        total += best
    return total / 101


def enumerate_matchings(iou, threshold):
    """Yield every injective pred -> gt assignment (-1 = unmatched) using only pairs with IoU >= threshold."""
    n_p, n_g = iou.shape
    cur = [-1] * n_p
    used = [False] * n_g

    def rec(i):
        if i == n_p:
            yield tuple(cur)
            return
        cur[i] = -1
        yield from rec(i + 1)
        for j in range(n_g):
            if not used[j] and iou[i][j] >= threshold:
                used[j] = True
                cur[i] = j
                yield from rec(i + 1)
                used[j] = False
        cur[i] = -1

    yield from rec(0)


def exhaustive_instance_ap(preds, gts, threshold):
    """Confidence-ordered max-IoU matching found by exhaustive search.

    ``preds`` is a list of (point set, confidence) and ``gts`` a list of
    point sets. Among all valid matchings, pick the one whose per-prediction
    sequence of (IoU, -gt index), read in (-confidence, index) order, is
    lexicographically largest; unmatched counts as (-1, 0). Also returns the
    largest AP reachable by any valid matching.
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][1], i))
    iou = [[set_iou(preds[i][0], g) for g in gts] for i in order]
    best_key, best_match, best_ap = None, None, 0.0
    for m in enumerate_matchings(np.array(iou).reshape(len(order), len(gts)), threshold):
        key = tuple((iou[i][j], -j) if j >= 0 else (-1.0, 0) for i, j in enumerate(m))
        if best_key is None or key > best_key:
            best_key, best_match = key, m
        best_ap = max(best_ap, ap_101([j >= 0 for j in m], len(gts)))
    return ap_101([j >= 0 for j in best_match], len(gts)), best_ap


def point_triangle_distance(p, a, b, c):
    """Exact distance from p to each triangle (a, b, c arrays of shape (m, 3)), by
    projecting onto the plane when inside and otherwise taking the nearest edge."""
    n = np.cross(b - a, c - a)
    n_len = np.linalg.norm(n, axis=1)
    nu = n / n_len[:, None]
    h = np.einsum("ij,ij->i", p - a, nu)
    q = p - h[:, None] * nu
    inside = np.ones(len(a), dtype=bool)
    for u, v in ((a, b), (b, c), (c, a)):
        inside &= np.einsum("ij,ij->i", np.cross(v - u, q - u), nu) >= 0
    best = np.where(inside, np.abs(h), np.inf)
    for u, v in ((a, b), (b, c), (c, a)):
        e = v - u
        s = np.clip(np.einsum("ij,ij->i", p - u, e) / np.einsum("ij,ij->i", e, e), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(p - (u + s[:, None] * e), axis=1))
    return best


def mesh_distance(points, vertices, triangles):
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles)
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    return np.array([point_triangle_distance(p, a, b, c).min() for p in np.asarray(points)])
