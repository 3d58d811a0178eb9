"""2D polygon and polyline helpers shared by scene generation and flight planning."""
from __future__ import annotations

import numba as nb
import numpy as np


def signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(x[:-1] @ y[1:] - x[1:] @ y[:-1] + x[-1] * y[0] - x[0] * y[-1])


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def segments_intersect(a, b, c, d) -> bool:
    """Closed-segment intersection test (touching counts)."""
    o1, o2, o3, o4 = _orient(a, b, c), _orient(a, b, d), _orient(c, d, a), _orient(c, d, b)
    if ((o1 > 0 > o2) or (o1 < 0 < o2)) and ((o3 > 0 > o4) or (o3 < 0 < o4)):
        return True
    if o1 == 0 and _on_segment(a, b, c):
        return True
    if o2 == 0 and _on_segment(a, b, d):
        return True
    if o3 == 0 and _on_segment(c, d, a):
        return True
    if o4 == 0 and _on_segment(c, d, b):
        return True
    return False


def is_simple_polygon(ring: np.ndarray) -> bool:
    """True when no two non-adjacent edges of the closed ring touch. O(n^2)."""
    n = len(ring)
    if n < 3:
        return False
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        if np.array_equal(a, b):
            return False
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if segments_intersect(a, b, ring[j], ring[(j + 1) % n]):
                return False
    return True


def drop_collinear(ring: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Remove repeated and collinear vertices from a closed ring."""
    pts = [p for i, p in enumerate(ring) if i == 0 or not np.allclose(p, ring[i - 1], atol=tol)]
    if len(pts) > 1 and np.allclose(pts[0], pts[-1], atol=tol):
        pts.pop()
    changed = True
    while changed and len(pts) > 3:
        changed = False
        for i in range(len(pts)):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % len(pts)]
            scale = max(np.linalg.norm(b - a) * np.linalg.norm(c - b), 1e-300)
            if abs(_orient(a, b, c)) <= tol * scale:
                pts.pop(i)
                changed = True
                break
    return np.asarray(pts, dtype=np.float64)


def point_in_polygon(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd rule containment for an (N,2) array of points."""
    points = np.atleast_2d(points)
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    xj, yj = ring[-1]
    for xi, yi in ring:
        cond = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside ^= cond & (x < xcross)
        xj, yj = xi, yi
    return inside


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def polyline_distance(points: np.ndarray, line: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    d = np.full(len(points), np.inf)
    for a, b in zip(line[:-1], line[1:]):
        d = np.minimum(d, point_segment_distance(points, a, b))
    return d


def polygon_boundary_distance(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    closed = np.vstack([ring, ring[:1]])
    return polyline_distance(points, closed)


def polygon_distance(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Distance to a filled polygon: zero inside, boundary distance outside."""
    d = polygon_boundary_distance(points, ring)
    d[point_in_polygon(points, ring)] = 0.0
    return d


def triangulate_polygon(ring: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear-clipping triangulation of a simple counter-clockwise polygon."""
    n = len(ring)
    idx = list(range(n))
    tris: list[tuple[int, int, int]] = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * n * n:
            raise ValueError("ear clipping failed; polygon is probably not simple")
        m = len(idx)
        for k in range(m):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = ring[i0], ring[i1], ring[i2]
            if _orient(a, b, c) <= 0:
                continue
            ear = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = ring[j]
                if _orient(a, b, p) >= 0 and _orient(b, c, p) >= 0 and _orient(c, a, p) >= 0:
                    ear = False
                    break
            if ear:
                tris.append((i0, i1, i2))
                idx.pop(k)
                break
        else:
            raise ValueError("no ear found; polygon is probably not simple")
    tris.append((idx[0], idx[1], idx[2]))
    return tris


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by a counter-clockwise convex ``clip``."""
    out = [tuple(p) for p in subject]
    for i in range(len(clip)):
        a, b = clip[i], clip[(i + 1) % len(clip)]
        inp, out = out, []
        if not inp:
            break
        prev = inp[-1]
        for cur in inp:
            cin = _orient(a, b, cur) >= 0
            pin = _orient(a, b, prev) >= 0
            if cin:
                if not pin:
                    out.append(_line_cross(prev, cur, a, b))
                out.append(cur)
            elif pin:
                out.append(_line_cross(prev, cur, a, b))
            prev = cur
    return np.asarray(out, dtype=np.float64).reshape(-1, 2)


def _line_cross(p, q, a, b):
    d1 = _orient(a, b, p)
    d2 = _orient(a, b, q)
    t = d1 / (d1 - d2)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


@nb.njit(cache=True)
def _ring_area(x, y, n):
    s = 0.0
    for i in range(n):
        j = (i + 1) % n
        s += x[i] * y[j] - x[j] * y[i]
    return 0.5 * s


@nb.njit(cache=True)
def _clipped_area(a, b):
    # Sutherland-Hodgman on fixed buffers; each clip edge adds at most one vertex
    cap = len(a) + len(b) + 1
    px, py = np.empty(cap), np.empty(cap)
    qx, qy = np.empty(cap), np.empty(cap)
    n = len(a)
    for i in range(n):
        px[i], py[i] = a[i, 0], a[i, 1]
    for e in range(len(b)):
        if n == 0:
            break
        ax, ay = b[e, 0], b[e, 1]
        bx, by = b[(e + 1) % len(b), 0], b[(e + 1) % len(b), 1]
        m = 0
        sx, sy = px[n - 1], py[n - 1]
        ds = (bx - ax) * (sy - ay) - (by - ay) * (sx - ax)
        for k in range(n):
            cx, cy = px[k], py[k]
            dc = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if (dc >= 0) != (ds >= 0):
                t = ds / (ds - dc)
                qx[m], qy[m] = sx + t * (cx - sx), sy + t * (cy - sy)
                m += 1
            if dc >= 0:
                qx[m], qy[m] = cx, cy
                m += 1
            sx, sy, ds = cx, cy, dc
        px, qx = qx, px
        py, qy = qy, py
        n = m
    if n < 3:
        return 0.0
    return abs(_ring_area(px, py, n))


def convex_overlap_fraction(a: np.ndarray, b: np.ndarray) -> float:
    """Area of the intersection of two convex polygons divided by the area of ``a``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if signed_area(a) < 0:
        a = a[::-1].copy()
    if signed_area(b) < 0:
        b = b[::-1].copy()
    return _clipped_area(a, b) / abs(signed_area(a))
