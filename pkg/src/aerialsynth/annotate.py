"""Label transfer from a proxy cloud onto a reconstructed cloud.

Two steps: every reconstructed point copies the labels of its nearest proxy
point, then ground-family points that do not belong to the main connected
ground surface (for example ground labels that leaked onto a roof) take the
labels of their nearest non-ground neighbour.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.spatial import cKDTree

from . import classes as C
from .pointcloud import LabeledPointCloud

_GROUND_IDS = np.array(sorted(C.GROUND_FAMILY), dtype=np.uint8)


class AnnotateError(ValueError):
    pass


@dataclass(frozen=True)
class TransferParams:
    max_nn_distance: float = 1.0
    ground_link_radius: float = 0.6
    fallback_class: int = C.CLUTTER

    def __post_init__(self):
        if not (self.max_nn_distance > 0 and self.ground_link_radius > 0):
            raise AnnotateError("max_nn_distance and ground_link_radius must be positive")
        if self.fallback_class not in C.CLASS_NAMES:
            raise AnnotateError(f"unknown fallback class {self.fallback_class}")


def _exact_dist(points, q):
    return np.sqrt(((points - q) ** 2).sum(axis=1))


class PointIndex:
    """k-d tree whose answers are made exact: distances are recomputed from
    coordinates and equidistant candidates resolve to the lowest index."""

    def __init__(self, points: np.ndarray):
        pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if not len(pts):
            raise AnnotateError("cannot index an empty point set")
        self.points = pts
        self.tree = cKDTree(pts)

    def __len__(self) -> int:
        return len(self.points)

    def nearest(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 1:
            return np.zeros(len(q), np.int64), _exact_dist(q, self.points[0])
        d, idx = self.tree.query(q, k=2)
        idx = idx.astype(np.int64)
        d1 = _exact_dist(self.points[idx[:, 0]], q)
        d2 = _exact_dist(self.points[idx[:, 1]], q)
        best, dist = idx[:, 0].copy(), d1
        # anything within rounding distance of a tie is settled by brute force over the ball
        close = np.abs(d2 - d1) <= 1e-9 * (1.0 + d1)
        for i in np.flatnonzero(close):
            cand = np.array(self.tree.query_ball_point(q[i], max(d1[i], d2[i]) * (1 + 1e-9) + 1e-12), np.int64)
            cd = _exact_dist(self.points[cand], q[i])
            k = np.lexsort((cand, cd))[0]
            best[i], dist[i] = cand[k], cd[k]
        return best, dist

    def knn(self, query: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The k nearest points to one query, ordered by (distance, index)."""
        q = np.asarray(query, dtype=np.float64).reshape(3)
        k = min(int(k), len(self.points))
        if k <= 0:
            return np.zeros(0, np.int64), np.zeros(0)
        d, _ = self.tree.query(q, k=k)
        r = float(np.max(d))
        cand = np.array(self.tree.query_ball_point(q, r * (1 + 1e-9) + 1e-12), np.int64)
        cd = _exact_dist(self.points[cand], q)
        order = np.lexsort((cand, cd))[:k]
        return cand[order], cd[order]

    def radius(self, query: np.ndarray, r: float) -> np.ndarray:
        """Indices (ascending) of all points with exact distance <= r."""
        q = np.asarray(query, dtype=np.float64).reshape(3)
        cand = np.array(self.tree.query_ball_point(q, r * (1 + 1e-9) + 1e-12), np.int64)
        if not len(cand):
            return cand
        keep = _exact_dist(self.points[cand], q) <= r
        return np.sort(cand[keep])


def build_point_index(proxy: LabeledPointCloud) -> PointIndex:
    return PointIndex(proxy.positions)


def transfer_labels(recon: LabeledPointCloud, proxy: LabeledPointCloud, params: TransferParams | None = None,
                    index: PointIndex | None = None, return_info: bool = False):
    """Nearest-proxy label transfer; points farther than ``max_nn_distance`` get the fallback class."""
    params = params or TransferParams()
    index = index or build_point_index(proxy)
    if np.any(proxy.semantic == C.UNLABELED):
        raise AnnotateError("proxy cloud has unlabeled points")
    if not len(recon):
        out = recon.with_labels(np.zeros(0, np.uint8), np.zeros(0, np.uint32))
        return (out, {"fallback": np.zeros(0, bool), "distance": np.zeros(0), "source": np.zeros(0, np.int64)}) \
            if return_info else out
    src, dist = index.nearest(recon.positions)
    fallback = dist > params.max_nn_distance
    sem = proxy.semantic[src].copy()
    inst = proxy.instance[src].copy()
    sem[fallback] = params.fallback_class
    inst[fallback] = 0
    out = recon.with_labels(sem, inst)
    if return_info:
        return out, {"fallback": fallback, "distance": dist, "source": np.where(fallback, -1, src)}
    return out


@nb.njit(cache=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@nb.njit(cache=True)
def union_find_labels(n, pairs):
    """Component label per node, equal to the smallest node index in the component."""
    parent = np.arange(n)
    for k in range(pairs.shape[0]):
        a = _find(parent, pairs[k, 0])
        b = _find(parent, pairs[k, 1])
        if a != b:
            # keep the smaller index as root so labels come out canonical
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    out = np.empty(n, np.int64)
    for i in range(n):
        out[i] = _find(parent, i)
    return out


def radius_components(points: np.ndarray, radius: float) -> np.ndarray:
    """Connected components of the graph linking points at exact distance <= radius."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if not len(pts):
        return np.zeros(0, np.int64)
    pairs = cKDTree(pts).query_pairs(radius * (1 + 1e-9) + 1e-12, output_type="ndarray").astype(np.int64)
    if len(pairs):
        d = np.sqrt(((pts[pairs[:, 0]] - pts[pairs[:, 1]]) ** 2).sum(axis=1))
        pairs = pairs[d <= radius]
    return union_find_labels(len(pts), pairs.reshape(-1, 2))


def enforce_ground_connectivity(cloud: LabeledPointCloud, params: TransferParams | None = None,
                                return_info: bool = False):
    """Keep only the largest connected ground component as ground.

    Components are built over ground-family points (ground, road, dirt,
    grass) with links of length ``ground_link_radius``. Equal-size largest
    components resolve to the one containing the lowest point index. The
    other ground-family points take the semantic and instance of their
    nearest non-ground point within ``max_nn_distance``, else the fallback
    class with instance 0.
    """
    params = params or TransferParams()
    info = {"ground_points": 0, "components": 0, "relabeled": 0, "fallback": 0, "noop": False}
    g = np.flatnonzero(np.isin(cloud.semantic, _GROUND_IDS))
    info["ground_points"] = int(len(g))
    if not len(g):
        info["noop"] = True
        return (cloud, info) if return_info else cloud
    comp = radius_components(cloud.positions[g], params.ground_link_radius)
    roots, sizes = np.unique(comp, return_counts=True)
    info["components"] = int(len(roots))
    # roots are the smallest member index, so the first maximal size wins ties
    main = roots[np.argmax(sizes)]
    stray = g[comp != main]
    if not len(stray):
        return (cloud, info) if return_info else cloud
    sem = cloud.semantic.copy()
    inst = cloud.instance.copy()
    other = np.flatnonzero(~np.isin(cloud.semantic, _GROUND_IDS))
    if len(other):
        idx, dist = PointIndex(cloud.positions[other]).nearest(cloud.positions[stray])
        ok = dist <= params.max_nn_distance
        src = other[idx]
        sem[stray] = np.where(ok, cloud.semantic[src], params.fallback_class)
        inst[stray] = np.where(ok, cloud.instance[src], 0)
        info["fallback"] = int(np.sum(~ok))
    else:
        sem[stray] = params.fallback_class
        inst[stray] = 0
        info["fallback"] = int(len(stray))
    info["relabeled"] = int(len(stray))
    out = cloud.with_labels(sem, inst)
    return (out, info) if return_info else out


def boundary_fraction(cloud: LabeledPointCloud, radius: float = 0.5, k: int = 8) -> float:
    """Share of points whose neighbourhood mixes semantic classes.

    Transfer errors concentrate at class boundaries, so this is reported as
    an upper-bound style estimate of boundary mislabels.
    """
    n = len(cloud)
    if n < 2:
        return 0.0
    k = min(k, n)
    d, idx = cKDTree(cloud.positions).query(cloud.positions, k=k, distance_upper_bound=radius)
    valid = idx < n
    nb_sem = np.where(valid, cloud.semantic[np.minimum(idx, n - 1)], cloud.semantic[:, None])
    mixed = np.any(nb_sem != cloud.semantic[:, None], axis=1)
    return float(mixed.mean())
