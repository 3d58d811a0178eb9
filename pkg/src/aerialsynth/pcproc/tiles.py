"""Training-sample extraction: XY blocks, spheres and fixed-size neighbourhoods."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..pointcloud import LabeledPointCloud, write_cloud_ply


@dataclass(frozen=True, eq=False)
class Tile:
    """A slice of a cloud plus the region it was cut from.

    ``index`` holds source-cloud indices (repeats only when ``replaced``).
    ``bounds`` is ``{"kind": "block", "xmin", "xmax", "ymin", "ymax"}``,
    ``{"kind": "sphere", "center", "radius"}`` or
    ``{"kind": "count", "center", "n", "radius"}`` where radius is the
    distance of the farthest selected point.
    """

    cloud: LabeledPointCloud
    index: np.ndarray
    bounds: dict
    replaced: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cloud)

    def contains(self, points: np.ndarray, eps: float = 1e-9) -> np.ndarray:
        b = self.bounds
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if b["kind"] == "block":
            return ((p[:, 0] >= b["xmin"] - eps) & (p[:, 0] <= b["xmax"] + eps)
                    & (p[:, 1] >= b["ymin"] - eps) & (p[:, 1] <= b["ymax"] + eps))
        d = np.sqrt(((p - np.asarray(b["center"])) ** 2).sum(axis=1))
        return d <= b["radius"] + eps


def _check_positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive, got {v}")


def block_indices(positions: np.ndarray, edge: float, origin=None) -> tuple[np.ndarray, tuple[int, int], np.ndarray]:
    """Block (ix, iy) of each point, the grid shape and the grid origin.

    The grid starts at the XY min corner; points on the far edge of the
    extent fall into the last block, so the block count per axis is
    ``max(1, ceil(extent / edge))``.
    """
    xy = positions[:, :2]
    o = xy.min(axis=0) if origin is None else np.asarray(origin, dtype=np.float64)
    ext = xy.max(axis=0) - o
    shape = np.maximum(1, np.ceil(ext / edge - 1e-12).astype(np.int64))
    ij = np.floor((xy - o) / edge).astype(np.int64)
    ij = np.clip(ij, 0, shape - 1)
    return ij, (int(shape[0]), int(shape[1])), o


def tile_blocks(cloud: LabeledPointCloud, edge: float) -> list[Tile]:
    """Partition a cloud into ``edge`` x ``edge`` XY blocks; only non-empty blocks are returned."""
    _check_positive(edge=edge)
    if not len(cloud):
        return []
    ij, shape, o = block_indices(cloud.positions, edge)
    key = ij[:, 0] * shape[1] + ij[:, 1]
    order = np.argsort(key, kind="stable")
    keys, starts = np.unique(key[order], return_index=True)
    ends = np.append(starts[1:], len(order))
    tiles = []
    for k, a, b in zip(keys, starts, ends):
        ix, iy = divmod(int(k), shape[1])
        idx = np.sort(order[a:b])
        bounds = {
            "kind": "block",
            "xmin": float(o[0] + ix * edge), "xmax": float(o[0] + (ix + 1) * edge),
            "ymin": float(o[1] + iy * edge), "ymax": float(o[1] + (iy + 1) * edge),
            "ix": ix, "iy": iy,
        }
        # the last row/column also takes points exactly on the far edge of the extent
        if ix == shape[0] - 1:
            bounds["xmax"] = max(bounds["xmax"], float(cloud.positions[:, 0].max()))
        if iy == shape[1] - 1:
            bounds["ymax"] = max(bounds["ymax"], float(cloud.positions[:, 1].max()))
        tiles.append(Tile(cloud.subset(idx), idx, bounds))
    return tiles


def _distances(cloud: LabeledPointCloud, center) -> np.ndarray:
    c = np.asarray(center, dtype=np.float64).reshape(3)
    return np.sqrt(((cloud.positions - c) ** 2).sum(axis=1))


def sample_sphere(cloud: LabeledPointCloud, center, radius: float) -> Tile:
    """Every point within ``radius`` (3D, inclusive) of ``center``."""
    _check_positive(radius=radius)
    c = [float(v) for v in np.asarray(center, dtype=np.float64).reshape(3)]
    idx = np.flatnonzero(_distances(cloud, c) <= radius) if len(cloud) else np.zeros(0, np.int64)
    return Tile(cloud.subset(idx), idx, {"kind": "sphere", "center": c, "radius": float(radius)})


def sample_fixed_count(cloud: LabeledPointCloud, center, n: int, seed: int = 0) -> Tile:
    """The ``n`` points nearest ``center``, ordered by (distance, index).

    With fewer than ``n`` points, all of them are taken and the remainder is
    drawn with replacement (seeded); the tile is then flagged ``replaced``.
    """
    n = int(n)
    _check_positive(n=n)
    c = [float(v) for v in np.asarray(center, dtype=np.float64).reshape(3)]
    if not len(cloud):
        return Tile(cloud, np.zeros(0, np.int64), {"kind": "count", "center": c, "n": n, "radius": 0.0})
    d = _distances(cloud, c)
    order = np.lexsort((np.arange(len(d)), d))
    replaced = len(d) < n
    if replaced:
        extra = np.random.default_rng(seed).choice(len(d), n - len(d), replace=True)
        idx = np.concatenate([order, order[extra]])
    else:
        idx = order[:n]
    r = float(d[idx].max())
    return Tile(cloud.subset(idx), idx, {"kind": "count", "center": c, "n": n, "radius": r}, replaced)


def write_tiles(directory: str | os.PathLike, tiles: list[Tile], prefix: str = "tile") -> str:
    """One binary PLY per tile plus ``tiles.json`` describing them; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    width = max(3, len(str(len(tiles))))
    for k, t in enumerate(tiles):
        name = f"{prefix}_{k:0{width}d}.ply"
        write_cloud_ply(os.path.join(directory, name), t.cloud)
        entries.append({"file": name, "points": len(t), "replaced": t.replaced, "bounds": t.bounds})
    path = os.path.join(directory, "tiles.json")
    with open(path, "w") as fh:
        json.dump({"tiles": entries}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
