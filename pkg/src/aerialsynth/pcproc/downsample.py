"""Voxel-grid downsampling that keeps real input points and their labels."""
from __future__ import annotations

import numpy as np

from ..pointcloud import LabeledPointCloud


def voxel_keys(positions: np.ndarray, spacing: float, origin=None) -> np.ndarray:
    """Integer voxel coordinates with the grid anchored at ``origin`` (default: the cloud's min corner)."""
    origin = positions.min(axis=0) if origin is None else np.asarray(origin, dtype=np.float64)
    return np.floor((positions - origin) / spacing).astype(np.int64)


def _first_per_group(group: np.ndarray, *sort_keys) -> np.ndarray:
    """Index of the first element of each group after sorting by (group, *sort_keys)."""
    order = np.lexsort(tuple(reversed((group,) + sort_keys)))
    g = group[order]
    head = np.ones(len(g), dtype=bool)
    head[1:] = g[1:] != g[:-1]
    return order[head]


def _majority(group: np.ndarray, labels: np.ndarray, n_groups: int, mask=None) -> np.ndarray:
    """Most frequent label per group, ties to the smallest label."""
    idx = np.arange(len(group)) if mask is None else np.flatnonzero(mask)
    pairs, counts = np.unique(np.column_stack([group[idx], labels[idx].astype(np.int64)]), axis=0,
                              return_counts=True)
    pick = _first_per_group(pairs[:, 0], -counts, pairs[:, 1])
    out = np.zeros(n_groups, dtype=np.int64)
    out[pairs[pick, 0]] = pairs[pick, 1]
    return out


def grid_downsample(cloud: LabeledPointCloud, spacing: float, origin=None,
                    return_index: bool = False):
    """One point per occupied voxel of edge ``spacing``.

    The survivor is the input point nearest the centroid of its voxel (lowest
    index on ties). Its semantic label is the voxel's majority class (ties to
    the smallest id); its instance is the majority instance among the voxel's
    points of that class (ties to the smallest id). Output keeps input order.
    """
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    n = len(cloud)
    if n == 0:
        return (cloud, np.zeros(0, np.int64)) if return_index else cloud
    pos = cloud.positions
    _, voxel = np.unique(voxel_keys(pos, spacing, origin), axis=0, return_inverse=True)
    voxel = voxel.reshape(-1)
    m = int(voxel.max()) + 1
    counts = np.bincount(voxel, minlength=m).astype(np.float64)
    centroid = np.column_stack([np.bincount(voxel, pos[:, k], minlength=m) for k in range(3)]) / counts[:, None]
    d2 = ((pos - centroid[voxel]) ** 2).sum(axis=1)
    rep = _first_per_group(voxel, d2, np.arange(n))

    sem = _majority(voxel, cloud.semantic, m)
    inst = _majority(voxel, cloud.instance, m, mask=cloud.semantic == sem[voxel])

    keep = np.sort(rep)
    vox_of_keep = voxel[keep]
    out = LabeledPointCloud(
        pos[keep],
        sem[vox_of_keep],
        inst[vox_of_keep],
        None if cloud.colors is None else cloud.colors[keep],
    )
    return (out, keep) if return_index else out
