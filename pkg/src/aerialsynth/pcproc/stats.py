"""Dataset statistics: per-class counts and volume density profiles."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .. import classes as C
from ..pointcloud import LabeledPointCloud


def class_histogram(cloud: LabeledPointCloud, ids=None) -> dict[int, int]:
    """Point count per class id. Every id in ``ids`` (default: all known classes)
    gets an entry; the unlabeled id appears only when present."""
    counts = np.bincount(cloud.semantic, minlength=256)
    ids = list(C.CLASS_NAMES) if ids is None else [int(i) for i in ids]
    out = {i: int(counts[i]) for i in ids}
    for i in np.flatnonzero(counts):
        out.setdefault(int(i), int(counts[i]))
    return dict(sorted(out.items()))


def write_histogram_csv(path: str | os.PathLike, hist: dict[int, int], names: dict | None = None) -> None:
    """Columns: class_id, name, count, log10_count (empty for zero counts).

    ``names`` maps ids to display names; the fine taxonomy is used by default.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class_id", "name", "count", "log10_count"])
        for cid, n in hist.items():
            if names is not None:
                name = names.get(cid, str(cid))
            else:
                name = C.class_name(cid) if cid in C.CLASS_NAMES or cid == C.UNLABELED else str(cid)
            w.writerow([cid, name, n, f"{math.log10(n):.6f}" if n > 0 else ""])


@dataclass(frozen=True)
class DensityProfile:
    kind: str            # "sphere" (radial shells) or "box" (slabs)
    edges: np.ndarray    # bins + 1 shell radii or slab coordinates
    counts: np.ndarray
    volumes: np.ndarray

    @property
    def density(self) -> np.ndarray:
        return self.counts / self.volumes

    def rows(self) -> list[dict]:
        return [
            {"bin": k, "lo": float(self.edges[k]), "hi": float(self.edges[k + 1]),
             "count": int(self.counts[k]), "volume": float(self.volumes[k]), "density": float(self.density[k])}
            for k in range(len(self.counts))
        ]


def volume_density_histogram(cloud: LabeledPointCloud, region: dict, bins: int = 10) -> DensityProfile:
    """Density per bin of a sphere (equal-volume shells) or a box (equal slabs).

    ``region`` is ``{"kind": "sphere", "center": c, "radius": R}`` or
    ``{"kind": "box", "min": lo, "max": hi, "axis": 2}``. Shell k spans radii
    ``R (k/n)^(1/3)`` to ``R ((k+1)/n)^(1/3)`` so each has volume ``4/3 pi R^3 / n``.
    Points outside the region are ignored.
    """
    bins = int(bins)
    if bins < 1:
        raise ValueError("bins must be at least 1")
    pos = cloud.positions
    kind = region.get("kind")
    if kind == "sphere":
        R = float(region["radius"])
        if not R > 0:
            raise ValueError("sphere radius must be positive")
        edges = R * np.cbrt(np.arange(bins + 1) / bins)
        edges[-1] = R
        d = np.sqrt(((pos - np.asarray(region["center"], dtype=np.float64)) ** 2).sum(axis=1))
        d = d[d <= R]
        k = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, bins - 1)
        volumes = np.full(bins, 4.0 / 3.0 * math.pi * R ** 3 / bins)
    elif kind == "box":
        lo = np.asarray(region["min"], dtype=np.float64)
        hi = np.asarray(region["max"], dtype=np.float64)
        if np.any(hi <= lo):
            raise ValueError("box must have positive extent on every axis")
        ax = int(region.get("axis", 2))
        edges = np.linspace(lo[ax], hi[ax], bins + 1)
        inside = np.all((pos >= lo) & (pos <= hi), axis=1)
        v = pos[inside, ax]
        k = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, bins - 1)
        other = [a for a in range(3) if a != ax]
        area = (hi[other[0]] - lo[other[0]]) * (hi[other[1]] - lo[other[1]])
        volumes = np.full(bins, area * (hi[ax] - lo[ax]) / bins)
    else:
        raise ValueError(f"unknown region kind {kind!r}")
    counts = np.bincount(k, minlength=bins).astype(np.int64)
    return DensityProfile(kind, edges, counts, volumes)


def write_density_csv(path: str | os.PathLike, profile: DensityProfile) -> None:
    rows = profile.rows()
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["bin", "lo", "hi", "count", "volume", "density"])
        w.writeheader()
        w.writerows(rows)
