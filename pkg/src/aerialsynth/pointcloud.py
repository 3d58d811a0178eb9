"""Labeled point cloud container and its file formats."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .classes import UNLABELED
from .ply import read_ply, write_ply


@dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    """Parallel arrays: positions (N,3) float64, colors (N,3) uint8 or None,
    semantic (N,) uint8 with 255 = unlabeled, instance (N,) uint32 with 0 = none."""

    positions: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray
    colors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        sem = np.ascontiguousarray(self.semantic, dtype=np.uint8).reshape(-1)
        inst = np.ascontiguousarray(self.instance, dtype=np.uint32).reshape(-1)
        n = len(pos)
        if len(sem) != n or len(inst) != n:
            raise ValueError(f"label arrays must have {n} entries, got {len(sem)} and {len(inst)}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("point positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "semantic", sem)
        object.__setattr__(self, "instance", inst)
        if self.colors is not None:
            col = np.ascontiguousarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(col) != n:
                raise ValueError(f"colors must have {n} rows, got {len(col)}")
            object.__setattr__(self, "colors", col)

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls) -> "LabeledPointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0, np.uint8), np.zeros(0, np.uint32))

    @classmethod
    def unlabeled(cls, positions, colors=None) -> "LabeledPointCloud":
        n = len(positions)
        return cls(positions, np.full(n, UNLABELED, np.uint8), np.zeros(n, np.uint32), colors)

    def subset(self, index) -> "LabeledPointCloud":
        return LabeledPointCloud(
            self.positions[index],
            self.semantic[index],
            self.instance[index],
            None if self.colors is None else self.colors[index],
        )

    def with_labels(self, semantic, instance) -> "LabeledPointCloud":
        return LabeledPointCloud(self.positions, semantic, instance, self.colors)

    @staticmethod
    def concatenate(clouds: list["LabeledPointCloud"]) -> "LabeledPointCloud":
        if not clouds:
            return LabeledPointCloud.empty()
        colors = None
        if all(c.colors is not None for c in clouds):
            colors = np.concatenate([c.colors for c in clouds])
        return LabeledPointCloud(
            np.concatenate([c.positions for c in clouds]),
            np.concatenate([c.semantic for c in clouds]),
            np.concatenate([c.instance for c in clouds]),
            colors,
        )


def write_cloud_ply(path: str | os.PathLike, cloud: LabeledPointCloud, labels: bool = True) -> None:
    cols = {"x": cloud.positions[:, 0], "y": cloud.positions[:, 1], "z": cloud.positions[:, 2]}
    if cloud.colors is not None:
        cols.update(red=cloud.colors[:, 0], green=cloud.colors[:, 1], blue=cloud.colors[:, 2])
    if labels:
        cols.update(semantic=cloud.semantic, instance=cloud.instance)
    write_ply(path, cols)


def read_cloud_ply(path: str | os.PathLike) -> LabeledPointCloud:
    v, _ = read_ply(path)
    pos = np.column_stack([v["x"], v["y"], v["z"]]).astype(np.float64)
    n = len(pos)
    colors = None
    if "red" in v:
        colors = np.column_stack([v["red"], v["green"], v["blue"]])
    sem = v.get("semantic", np.full(n, UNLABELED, np.uint8))
    inst = v.get("instance", np.zeros(n, np.uint32))
    return LabeledPointCloud(pos, sem, inst, colors)


def write_cloud_txt(path: str | os.PathLike, cloud: LabeledPointCloud) -> None:
    """Whitespace text, one point per line: ``x y z r g b sem inst``."""
    colors = cloud.colors if cloud.colors is not None else np.zeros((len(cloud), 3), np.uint8)
    table = np.column_stack([cloud.positions, colors, cloud.semantic, cloud.instance])
    np.savetxt(path, table, fmt="%.6f %.6f %.6f %d %d %d %d %d")


def read_cloud_txt(path: str | os.PathLike) -> LabeledPointCloud:
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        return LabeledPointCloud.empty()
    if data.shape[1] != 8:
        raise ValueError(f"{path}: expected 8 columns (x y z r g b sem inst), got {data.shape[1]}")
    return LabeledPointCloud(data[:, :3], data[:, 6], data[:, 7], data[:, 3:6])


def read_cloud(path: str | os.PathLike) -> LabeledPointCloud:
    if str(path).lower().endswith(".ply"):
        return read_cloud_ply(path)
    return read_cloud_txt(path)
