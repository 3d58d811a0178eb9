"""Labeled triangle meshes and the primitive shapes the asset catalog is built from."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..classes import INSTANCE_CLASSES
from ..ply import read_ply, write_ply


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledMesh:
    """Triangle soup with a semantic class and instance id per triangle.

    ``tri_color`` is display payload only. ``tri_width`` is the narrowest
    horizontal extent of the object a triangle belongs to (``inf`` for
    terrain and buildings); the reconstruction simulator uses it for
    thin-structure dropout.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tri_semantic: np.ndarray
    tri_instance: np.ndarray
    tri_color: np.ndarray | None = None
    tri_width: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        m = len(t)
        sem = np.ascontiguousarray(self.tri_semantic, dtype=np.uint8).reshape(-1)
        inst = np.ascontiguousarray(self.tri_instance, dtype=np.uint32).reshape(-1)
        if len(sem) != m or len(inst) != m:
            raise MeshError("per-triangle label arrays must match the triangle count")
        color = self.tri_color
        if color is None:
            color = np.full((m, 3), 128, np.uint8)
        color = np.ascontiguousarray(color, dtype=np.uint8).reshape(-1, 3)
        width = self.tri_width
        if width is None:
            width = np.full(m, np.inf)
        width = np.ascontiguousarray(width, dtype=np.float64).reshape(-1)
        if len(color) != m or len(width) != m:
            raise MeshError("per-triangle payload arrays must match the triangle count")
        for name, val in (("vertices", v), ("triangles", t), ("tri_semantic", sem),
                          ("tri_instance", inst), ("tri_color", color), ("tri_width", width)):
            object.__setattr__(self, name, val)

    def __len__(self) -> int:
        return len(self.triangles)

    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = self.triangles
        return self.vertices[t[:, 0]], self.vertices[t[:, 1]], self.vertices[t[:, 2]]

    def areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def normals(self) -> np.ndarray:
        a, b, c = self.corners()
        n = np.cross(b - a, c - a)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def validate(self) -> None:
        """Raise :class:`MeshError` on out-of-range indices, degenerate triangles or missing instances."""
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise MeshError("triangle vertex index out of range")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinates")
        bad = np.flatnonzero(self.areas() <= 1e-12)
        if len(bad):
            raise MeshError(f"{len(bad)} degenerate triangles, first at index {bad[0]}")
        needs = np.isin(self.tri_semantic, INSTANCE_CLASSES) & (self.tri_instance == 0)
        if needs.any():
            raise MeshError(f"instance-capable triangle {np.flatnonzero(needs)[0]} has no instance id")

    @staticmethod
    def concatenate(meshes: list["LabeledMesh"]) -> "LabeledMesh":
        meshes = [m for m in meshes if len(m)]
        if not meshes:
            return empty_mesh()
        offsets = np.cumsum([0] + [len(m.vertices) for m in meshes[:-1]])
        return LabeledMesh(
            np.concatenate([m.vertices for m in meshes]),
            np.concatenate([m.triangles + o for m, o in zip(meshes, offsets)]),
            np.concatenate([m.tri_semantic for m in meshes]),
            np.concatenate([m.tri_instance for m in meshes]),
            np.concatenate([m.tri_color for m in meshes]),
            np.concatenate([m.tri_width for m in meshes]),
        )


def empty_mesh() -> LabeledMesh:
    return LabeledMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64), np.zeros(0), np.zeros(0))


def write_mesh_ply(path: str | os.PathLike, mesh: LabeledMesh) -> None:
    v = mesh.vertices
    write_ply(
        path,
        {"x": v[:, 0], "y": v[:, 1], "z": v[:, 2]},
        faces=mesh.triangles,
        face_props={
            "semantic": mesh.tri_semantic.astype(np.int32),
            "instance": mesh.tri_instance.astype(np.int32),
            "red": mesh.tri_color[:, 0],
            "green": mesh.tri_color[:, 1],
            "blue": mesh.tri_color[:, 2],
            "width": mesh.tri_width.astype(np.float32),
        },
    )


def read_mesh_ply(path: str | os.PathLike) -> LabeledMesh:
    v, f = read_ply(path)
    if f is None:
        raise MeshError(f"{path}: no face element")
    color = None
    if "red" in f:
        color = np.column_stack([f["red"], f["green"], f["blue"]])
    width = f["width"].astype(np.float64) if "width" in f else None
    return LabeledMesh(
        np.column_stack([v["x"], v["y"], v["z"]]),
        f["vertex_indices"],
        f["semantic"],
        f["instance"],
        color,
        width,
    )


# ---------------------------------------------------------------------------
# primitives: plain (vertices, triangles) pairs with outward-facing winding


def box(center, size) -> tuple[np.ndarray, np.ndarray]:
    cx, cy, cz = center
    sx, sy, sz = (s / 2 for s in size)
    v = np.array([
        [cx - sx, cy - sy, cz - sz], [cx + sx, cy - sy, cz - sz],
        [cx + sx, cy + sy, cz - sz], [cx - sx, cy + sy, cz - sz],
        [cx - sx, cy - sy, cz + sz], [cx + sx, cy - sy, cz + sz],
        [cx + sx, cy + sy, cz + sz], [cx - sx, cy + sy, cz + sz],
    ])
    t = np.array([
        [0, 2, 1], [0, 3, 2],  # bottom
        [4, 5, 6], [4, 6, 7],  # top
        [0, 1, 5], [0, 5, 4],
        [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6],
        [3, 0, 4], [3, 4, 7],
    ])
    return v, t


def cylinder(center_base, radius, height, segments=8) -> tuple[np.ndarray, np.ndarray]:
    cx, cy, cz = center_base
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    ring = np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)])
    bottom = np.column_stack([ring, np.full(segments, cz)])
    top = np.column_stack([ring, np.full(segments, cz + height)])
    v = np.vstack([bottom, top, [[cx, cy, cz], [cx, cy, cz + height]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [[i, j, segments + j], [i, segments + j, segments + i]]
        tris += [[cb, j, i], [ct, segments + i, segments + j]]
    return v, np.array(tris)


def cone(center_base, radius, height, segments=8) -> tuple[np.ndarray, np.ndarray]:
    cx, cy, cz = center_base
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    ring = np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang), np.full(segments, cz)])
    v = np.vstack([ring, [[cx, cy, cz], [cx, cy, cz + height]]])
    cb, apex = segments, segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [[i, j, apex], [cb, j, i]]
    return v, np.array(tris)


def ellipsoid(center, radii, stacks=6, slices=10) -> tuple[np.ndarray, np.ndarray]:
    """UV ellipsoid with fan caps at the poles (no degenerate triangles)."""
    cx, cy, cz = center
    rx, ry, rz = radii
    verts = [[cx, cy, cz + rz]]
    for i in range(1, stacks):
        phi = np.pi * i / stacks
        for j in range(slices):
            th = 2 * np.pi * j / slices
            verts.append([cx + rx * np.sin(phi) * np.cos(th), cy + ry * np.sin(phi) * np.sin(th),
                          cz + rz * np.cos(phi)])
    verts.append([cx, cy, cz - rz])
    south = len(verts) - 1
    tris = []
    for j in range(slices):
        tris.append([0, 1 + j, 1 + (j + 1) % slices])
    for i in range(stacks - 2):
        r0 = 1 + i * slices
        r1 = r0 + slices
        for j in range(slices):
            a, b = r0 + j, r0 + (j + 1) % slices
            c, d = r1 + j, r1 + (j + 1) % slices
            tris += [[a, c, d], [a, d, b]]
    last = 1 + (stacks - 2) * slices
    for j in range(slices):
        tris.append([south, last + (j + 1) % slices, last + j])
    return np.array(verts, dtype=np.float64), np.array(tris)


def icosphere(center, radius, subdivisions=2) -> tuple[np.ndarray, np.ndarray]:
    t = (1 + 5 ** 0.5) / 2
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = nf
    return np.asarray(center, dtype=np.float64) + radius * np.array(verts), np.array(f)


def merge_parts(parts: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    verts, tris, off = [], [], 0
    for v, t in parts:
        verts.append(v)
        tris.append(t + off)
        off += len(v)
    return np.vstack(verts), np.vstack(tris)
