"""Assembly of terrain, buildings and placed objects into one labeled mesh."""
from __future__ import annotations

import numpy as np

from .. import classes as C
from ..geometry import polygon_distance, polyline_distance
from .assets import AssetCatalog
from .buildings import BuildingFootprint
from .mesh import LabeledMesh, MeshError
from .placement import PlacedObject, RoadNetwork
from .terrain import HeightField


def terrain_mesh(hf: HeightField) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = hf.shape
    verts = hf.node_positions()
    r, c = np.meshgrid(np.arange(rows - 1), np.arange(cols - 1), indexing="ij")
    a = (r * cols + c).ravel()
    b = a + 1
    d = a + cols
    e = d + 1
    tris = np.empty((2 * len(a), 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, e])
    tris[1::2] = np.column_stack([a, e, d])
    return verts, tris


def terrain_cover(
    centroids: np.ndarray,
    roads: RoadNetwork,
    footprints: list[BuildingFootprint],
    dirt_buffer: float,
) -> np.ndarray:
    """road within half a road width of its centre line, dirt within the building buffer, grass elsewhere."""
    xy = centroids[:, :2]
    labels = np.full(len(xy), C.GRASS, dtype=np.uint8)
    if footprints and dirt_buffer > 0:
        near = np.zeros(len(xy), dtype=bool)
        for fp in footprints:
            lo, hi = fp.ring.min(axis=0) - dirt_buffer, fp.ring.max(axis=0) + dirt_buffer
            box = (xy[:, 0] >= lo[0]) & (xy[:, 0] <= hi[0]) & (xy[:, 1] >= lo[1]) & (xy[:, 1] <= hi[1])
            if box.any():
                near[box] |= polygon_distance(xy[box], fp.ring) <= dirt_buffer
        labels[near] = C.DIRT
    for seg in roads.segments:
        labels[polyline_distance(xy, seg.points) <= seg.width / 2] = C.ROAD
    return labels


def assemble_scene(
    hf: HeightField,
    buildings_mesh: LabeledMesh,
    objects: list[PlacedObject],
    catalog: AssetCatalog,
    roads: RoadNetwork,
    footprints: list[BuildingFootprint] = (),
    dirt_buffer: float = 3.0,
    seed: int = 0,
) -> LabeledMesh:
    """Merge everything into a single mesh with per-triangle labels.

    Vegetation objects are re-classified from their placed bounding-box height.
    Raises :class:`KeyError` for a model missing from the catalog and
    :class:`MeshError` if object instance ids collide with building ids.
    """
    rng = np.random.default_rng(seed)
    verts, tris = terrain_mesh(hf)
    centroids = verts[tris].mean(axis=1)
    footprints = [fp.validated(k) for k, fp in enumerate(footprints)]
    cover = terrain_cover(centroids, roads, footprints, dirt_buffer)
    shade = rng.integers(-6, 7, size=(len(tris), 1))
    base = np.array([C.base_color(c) for c in range(C.NUM_CLASSES)], dtype=np.int64)
    tcolor = np.clip(base[cover] + shade, 0, 255).astype(np.uint8)
    parts = [LabeledMesh(verts, tris, cover, np.zeros(len(tris)), tcolor, np.full(len(tris), np.inf))]
    if len(buildings_mesh):
        parts.append(buildings_mesh)

    used = set(np.unique(buildings_mesh.tri_instance).tolist()) - {0}
    for obj in objects:
        asset = catalog[obj.model_id]
        if obj.instance_id in used:
            raise MeshError(f"instance id {obj.instance_id} is used twice")
        used.add(obj.instance_id)
        semantic = obj.semantic
        if semantic in C.VEGETATION:
            semantic = C.vegetation_class(asset.height * obj.scale)
        v = asset.transformed(obj.position, obj.yaw, obj.scale)
        m = len(asset.triangles)
        parts.append(LabeledMesh(
            v,
            asset.triangles,
            np.full(m, semantic),
            np.full(m, obj.instance_id),
            np.tile(np.asarray(C.jittered_color(semantic, rng), np.uint8), (m, 1)),
            np.full(m, asset.width * obj.scale),
        ))
    mesh = LabeledMesh.concatenate(parts)
    mesh.validate()
    return mesh
