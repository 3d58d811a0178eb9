"""Small constructed scenes shared by module tests and the acceptance suite."""
from __future__ import annotations

import numpy as np

from aerialsynth import classes as C
from aerialsynth.flight_render import CameraIntrinsics, mesh_bvh, plan_crosshatch
from aerialsynth.pointcloud import LabeledPointCloud
from aerialsynth.scene_gen import sphere_crown_asset
from aerialsynth.scene_gen.mesh import LabeledMesh

CROWN_RADIUS = 4.0
CROWN_TRUNK = 2.0


def ground_plane(half=40.0, z=0.0, sem=C.GRASS, cells=8):
    """Square plane split into cells x cells quads."""
    g = np.linspace(-half, half, cells + 1)
    xs, ys = np.meshgrid(g, g)
    v = np.column_stack([xs.ravel(), ys.ravel(), np.full(xs.size, z)])
    tris = []
    for i in range(cells):
        for j in range(cells):
            a = i * (cells + 1) + j
            b, c, d = a + 1, a + cells + 2, a + cells + 1
            tris += [[a, b, c], [a, c, d]]
    t = np.array(tris)
    return LabeledMesh(v, t, np.full(len(t), sem), np.zeros(len(t)))


def crown_scene():
    """A sphere-crown tree standing on a ground plane; returns (mesh, crown triangle mask, crown centre)."""
    asset = sphere_crown_asset(CROWN_RADIUS, CROWN_TRUNK)
    tree = LabeledMesh(asset.vertices, asset.triangles, np.full(len(asset.triangles), asset.semantic),
                       np.full(len(asset.triangles), 1))
    mesh = LabeledMesh.concatenate([ground_plane(half=12.0, cells=4), tree])
    crown = np.zeros(len(mesh), bool)
    # icosphere triangles come after the trunk; tell them apart by height
    a, b, c = mesh.corners()
    centroid_z = (a[:, 2] + b[:, 2] + c[:, 2]) / 3
    crown[len(mesh) - len(tree):] = (centroid_z > CROWN_TRUNK + 0.5)[len(mesh) - len(tree):]
    return mesh, crown, np.array([0.0, 0.0, CROWN_TRUNK + CROWN_RADIUS])


def crown_plan(altitude=30.0, overlap=0.8):
    intr = CameraIntrinsics.from_fov(120, 90, 60.0)
    return plan_crosshatch((-15, -15, 15, 15), altitude, overlap, overlap, intr)


def crown_bvh():
    mesh, crown, centre = crown_scene()
    return mesh, mesh_bvh(mesh), crown, centre


def rooftop_island(seed=0, spacing=0.5):
    """Ground grid at z=0 beside a flat roof at z=6, with a few ground-labeled points on the roof.

    Returns the cloud and the indices of the island points.
    """
    rng = np.random.default_rng(seed)
    g = np.arange(0.0, 20.0 + 1e-9, spacing)
    gx, gy = np.meshgrid(g, g)
    ground = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    r = np.arange(30.0, 40.0 + 1e-9, spacing)
    rx, ry = np.meshgrid(r, r)
    roof = np.column_stack([rx.ravel(), ry.ravel(), np.full(rx.size, 6.0)])
    pos = np.vstack([ground, roof])
    sem = np.concatenate([np.full(len(ground), C.ROAD), np.full(len(roof), C.BUILDING)]).astype(np.uint8)
    inst = np.concatenate([np.zeros(len(ground)), np.full(len(roof), 12)]).astype(np.uint32)
    # three adjacent roof points carry leaked ground labels
    centre = len(ground) + len(roof) // 2
    island = np.array([centre - 1, centre, centre + 1])
    sem[island] = [C.GRASS, C.DIRT, C.ROAD]
    inst[island] = 0
    perm_noise = rng.normal(scale=1e-3, size=pos.shape)
    perm_noise[:, 2] = 0
    return LabeledPointCloud(pos + perm_noise, sem, inst), island
