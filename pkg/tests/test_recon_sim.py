import math

import numpy as np
import pytest

from aerialsynth import classes as C
from aerialsynth.flight_render import (
    CameraIntrinsics,
    CameraPose,
    FlightPlan,
    coverage_counts,
    footprints,
    mesh_bvh,
    plan_crosshatch,
    render,
)
from aerialsynth.geometry import point_in_polygon
from aerialsynth.pcproc import volume_density_histogram
from aerialsynth.pointcloud import LabeledPointCloud
from aerialsynth.recon_sim import (
    NoiseParams,
    ReconError,
    backproject_proxy,
    camera_bounds,
    inside_closed_mesh,
    sample_uniform_volume,
    simulate_reconstruction,
    view_counts,
)
from aerialsynth.scene_gen.mesh import LabeledMesh, box, icosphere

from fixtures import CROWN_RADIUS, crown_bvh, crown_plan, ground_plane
from oracles import mesh_distance

NOISELESS = dict(surface_sigma=0.0, outlier_rate=0.0, thin_dropout_width=0.0)


def small_plan(aoi=(-10, -10, 10, 10), altitude=25.0, overlap=0.75):
    return plan_crosshatch(aoi, altitude, overlap, overlap, CameraIntrinsics.from_fov(64, 48, 60.0))


# -- proxy ---------------------------------------------------------------------------

def test_backprojected_plane_points_lie_on_the_plane():
    mesh = ground_plane(z=2.0)
    bvh = mesh_bvh(mesh)
    intr = CameraIntrinsics.from_fov(40, 30)
    img = render(intr, CameraPose((1, 2, 30), 0.4, -1.2, 0.0), bvh, mesh)
    cloud = backproject_proxy([img])
    assert len(cloud) == img.hit.sum() > 0
    assert np.max(np.abs(cloud.positions[:, 2] - 2.0)) < 1e-6
    assert np.all(cloud.semantic == C.GRASS)


def test_miss_only_image_gives_empty_cloud():
    mesh = ground_plane()
    img = render(CameraIntrinsics.from_fov(8, 8), CameraPose((0, 0, 10), 0.0, math.pi / 2), mesh_bvh(mesh), mesh)
    assert len(backproject_proxy([img])) == 0
    assert len(backproject_proxy([])) == 0


def test_two_cameras_count_every_hit_pixel():
    mesh = ground_plane()
    bvh = mesh_bvh(mesh)
    intr = CameraIntrinsics.from_fov(30, 20)
    imgs = [render(intr, CameraPose.nadir((0, 0, 20)), bvh, mesh),
            render(intr, CameraPose((0, 0, 20), 0.0, -0.3), bvh, mesh)]  # oblique, partly sky
    assert 0 < imgs[1].hit.sum() < imgs[1].hit.size
    assert len(backproject_proxy(imgs)) == sum(int(i.hit.sum()) for i in imgs)


def test_mixed_intrinsics_are_rejected():
    mesh = ground_plane()
    bvh = mesh_bvh(mesh)
    a = render(CameraIntrinsics.from_fov(8, 8), CameraPose.nadir((0, 0, 10)), bvh, mesh)
    b = render(CameraIntrinsics.from_fov(8, 6), CameraPose.nadir((0, 0, 10)), bvh, mesh)
    with pytest.raises(ValueError, match="intrinsics"):
        backproject_proxy([a, b])


# -- simulator -----------------------------------------------------------------------

def test_params_validation():
    for kw in (dict(surface_sigma=-1), dict(outlier_rate=1.5), dict(min_views=0), dict(min_views=1.5),
               dict(density_per_view=0), dict(dropout_prob=2), dict(max_incidence_deg=0),
               dict(max_incidence_deg=95)):
        with pytest.raises(ReconError):
            NoiseParams(**kw)


def test_empty_plan_is_an_error():
    mesh = ground_plane()
    plan = FlightPlan(CameraIntrinsics.from_fov(8, 8), (), 10.0, 0.8, 0.8)
    with pytest.raises(ReconError):
        simulate_reconstruction(mesh, mesh_bvh(mesh), plan)


def test_noiseless_points_lie_on_the_mesh_and_carry_no_labels():
    mesh, bvh, _, _ = crown_bvh()
    cloud, info = simulate_reconstruction(mesh, bvh, crown_plan(),
                                          NoiseParams(density_per_view=0.5, **NOISELESS), return_details=True)
    assert len(cloud) > 1000
    assert np.all(cloud.semantic == C.UNLABELED) and np.all(cloud.instance == 0)
    sample = np.random.default_rng(0).choice(len(cloud), 400, replace=False)
    d = mesh_distance(cloud.positions[sample], mesh.vertices, mesh.triangles)
    assert d.max() < 1e-6
    # and each point lies on the triangle it was drawn from
    a, b, c = mesh.corners()
    t = info["triangle"]
    n = np.cross(b[t] - a[t], c[t] - a[t])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    assert np.max(np.abs(np.einsum("ij,ij->i", cloud.positions - a[t], n))) < 1e-6


def test_unsatisfiable_visibility_gives_empty_cloud():
    mesh = ground_plane(half=10)
    plan = small_plan()
    cloud = simulate_reconstruction(mesh, mesh_bvh(mesh), plan, NoiseParams(min_views=len(plan) + 1))
    assert len(cloud) == 0


def test_outlier_count_follows_binomial_bound():
    mesh = ground_plane(half=10)
    params = NoiseParams(outlier_rate=0.01, density_per_view=9.0, thin_dropout_width=0.0, seed=4)
    cloud, info = simulate_reconstruction(mesh, mesh_bvh(mesh), small_plan(), params, return_details=True)
    n = len(cloud)
    assert 80_000 < n < 125_000
    k = int(info["outlier"].sum())
    # binomial(n, 0.01): 4 standard deviations
    assert abs(k - 0.01 * n) <= 4 * math.sqrt(n * 0.01 * 0.99)
    if 95_000 <= n <= 105_000:
        assert 800 <= k <= 1200


def test_roof_underside_is_never_reconstructed():
    slab_v, slab_t = box((0.0, 0.0, 5.5), (6.0, 6.0, 1.0))
    slab = LabeledMesh(slab_v, slab_t, np.full(len(slab_t), C.BUILDING), np.full(len(slab_t), 1))
    mesh = LabeledMesh.concatenate([ground_plane(half=10), slab])
    cloud, info = simulate_reconstruction(mesh, mesh_bvh(mesh), small_plan(),
                                          NoiseParams(min_views=1, **NOISELESS), return_details=True)
    down = mesh.normals()[:, 2] < -0.99
    assert down.sum() == 2
    assert not np.any(down[info["triangle"]])
    # and nothing is sampled on the ground straight under the slab's centre
    under = (np.abs(cloud.positions[:, 0]) < 1) & (np.abs(cloud.positions[:, 1]) < 1) & (cloud.positions[:, 2] < 1)
    assert not under.any()


def test_simulation_is_deterministic_per_seed():
    mesh, bvh, _, _ = crown_bvh()
    plan = crown_plan()
    p = NoiseParams(density_per_view=0.3, seed=9)
    a = simulate_reconstruction(mesh, bvh, plan, p)
    b = simulate_reconstruction(mesh, bvh, plan, p)
    c = simulate_reconstruction(mesh, bvh, plan, NoiseParams(density_per_view=0.3, seed=10))
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.colors, b.colors)
    assert len(a) != len(c) or not np.array_equal(a.positions, c.positions)


def test_thin_features_lose_points():
    v, t = box((0.0, 0.0, 2.0), (0.15, 3.0, 4.0))
    wall = LabeledMesh(v, t, np.full(len(t), C.FENCE), np.full(len(t), 1), tri_width=np.full(len(t), 0.15))
    mesh = LabeledMesh.concatenate([ground_plane(half=10), wall])
    bvh = mesh_bvh(mesh)
    kw = dict(surface_sigma=0.0, outlier_rate=0.0, min_views=1, seed=2)
    _, keep = simulate_reconstruction(mesh, bvh, small_plan(), NoiseParams(thin_dropout_width=0.0, **kw), True)
    _, drop = simulate_reconstruction(mesh, bvh, small_plan(), NoiseParams(thin_dropout_width=0.3, dropout_prob=0.8, **kw), True)
    is_wall = mesh.tri_semantic == C.FENCE
    n_keep, n_drop = is_wall[keep["triangle"]].sum(), is_wall[drop["triangle"]].sum()
    assert n_keep > 200
    assert n_drop == pytest.approx(0.2 * n_keep, abs=4 * math.sqrt(n_keep * 0.16) + 1)
    assert (~is_wall[drop["triangle"]]).sum() == (~is_wall[keep["triangle"]]).sum()


def test_view_counts_match_footprint_coverage_on_open_ground():
    mesh = ground_plane(half=30, cells=2)
    plan = small_plan()
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-12, 12, 300), rng.uniform(-12, 12, 300), np.zeros(300)])
    tri = np.zeros(300, np.int64)  # every ground triangle shares the same normal
    counts = view_counts(mesh, mesh_bvh(mesh), plan, pts, tri)
    expected = coverage_counts(plan, pts[:, :2]).sum(axis=1)
    # points within a hair of a footprint edge may differ through rounding
    assert np.mean(counts == expected) > 0.98


def test_incidence_gate_matches_angle_oracle():
    mesh = ground_plane(half=30, cells=2)
    plan = small_plan()
    rng = np.random.default_rng(2)
    pts = np.column_stack([rng.uniform(-12, 12, 300), rng.uniform(-12, 12, 300), np.zeros(300)])
    tri = np.zeros(300, np.int64)
    bvh = mesh_bvh(mesh)
    ungated = view_counts(mesh, bvh, plan, pts, tri)
    assert np.array_equal(view_counts(mesh, bvh, plan, pts, tri, max_incidence_deg=90.0), ungated)
    gated = view_counts(mesh, bvh, plan, pts, tri, max_incidence_deg=20.0)
    centers = np.array([p.position for p in plan.poses])
    d = centers[None, :, :] - pts[:, None, :]
    angle = np.degrees(np.arccos(d[..., 2] / np.linalg.norm(d, axis=2)))
    inside = np.column_stack([point_in_polygon(pts[:, :2], fp) for fp in footprints(plan)])
    expected = (inside & (angle <= 20.0)).sum(axis=1)
    assert np.all(gated <= ungated) and gated.sum() < ungated.sum()
    assert np.mean(gated == expected) > 0.98


def test_camera_bound_is_conservative():
    mesh, bvh, _, _ = crown_bvh()
    plan = crown_plan()
    bound = camera_bounds(mesh, plan)
    rng = np.random.default_rng(1)
    tri = rng.integers(0, len(mesh), 500)
    a, b, c = mesh.corners()
    r1, r2 = rng.random(500), rng.random(500)
    flip = r1 + r2 > 1
    r1[flip], r2[flip] = 1 - r1[flip], 1 - r2[flip]
    pts = a[tri] + r1[:, None] * (b[tri] - a[tri]) + r2[:, None] * (c[tri] - a[tri])
    assert np.all(view_counts(mesh, bvh, plan, pts, tri) <= bound[tri])


def test_inside_closed_mesh_and_uniform_volume():
    v, t = icosphere((1.0, 2.0, 3.0), 2.0, 3)
    pts = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 6.0], [2.5, 2.0, 3.0]])
    assert inside_closed_mesh(pts, v, t).tolist() == [True, False, True]
    s = sample_uniform_volume(v, t, 4000, seed=1)
    assert len(s) == 4000
    r = np.linalg.norm(s - (1.0, 2.0, 3.0), axis=1)
    assert r.max() <= 2.0
    # uniform in a ball: mean radius 3R/4
    assert r.mean() == pytest.approx(1.5, abs=0.03)


def test_shell_property_against_volume_baseline():
    mesh, bvh, crown, centre = crown_bvh()
    sigma = 0.05
    cloud, info = simulate_reconstruction(mesh, bvh, crown_plan(), NoiseParams(surface_sigma=sigma, density_per_view=1.0),
                                          return_details=True)
    sel = crown[info["triangle"]] & ~info["outlier"]
    pts = cloud.positions[sel]
    band = 3 * sigma + 0.05 * CROWN_RADIUS
    crown_tris = mesh.triangles[crown]
    d = mesh_distance(pts[:2000], mesh.vertices, crown_tris)
    assert np.mean(d <= band) >= 0.9
    vol = sample_uniform_volume(mesh.vertices, crown_tris, 2000, seed=3)
    assert np.mean(mesh_distance(vol, mesh.vertices, crown_tris) <= band) < 0.3
    prof = volume_density_histogram(LabeledPointCloud.unlabeled(pts),
                                    {"kind": "sphere", "center": centre, "radius": CROWN_RADIUS}, 10)
    assert prof.counts[-1] > 100 and prof.density[-1] > 5 * prof.density[0]
