import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerialsynth import classes as C
from aerialsynth.geometry import polygon_distance
from aerialsynth.scene_gen import (
    BuildingFootprint,
    FootprintError,
    HeightField,
    ParameterError,
    PlacementRule,
    RoadNetwork,
    RoadSegment,
    assemble_scene,
    default_catalog,
    empty_mesh,
    extrude_buildings,
    generate_terrain,
    place_objects,
    procedural_layout,
    read_geojson,
    read_heightfield,
    read_mesh_ply,
    sculpt_ground_details,
    terrain_mesh,
    write_geojson,
    write_heightfield,
    write_mesh_ply,
)
from aerialsynth.scene_gen.placement import PlacedObject

from oracles import barycentric_height, euler_characteristic, is_watertight, signed_volume


def flat(extent=100.0, cell=1.0, z=0.0):
    n = int(round(extent / cell)) + 1
    return HeightField((0.0, 0.0), cell, np.full((n, n), z))


def square(x0, y0, size, height=6.0, style="flat_plain"):
    ring = [[x0, y0], [x0 + size, y0], [x0 + size, y0 + size], [x0, y0 + size]]
    return BuildingFootprint(np.array(ring, dtype=float), height, style)


# ---------------------------------------------------------------- terrain


def test_terrain_zero_amplitude_is_flat():
    hf = generate_terrain(3, (50, 40), 2.0, 0.0)
    assert np.all(hf.elevations == hf.elevations.flat[0])


def test_terrain_deterministic():
    a = generate_terrain(7, (60, 60), 1.0, 5.0)
    b = generate_terrain(7, (60, 60), 1.0, 5.0)
    assert np.array_equal(a.elevations, b.elevations)
    c = generate_terrain(8, (60, 60), 1.0, 5.0)
    assert not np.array_equal(a.elevations, c.elevations)


def test_terrain_relief_scan():
    hf = generate_terrain(1, (100, 100), 1.0, 4.0)
    lo, hi = np.inf, -np.inf
    for row in hf.elevations:
        for z in row:
            lo, hi = min(lo, z), max(hi, z)
    assert hi - lo <= 4.0 + 1e-12
    assert hf.shape == (101, 101)


@pytest.mark.parametrize("extent,cell", [((0, 10), 1.0), ((10, 10), 0.0), ((10, -1), 1.0)])
def test_terrain_rejects_bad_parameters(extent, cell):
    with pytest.raises(ParameterError):
        generate_terrain(0, extent, cell, 1.0)


def test_height_at_matches_terrain_mesh_planes():
    hf = generate_terrain(2, (20, 20), 2.0, 3.0)
    verts, tris = terrain_mesh(hf)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 20, size=(200, 2))
    got = hf.height_at(pts[:, 0], pts[:, 1])
    for (x, y), z in zip(pts, got):
        ref = None
        for t in tris:
            ref = barycentric_height(verts[t], x, y)
            if ref is not None:
                break
        assert z == pytest.approx(ref, abs=1e-9)


def test_sculpt_noop_and_determinism():
    hf = generate_terrain(1, (100, 100), 1.0, 2.0)
    same = sculpt_ground_details(hf, 5, 0.0, 0.0)
    assert np.array_equal(same.elevations, hf.elevations)
    a = sculpt_ground_details(hf, 5, 20.0, 30.0)
    b = sculpt_ground_details(hf, 5, 20.0, 30.0)
    assert np.array_equal(a.elevations, b.elevations)


def test_sculpt_edits_are_shallow():
    hf = generate_terrain(1, (100, 100), 1.0, 2.0)
    ditched = sculpt_ground_details(hf, 3, 10.0, 0.0)
    diff = ditched.elevations - hf.elevations
    assert (diff < 0).any()
    assert diff.min() >= -0.5 and diff.max() <= 0.0
    bumped = sculpt_ground_details(hf, 3, 0.0, 10.0)
    diff = bumped.elevations - hf.elevations
    assert (diff > 0).any()
    assert diff.max() <= 0.5 and diff.min() >= 0.0


def test_sculpt_rejects_negative_rate():
    with pytest.raises(ParameterError):
        sculpt_ground_details(flat(), 0, -1.0, 0.0)


def test_heightfield_roundtrip(tmp_path):
    hf = generate_terrain(4, (30, 20), 1.5, 3.0, origin=(10.0, -5.0))
    write_heightfield(tmp_path / "hf.txt", hf)
    back = read_heightfield(tmp_path / "hf.txt")
    assert back.origin == hf.origin and back.cell_size == hf.cell_size
    assert np.array_equal(back.elevations, hf.elevations)


# ---------------------------------------------------------------- buildings


def test_plain_square_prism_has_twelve_triangles():
    mesh = extrude_buildings([square(10, 10, 10, 6.0)], flat())
    assert len(mesh) == 12
    assert is_watertight(mesh.triangles)
    assert euler_characteristic(mesh.triangles) == 2
    assert signed_volume(mesh.vertices, mesh.triangles) == pytest.approx(600.0)
    assert set(mesh.tri_semantic.tolist()) == {C.BUILDING}
    assert set(mesh.tri_instance.tolist()) == {1}


def test_triangle_footprint():
    fp = BuildingFootprint(np.array([[0, 0], [10, 0], [0, 10]], dtype=float), 5.0, "flat_plain")
    mesh = extrude_buildings([fp], flat(20))
    assert len(mesh) == 3 * 2 + 1 + 1
    assert is_watertight(mesh.triangles)
    assert signed_volume(mesh.vertices, mesh.triangles) == pytest.approx(250.0)


def test_bowtie_rejected_with_index():
    bowtie = BuildingFootprint(np.array([[0, 0], [10, 10], [10, 0], [0, 10]], dtype=float), 5.0)
    with pytest.raises(FootprintError) as err:
        extrude_buildings([square(30, 30, 10), bowtie], flat())
    assert err.value.index == 1


def test_clockwise_ring_and_closing_vertex_are_normalized():
    ring = np.array([[0, 0], [0, 10], [10, 10], [10, 0], [0, 0]], dtype=float)
    mesh = extrude_buildings([BuildingFootprint(ring + 5, 4.0, "flat_plain")], flat(20))
    assert signed_volume(mesh.vertices, mesh.triangles) == pytest.approx(400.0)


@pytest.mark.parametrize("style", ["flat", "gable"])
def test_windowed_buildings_are_closed(style):
    fp = BuildingFootprint(np.array([[5, 5], [29, 5], [29, 17], [5, 17]], dtype=float), 13.0, style)
    mesh = extrude_buildings([fp], flat(40))
    assert is_watertight(mesh.triangles)
    vol = signed_volume(mesh.vertices, mesh.triangles)
    box = 24 * 12 * 13.0
    if style == "flat":
        assert vol == pytest.approx(box)
    else:
        rise = min(0.35 * 12, 4.0)
        assert vol == pytest.approx(box + 0.5 * 12 * rise * 24)
    win = mesh.tri_semantic == C.WINDOW
    assert win.any()
    # four floors of windows (sill at 0.9, 3.9, 6.9, 9.9), every window cell is 1.2 x 1.4 m
    assert mesh.areas()[win].sum() == pytest.approx(win.sum() / 2 * 1.2 * 1.4)


def test_building_seated_at_max_terrain_height():
    hf = generate_terrain(9, (60, 60), 1.0, 6.0)
    fp = square(20, 20, 12, 8.0)
    mesh = extrude_buildings([fp], hf)
    inside = [hf.height_at(x, y) for x in np.linspace(20, 32, 25) for y in np.linspace(20, 32, 25)]
    base = mesh.vertices[:, 2].min()
    assert base == pytest.approx(max(inside), abs=1e-9)


def test_footprint_outside_heightfield_rejected():
    with pytest.raises(FootprintError):
        extrude_buildings([square(95, 95, 10)], flat())


def test_consecutive_instance_ids():
    fps = [square(5, 5, 8), square(30, 5, 8), square(5, 30, 8)]
    mesh = extrude_buildings(fps, flat(), first_instance_id=10)
    assert sorted(set(mesh.tri_instance.tolist())) == [10, 11, 12]


# ---------------------------------------------------------------- placement


def road_scene():
    hf = flat(200.0, 2.0)
    roads = RoadNetwork((RoadSegment([[50, 100], [150, 100]], 8.0),))
    return hf, roads


@pytest.mark.parametrize("seed", range(8))
def test_roadside_poles_along_straight_road(seed):
    hf, roads = road_scene()
    rule = PlacementRule(C.LIGHT_POLE, "roadside_buffer", interval=20.0, buffer=2.0, min_separation=0.0)
    objs = place_objects([rule], roads, [], hf, seed)
    assert len(objs) in (5, 6)
    cat = default_catalog()
    for o in objs:
        edge = abs(o.position[1] - 100.0) - 4.0
        assert cat["light_pole"].radius <= edge <= 2.0
        assert 50.0 <= o.position[0] <= 150.0


def all_pairs_ok(objs, sep):
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            a, b = objs[i], objs[j]
            d = np.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])
            if d < max(sep, a.radius + b.radius) - 1e-9:
                return False
    return True


@pytest.mark.parametrize("strategy", ["scatter_polygon", "forest_cluster"])
def test_min_separation_brute_force(strategy):
    hf = flat(120.0, 2.0)
    rule = PlacementRule(C.HIGH_VEGETATION, strategy, interval=3.0, min_separation=5.0, coverage_fraction=0.3)
    objs = place_objects([rule], RoadNetwork(), [], hf, 4)
    assert len(objs) > 10
    assert all_pairs_ok(objs, 5.0)


def test_zero_coverage_places_nothing():
    hf = flat(120.0, 2.0)
    rule = PlacementRule(C.CLUTTER, "scatter_polygon", interval=5.0, coverage_fraction=0.0)
    warnings = []
    assert place_objects([rule], RoadNetwork(), [], hf, 1, warnings_out=warnings) == []
    assert warnings == []


def test_unsatisfiable_rule_warns_and_continues():
    hf = flat(120.0, 2.0)
    rules = [
        PlacementRule(C.TRUCK, "on_road", interval=10.0),
        PlacementRule(C.CLUTTER, "scatter_polygon", interval=8.0, coverage_fraction=0.2),
    ]
    warnings = []
    objs = place_objects(rules, RoadNetwork(), [], hf, 1, warnings_out=warnings)
    assert [w.rule_index for w in warnings] == [0]
    assert objs and all(o.semantic == C.CLUTTER for o in objs)


def test_unknown_model_is_rejected():
    rule = PlacementRule(C.VEHICLE, "on_road", models=("hovercraft",))
    with pytest.raises(ValueError):
        place_objects([rule], RoadNetwork(), [], flat(), 0)


def demo_inputs(seed=2):
    hf = generate_terrain(seed, (200, 200), 2.0, 3.0)
    fps, roads = procedural_layout(seed, (200, 200))
    rules = [
        PlacementRule(C.VEHICLE, "on_road", interval=15, min_separation=2),
        PlacementRule(C.LIGHT_POLE, "roadside_buffer", interval=20, buffer=2.5),
        PlacementRule(C.FENCE, "building_buffer", interval=6, buffer=3, coverage_fraction=0.5),
        PlacementRule(C.CLUTTER, "scatter_polygon", interval=10, coverage_fraction=0.1),
        PlacementRule(C.HIGH_VEGETATION, "forest_cluster", interval=6, min_separation=2,
                      coverage_fraction=0.2, scale_range=(0.5, 1.3)),
    ]
    return hf, fps, roads, rules


def test_placement_invariants_on_city():
    hf, fps, roads, rules = demo_inputs()
    objs = place_objects(rules, roads, fps, hf, 11, first_instance_id=len(fps) + 1)
    again = place_objects(rules, roads, fps, hf, 11, first_instance_id=len(fps) + 1)
    assert objs == again
    assert len({o.instance_id for o in objs}) == len(objs)
    assert min(o.instance_id for o in objs) == len(fps) + 1
    x0, y0, x1, y1 = hf.bounds
    for o in objs:
        x, y, z = o.position
        assert x0 + o.radius <= x <= x1 - o.radius and y0 + o.radius <= y <= y1 - o.radius
        assert z == pytest.approx(float(hf.height_at(x, y)))
        for fp in fps:
            assert polygon_distance(np.array([[x, y]]), fp.ring)[0] > o.radius
    def sep(o):
        return 2.0 if o.semantic == C.VEHICLE or o.semantic in C.VEGETATION else 1.0

    for i, a in enumerate(objs):
        for b in objs[i + 1:]:
            d = np.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])
            assert d >= max(sep(a), sep(b), a.radius + b.radius) - 1e-9


# ---------------------------------------------------------------- assembly


@pytest.mark.parametrize("scale,expected", [
    (1.0 / 1.0, C.LOW_VEGETATION),
    (2.0 / 1.0, C.LOW_VEGETATION),
    (3.0 / 1.0, C.MEDIUM_VEGETATION),
    (5.0 / 1.0, C.MEDIUM_VEGETATION),
    (10.0 / 1.0, C.HIGH_VEGETATION),
])
def test_vegetation_height_classes(scale, expected):
    cat = default_catalog()
    shrub = cat["shrub"]
    obj = PlacedObject("shrub", C.LOW_VEGETATION, 1, (50.0, 50.0, 0.0), 0.0, scale / shrub.height)
    mesh = assemble_scene(flat(), empty_mesh(), [obj], cat, RoadNetwork())
    veg = mesh.tri_semantic[mesh.tri_instance == 1]
    assert set(veg.tolist()) == {expected}


def test_empty_scene_is_all_grass():
    hf = flat(40.0, 2.0)
    mesh = assemble_scene(hf, empty_mesh(), [], default_catalog(), RoadNetwork())
    assert len(mesh) == 2 * 20 * 20
    assert np.all(mesh.tri_semantic == C.GRASS)


def test_missing_model_is_hard_error():
    obj = PlacedObject("ufo", C.CLUTTER, 1, (5.0, 5.0, 0.0), 0.0, 1.0)
    with pytest.raises(KeyError):
        assemble_scene(flat(20), empty_mesh(), [obj], default_catalog(), RoadNetwork())


def test_duplicate_instance_is_rejected():
    fps = [square(5, 5, 8)]
    bm = extrude_buildings(fps, flat())
    obj = PlacedObject("car", C.VEHICLE, 1, (50.0, 50.0, 0.0), 0.0, 1.0)
    with pytest.raises(ValueError):
        assemble_scene(flat(), bm, [obj], default_catalog(), RoadNetwork(), fps)


def test_terrain_cover_partition_and_rules():
    hf = flat(100.0, 1.0)
    roads = RoadNetwork((RoadSegment([[0, 20], [100, 20]], 6.0),))
    fps = [square(40, 50, 10)]
    mesh = assemble_scene(hf, extrude_buildings(fps, hf), [], default_catalog(), roads, fps, dirt_buffer=3.0)
    terrain = mesh.tri_instance == 0
    labels = mesh.tri_semantic[terrain]
    assert set(labels.tolist()) <= {C.ROAD, C.DIRT, C.GRASS}
    cen = mesh.vertices[mesh.triangles[terrain]].mean(axis=1)
    on_road = np.abs(cen[:, 1] - 20) <= 3.0
    assert np.array_equal(labels == C.ROAD, on_road)
    dx = np.maximum(np.maximum(40 - cen[:, 0], cen[:, 0] - 50), 0)
    dy = np.maximum(np.maximum(50 - cen[:, 1], cen[:, 1] - 60), 0)
    near = np.hypot(dx, dy) <= 3.0
    assert np.array_equal(labels == C.DIRT, near & ~on_road)


def test_scene_determinism_and_instances():
    hf, fps, roads, rules = demo_inputs(5)
    cat = default_catalog()
    meshes = []
    for _ in range(2):
        bm = extrude_buildings(fps, hf, seed=1)
        objs = place_objects(rules, roads, fps, hf, 3, cat, first_instance_id=len(fps) + 1)
        meshes.append(assemble_scene(hf, bm, objs, cat, roads, fps, seed=1))
    a, b = meshes
    for name in ("vertices", "triangles", "tri_semantic", "tri_instance", "tri_color", "tri_width"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    inst = np.isin(a.tri_semantic, C.INSTANCE_CLASSES)
    assert np.all(a.tri_instance[inst] > 0)
    # windows belong to their building's instance; terrain carries none
    assert np.all(a.tri_instance[~inst & (a.tri_semantic != C.WINDOW)] == 0)
    assert np.all(a.tri_instance[a.tri_semantic == C.WINDOW] > 0)
    # each instance id belongs to exactly one object class family
    for iid in np.unique(a.tri_instance[inst]):
        sem = set(a.tri_semantic[a.tri_instance == iid].tolist())
        assert len(sem) == 1 or sem == {C.BUILDING, C.WINDOW}


def test_mesh_and_geojson_roundtrip(tmp_path):
    hf, fps, roads, _ = demo_inputs(1)
    write_geojson(tmp_path / "city.geojson", fps, roads)
    fps2, roads2 = read_geojson(tmp_path / "city.geojson")
    assert len(fps2) == len(fps) and len(roads2.segments) == len(roads.segments)
    for a, b in zip(fps, fps2):
        assert np.array_equal(a.ring, b.ring) and a.height == b.height and a.style == b.style
    mesh = assemble_scene(hf, extrude_buildings(fps, hf), [], default_catalog(), roads, fps)
    write_mesh_ply(tmp_path / "scene.ply", mesh)
    back = read_mesh_ply(tmp_path / "scene.ply")
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.tri_semantic, mesh.tri_semantic)
    assert np.array_equal(back.tri_instance, mesh.tri_instance)


def test_geojson_requires_height(tmp_path):
    doc = {"type": "FeatureCollection", "features": [
        {"type": "Feature", "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 0]]]},
         "properties": {}}]}
    (tmp_path / "bad.geojson").write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        read_geojson(tmp_path / "bad.geojson")


@settings(max_examples=30, deadline=None)
@given(h=st.floats(0.01, 40.0, allow_nan=False))
def test_vegetation_class_total_and_monotone(h):
    cls = C.vegetation_class(h)
    assert cls in C.VEGETATION
    assert C.vegetation_class(h + 1.0) >= cls


@settings(max_examples=25, deadline=None)
@given(w=st.floats(2.0, 30.0), d=st.floats(2.0, 30.0), h=st.floats(1.0, 40.0),
       style=st.sampled_from(["flat", "gable", "flat_plain", "gable_plain"]))
def test_rectangular_prisms_closed_with_exact_volume(w, d, h, style):
    fp = BuildingFootprint(np.array([[1, 1], [1 + w, 1], [1 + w, 1 + d], [1, 1 + d]]), h, style)
    mesh = extrude_buildings([fp], flat(40.0, 2.0))
    mesh.validate()
    assert is_watertight(mesh.triangles)
    vol = signed_volume(mesh.vertices, mesh.triangles)
    expect = w * d * h
    if style.startswith("gable"):
        short, long_ = min(w, d), max(w, d)
        expect += 0.5 * short * min(0.35 * short, 4.0) * long_
    assert vol == pytest.approx(expect, rel=1e-9)
