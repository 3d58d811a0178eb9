import hashlib
import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerialsynth import classes as C
from aerialsynth import plotting
from aerialsynth.cli import main
from aerialsynth.config import ConfigError, demo_config, from_dict, loads
from aerialsynth.pcproc import DensityProfile, class_histogram
from aerialsynth.pipeline import Workspace, output_hashes, stage_seed
from aerialsynth.pointcloud import LabeledPointCloud, write_cloud_ply
from aerialsynth.scene_gen import default_catalog

TINY = {
    "seed": 3,
    "scene": {"extent": [60, 60], "relief_amplitude": 1.0, "block_pitch": 40, "road_width": 6,
              "ditch_rate": 0, "bump_rate": 0},
    "placement": [
        {"target_class": "vehicle", "strategy": "on_road", "interval": 12, "models": ["car"]},
        {"target_class": "high_vegetation", "strategy": "forest_cluster", "interval": 6, "coverage_fraction": 0.1,
         "models": ["sphere_crown"]},
    ],
    "flight": {"altitude": 30, "width": 64, "height": 48},
    "noise": {"density_per_view": 1.0, "max_incidence_deg": 75},
    "postprocess": {"block_edge": 25, "sphere_radius": 10, "fixed_count": 2000},
}


def write_config(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def file_hashes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = hashlib.sha256(open(p, "rb").read()).hexdigest()
    return out


# -- config ----------------------------------------------------------------------------

def test_demo_config_is_valid_and_uses_every_strategy():
    cfg = demo_config()
    assert {r.strategy for r in cfg.placement} == {
        "on_road", "roadside_buffer", "building_buffer", "scatter_polygon", "forest_cluster"}
    assert cfg.scene.extent == (200.0, 200.0)
    assert 25 <= cfg.flight.altitude <= 120


def test_config_roundtrip_of_demo():
    cfg = demo_config()
    again = loads(cfg.to_json())
    assert again == cfg and again.to_json() == cfg.to_json()


def test_numeric_spellings_normalize_equal():
    a = from_dict({"flight": {"altitude": 60}, "scene": {"extent": [100, 80]}})
    b = from_dict({"flight": {"altitude": 60.0}, "scene": {"extent": [100.0, 80.0]}})
    assert a.to_dict() == b.to_dict()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), altitude=st.floats(25, 120), overlap=st.floats(0, 0.95),
       spacing=st.floats(0.05, 2.0), rules=st.lists(st.sampled_from(TINY["placement"]), max_size=3),
       toggles=st.dictionaries(st.sampled_from(["render", "eval", "postprocess"]), st.booleans()))
def test_config_roundtrip_property(seed, altitude, overlap, spacing, rules, toggles):
    data = {"seed": seed, "flight": {"altitude": altitude, "forward_overlap": overlap},
            "postprocess": {"spacing": spacing}, "placement": rules, "stages": toggles}
    cfg = from_dict(data)
    text = cfg.to_json()
    assert loads(text).to_json() == text
    assert json.loads(text)["seed"] == seed


@pytest.mark.parametrize("data, match", [
    ({"bogus": 1}, "Additional properties"),
    ({"scene": {"extent": [10, 10], "size": 3}}, "Additional properties"),
    ({"placement": [{"target_class": "vehicle", "strategy": "teleport"}]}, "teleport"),
    ({"placement": [{"target_class": "dragon", "strategy": "on_road"}]}, "dragon"),
    ({"placement": [{"target_class": "vehicle", "strategy": "on_road", "models": ["zeppelin"]}]}, "zeppelin"),
    ({"flight": {"altitude": 150}}, "unsafe"),
    ({"flight": {"altitude": 10}}, "unsafe"),
    ({"noise": {"outlier_rate": 2}}, "maximum"),
    ({"scene": {"block_pitch": 5, "road_width": 8}}, "block_pitch"),
])
def test_invalid_configs_are_rejected(data, match):
    with pytest.raises(ConfigError, match=match):
        from_dict(data)


def test_unsafe_flag_lifts_the_altitude_band():
    cfg = from_dict({"flight": {"altitude": 150}}, unsafe=True)
    assert cfg.flight.altitude == 150.0


def test_non_json_is_a_config_error():
    with pytest.raises(ConfigError, match="JSON"):
        loads("{not json")


# -- seeds and workspace -----------------------------------------------------------------

def test_stage_seeds_are_stable_and_distinct():
    assert stage_seed(7, "render") == stage_seed(7, "render")
    names = ["gen-scene/terrain", "gen-scene/layout", "reconstruct", "postprocess/fixed"]
    assert len({stage_seed(7, n) for n in names}) == len(names)
    assert stage_seed(7, "reconstruct") != stage_seed(8, "reconstruct")


def test_workspace_refuses_paths_outside(tmp_path):
    ws = Workspace(tmp_path / "out")
    assert ws.path("scene/mesh.ply") == (tmp_path / "out" / "scene" / "mesh.ply").resolve()
    for bad in ("../escape.txt", "/etc/passwd", "scene/../../x"):
        with pytest.raises(ValueError):
            ws.path(bad)
    with pytest.raises(ValueError):
        ws.fresh_dir(".")


# -- command line ------------------------------------------------------------------------

def test_show_config_applies_overrides(tmp_path, capsys):
    assert main(["show-config", "--seed", "11", "--out", str(tmp_path / "o"), "--workers", "2"]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["seed"] == 11 and shown["workers"] == 2 and shown["output_dir"] == str(tmp_path / "o")


def test_validation_errors_exit_with_1(tmp_path, capsys):
    bad = write_config(tmp_path / "bad.json", {"flight": {"altitude": 400}})
    assert main(["all", "--config", bad, "--out", str(tmp_path / "o")]) == 1
    assert "altitude" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert main(["all", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["render", "--seed", "-4"]) == 1
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 1


def test_stage_failure_exits_with_2_and_keeps_manifest(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["render", "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "'render'" in err and "gen-scene" in err
    m = json.load(open(out / "manifest.json"))
    assert m["status"] == "failed" and m["failed_stage"] == "render"
    assert m["stages"]["render"]["status"] == "failed"


def perfect_clouds(tmp_path):
    rng = np.random.default_rng(0)
    n = 600
    sem = rng.choice([C.ROAD, C.BUILDING, C.HIGH_VEGETATION, C.VEHICLE, C.FENCE, C.LIGHT_POLE], n).astype(np.uint8)
    inst = np.where(np.isin(sem, [C.ROAD]), 0, rng.integers(1, 8, n)).astype(np.uint32)
    cloud = LabeledPointCloud(rng.uniform(0, 10, (n, 3)), sem, inst)
    write_cloud_ply(tmp_path / "gt.ply", cloud)
    write_cloud_ply(tmp_path / "pred.ply", cloud)
    return tmp_path / "gt.ply", tmp_path / "pred.ply"


def test_eval_of_identical_clouds_scores_perfectly(tmp_path):
    gt, pred = perfect_clouds(tmp_path)
    out = tmp_path / "scores"
    assert main(["eval", "--gt", str(gt), "--pred", str(pred), "--out", str(out)]) == 0
    summary = json.load(open(out / "eval" / "summary.json"))
    assert summary["semantic"]["mIoU"] == 1.0 and summary["semantic"]["oAcc"] == 1.0
    assert summary["instance"]["mAP"] == 1.0
    row = open(out / "eval" / "semantic.csv").read().splitlines()[1].split(",")
    assert row[:2] == ["100.00", "100.00"]
    assert (out / "eval" / "semantic_iou.png").stat().st_size > 0


def test_eval_needs_both_clouds(tmp_path):
    gt, _ = perfect_clouds(tmp_path)
    assert main(["eval", "--gt", str(gt), "--out", str(tmp_path / "o")]) == 1


# -- a tiny end-to-end run ---------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("tiny")
    cfg = write_config(base / "tiny.json", TINY)
    outs = []
    for k in range(2):
        parent = base / f"run{k}"
        parent.mkdir()
        assert main(["all", "--config", cfg, "--out", str(parent / "out")]) == 0
        outs.append(parent / "out")
    return cfg, outs


def test_tiny_run_is_byte_identical(tiny_runs):
    _, (a, b) = tiny_runs
    ha, hb = file_hashes(a), file_hashes(b)
    ha.pop("manifest.json"), hb.pop("manifest.json")
    assert ha == hb and len(ha) > 20


def test_manifest_lists_every_file_with_its_hash(tiny_runs):
    _, (a, _) = tiny_runs
    m = json.load(open(a / "manifest.json"))
    on_disk = file_hashes(a)
    on_disk.pop("manifest.json")
    assert output_hashes(m) == on_disk
    assert m["status"] == "ok" and set(m["stages"]) == {
        "gen-scene", "plan-flight", "render", "reconstruct", "annotate", "postprocess", "eval"}
    for entry in m["stages"].values():
        assert entry["seconds"] >= 0 and entry["inputs"] is not None
    kinds = {w["kind"] for w in m["warnings"]}
    assert {"unlabeled_fraction", "boundary_estimate"} <= kinds
    assert m["config"]["seed"] == TINY["seed"]


def test_nothing_is_written_outside_the_output_directory(tiny_runs):
    _, outs = tiny_runs
    for out in outs:
        assert os.listdir(out.parent) == ["out"]


def test_single_stage_resumes_from_persisted_artifacts(tiny_runs):
    cfg, (a, _) = tiny_runs
    before = json.load(open(a / "manifest.json"))
    assert main(["postprocess", "--config", cfg, "--out", str(a)]) == 0
    after = json.load(open(a / "manifest.json"))
    assert output_hashes(after) == output_hashes(before)
    assert after["stages"]["render"] == before["stages"]["render"]


def test_all_with_stage_restriction(tiny_runs, tmp_path):
    cfg, _ = tiny_runs
    out = tmp_path / "o"
    assert main(["all", "--config", cfg, "--out", str(out), "--stage", "gen-scene", "--stage", "plan-flight"]) == 0
    m = json.load(open(out / "manifest.json"))
    assert set(m["stages"]) == {"gen-scene", "plan-flight"}
    assert (out / "flight" / "plan.png").exists()


def test_seed_changes_the_scene(tiny_runs, tmp_path):
    cfg, (a, _) = tiny_runs
    out = tmp_path / "o"
    assert main(["gen-scene", "--config", cfg, "--out", str(out), "--seed", "99"]) == 0
    assert file_hashes(out / "scene") != file_hashes(a / "scene")


# -- demo audit ---------------------------------------------------------------------------

@pytest.mark.slow
def test_demo_audit_accounts_for_every_placed_object(demo_runs):
    out, _, code = demo_runs[0]
    assert code == 0
    m = json.load(open(out / "manifest.json"))
    audit = m["stages"]["annotate"]["report"]["audit"]
    scene = m["stages"]["gen-scene"]["report"]
    assert audit["placed_instances"] == scene["buildings"] + scene["objects"]
    assert audit["num_classes"] >= 12
    # objects with no points must be thin structures that the dropout model removes
    catalog = default_catalog()
    placed = {o["instance_id"]: o for o in json.load(open(out / "scene" / "objects.json"))["objects"]}
    thin = m["config"]["noise"]["thin_dropout_width"]
    for miss in audit["missing_instances"]:
        obj = placed[miss["instance_id"]]
        assert obj["model_id"] != "building"
        assert catalog[obj["model_id"]].width * obj["scale"] < thin, obj
    assert audit["instances_present"] >= 0.95 * audit["placed_instances"]


# -- figures ------------------------------------------------------------------------------

def test_figures_are_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    cloud = LabeledPointCloud(rng.uniform(0, 10, (500, 3)), rng.integers(0, 19, 500).astype(np.uint8),
                              np.zeros(500, np.uint32))
    prof = DensityProfile("sphere", np.linspace(0, 1, 5), np.array([1, 2, 3, 4]), np.ones(4))
    for k in range(2):
        plotting.plot_class_histogram(tmp_path / f"h{k}.png", class_histogram(cloud))
        plotting.plot_density_profiles(tmp_path / f"d{k}.png", {"a": prof})
        plotting.plot_cloud_topview(tmp_path / f"t{k}.png", cloud)
    for name in "hdt":
        assert (tmp_path / f"{name}0.png").read_bytes() == (tmp_path / f"{name}1.png").read_bytes()
