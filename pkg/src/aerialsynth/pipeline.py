"""Stage runner: scene -> flight plan -> renders -> reconstruction -> labels -> products -> metrics.

Every stage reads its inputs from files written by earlier stages and owns
one sub-directory of the output directory, which it clears before writing.
Any single stage can therefore be re-run on its own once its inputs exist.
``manifest.json`` records the config snapshot and, per stage, the sha256 of
every input and output file, the wall time and any warnings.

Randomness: each consumer draws from
``SeedSequence([root_seed, crc32(name)])``, where the name is the stage name
or ``"<stage>/<step>"``. Re-running one stage never shifts another's stream.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import time
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import classes as C
from . import plotting
from .annotate import boundary_fraction, build_point_index, enforce_ground_connectivity, transfer_labels
from .config import STAGES, RunConfig
from .evalmetrics import (
    confusion,
    instance_ap,
    instances_from_labels,
    semantic_scores,
    write_instance_report,
    write_semantic_report,
)
from .flight_render import (
    apply_wind_jitter,
    footprints,
    measured_overlaps,
    mesh_bvh,
    plan_crosshatch,
    read_image,
    read_plan,
    render,
    write_image,
    write_plan,
)
from .pcproc import (
    class_histogram,
    grid_downsample,
    instance14_to_9,
    map_classes,
    sample_fixed_count,
    sample_sphere,
    synthetic_to_real6,
    tile_blocks,
    volume_density_histogram,
    write_density_csv,
    write_histogram_csv,
    write_tiles,
)
from .pointcloud import LabeledPointCloud, read_cloud, read_cloud_ply, write_cloud_ply
from .recon_sim import backproject_proxy, simulate_reconstruction
from .scene_gen import (
    default_catalog,
    extrude_buildings,
    generate_terrain,
    place_objects,
    procedural_layout,
    read_geojson,
    read_heightfield,
    read_mesh_ply,
    sculpt_ground_details,
    write_geojson,
    write_heightfield,
    write_mesh_ply,
    assemble_scene,
)

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
STAGE_DIRS = {
    "gen-scene": "scene",
    "plan-flight": "flight",
    "render": "images",
    "reconstruct": "recon",
    "annotate": "labeled",
    "postprocess": "post",
    "eval": "eval",
}


class StageError(RuntimeError):
    """A stage failed; carries the stage name and the manifest written so far."""

    def __init__(self, stage: str, message: str, manifest: dict | None = None):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage
        self.manifest = manifest or {}


def stage_seed(root: int, name: str) -> int:
    ss = np.random.SeedSequence([int(root), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint32)[0])


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Workspace:
    """Output directory guard: every path handed out resolves inside the root."""

    def __init__(self, root):
        self.root = Path(root).resolve()

    def path(self, rel) -> Path:
        p = (self.root / rel).resolve()
        if p != self.root and self.root not in p.parents:
            raise ValueError(f"{rel} resolves outside the output directory")
        return p

    def fresh_dir(self, rel) -> Path:
        d = self.path(rel)
        if d == self.root:
            raise ValueError("refusing to clear the output directory itself")
        if d.exists():
            shutil.rmtree(d)
        d.mkdir(parents=True)
        return d

    def files_under(self, rel) -> list[str]:
        d = self.path(rel)
        if not d.exists():
            return []
        return sorted(p.relative_to(self.root).as_posix() for p in d.rglob("*") if p.is_file())

    def require(self, rel, producer: str) -> Path:
        p = self.path(rel)
        if not p.exists():
            raise FileNotFoundError(f"missing {rel}; run stage {producer!r} first")
        return p


def _dump_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _to_builtin(x):
    if isinstance(x, dict):
        return {str(k): _to_builtin(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_builtin(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


# -- stages ------------------------------------------------------------------------------
# each returns (input relpaths, report dict, warnings list)

def _gen_scene(cfg: RunConfig, ws: Workspace):
    s = cfg.scene
    d = ws.fresh_dir("scene")
    root = cfg.seed
    inputs = []
    hf = generate_terrain(stage_seed(root, "gen-scene/terrain"), s.extent, s.cell_size, s.relief_amplitude,
                          s.origin, s.octaves)
    hf = sculpt_ground_details(hf, stage_seed(root, "gen-scene/sculpt"), s.ditch_rate, s.bump_rate)
    if s.geojson:
        fps, roads = read_geojson(s.geojson)
    else:
        fps, roads = procedural_layout(stage_seed(root, "gen-scene/layout"), s.extent, s.origin, s.block_pitch,
                                       s.road_width, s.setback, s.height_range, s.lot_fill)
    catalog = default_catalog()
    buildings = extrude_buildings(fps, hf, first_instance_id=1, seed=stage_seed(root, "gen-scene/buildings"))
    warns = []
    objects = place_objects(list(cfg.placement), roads, fps, hf, stage_seed(root, "gen-scene/placement"),
                            catalog, first_instance_id=len(fps) + 1, warnings_out=warns)
    mesh = assemble_scene(hf, buildings, objects, catalog, roads, fps, s.dirt_buffer,
                          stage_seed(root, "gen-scene/assemble"))
    write_heightfield(d / "heightfield.txt", hf)
    write_geojson(d / "layout.geojson", fps, roads)
    write_mesh_ply(d / "mesh.ply", mesh)
    objs = [{"instance_id": k + 1, "model_id": "building", "semantic": C.BUILDING} for k in range(len(fps))]
    objs += [{"instance_id": o.instance_id, "model_id": o.model_id, "semantic": int(o.semantic),
              "position": [float(v) for v in o.position], "yaw": float(o.yaw), "scale": float(o.scale)}
             for o in objects]
    _dump_json(d / "objects.json", {"objects": objs})
    present = sorted(int(c) for c in np.unique(mesh.tri_semantic))
    report = {"buildings": len(fps), "objects": len(objects), "triangles": len(mesh),
              "mesh_classes": [C.class_name(c) for c in present],
              "strategies": sorted({r.strategy for r in cfg.placement})}
    warnings = [{"kind": "skipped_rule", "rule": w.rule_index, "strategy": w.strategy, "message": w.message}
                for w in warns]
    if s.geojson:
        inputs.append(os.path.abspath(s.geojson))
    return inputs, report, warnings


def _ground_z(ws: Workspace) -> float:
    hf = read_heightfield(ws.require("scene/heightfield.txt", "gen-scene"))
    return float(hf.elevations.mean())


def _plan_flight(cfg: RunConfig, ws: Workspace):
    f, s = cfg.flight, cfg.scene
    hf_path = ws.require("scene/heightfield.txt", "gen-scene")
    d = ws.fresh_dir("flight")
    aoi = (s.origin[0], s.origin[1], s.origin[0] + s.extent[0], s.origin[1] + s.extent[1])
    pitch = None if f.pitch_deg is None else float(np.radians(f.pitch_deg))
    plan = plan_crosshatch(aoi, f.altitude, f.forward_overlap, f.side_overlap, f.intrinsics(),
                           f.first_heading, _ground_z(ws), pitch)
    fwd, side = measured_overlaps(plan)
    plan = replace(plan, conditions=dict(f.conditions))
    plan = apply_wind_jitter(plan, stage_seed(cfg.seed, "plan-flight/wind"), f.wind_sigma_pos, f.wind_sigma_ang)
    write_plan(d / "plan.json", plan)
    plotting.plot_flight_plan(d / "plan.png", plan, footprints(plan))
    report = {"cameras": len(plan), "ground_z": plan.ground_z,
              "measured_forward_overlap": float(np.mean(fwd)) if len(fwd) else None,
              "measured_side_overlap": float(np.mean(side)) if len(side) else None}
    return [hf_path], report, []


_WORKER = {}


def _render_one(k):
    intr, poses, bvh, mesh, d = (_WORKER[x] for x in ("intr", "poses", "bvh", "mesh", "dir"))
    img = render(intr, poses[k], bvh, mesh)
    write_image(Path(d) / f"cam_{k:04d}.dli", img)
    return int(img.hit.sum())


def _render(cfg: RunConfig, ws: Workspace):
    mesh_path = ws.require("scene/mesh.ply", "gen-scene")
    plan_path = ws.require("flight/plan.json", "plan-flight")
    mesh = read_mesh_ply(mesh_path)
    plan = read_plan(plan_path)
    d = ws.fresh_dir("images")
    _WORKER.update(intr=plan.intrinsics, poses=plan.poses, bvh=mesh_bvh(mesh), mesh=mesh, dir=str(d))
    try:
        if cfg.workers > 1:
            import multiprocessing as mp
            with mp.get_context("fork").Pool(cfg.workers) as pool:
                hits = pool.map(_render_one, range(len(plan)))
        else:
            hits = [_render_one(k) for k in range(len(plan))]
    finally:
        _WORKER.clear()
    n_px = plan.intrinsics.width * plan.intrinsics.height
    report = {"images": len(plan), "hit_fraction": float(np.sum(hits)) / max(1, n_px * len(plan))}
    return [mesh_path, plan_path], report, []


def _image_paths(ws: Workspace) -> list[Path]:
    files = ws.files_under("images")
    paths = [ws.path(f) for f in files if f.endswith(".dli")]
    if not paths:
        raise FileNotFoundError("no rendered images; run stage 'render' first")
    return paths


def _reconstruct(cfg: RunConfig, ws: Workspace):
    mesh_path = ws.require("scene/mesh.ply", "gen-scene")
    plan_path = ws.require("flight/plan.json", "plan-flight")
    mesh = read_mesh_ply(mesh_path)
    plan = read_plan(plan_path)
    d = ws.fresh_dir("recon")
    params = replace(cfg.noise, seed=stage_seed(cfg.seed, "reconstruct"))
    cloud, info = simulate_reconstruction(mesh, mesh_bvh(mesh), plan, params, return_details=True)
    write_cloud_ply(d / "recon.ply", cloud, labels=False)
    # audit-only ground truth, never used for labelling
    np.save(d / "source_triangle.npy", info["triangle"].astype(np.int64))
    np.save(d / "outlier.npy", info["outlier"])
    report = {"points": len(cloud), "outliers": int(info["outlier"].sum())}
    return [mesh_path, plan_path], report, []


def _annotate(cfg: RunConfig, ws: Workspace):
    recon_path = ws.require("recon/recon.ply", "reconstruct")
    images = _image_paths(ws)
    objects_path = ws.require("scene/objects.json", "gen-scene")
    recon = read_cloud_ply(recon_path)
    d = ws.fresh_dir("labeled")
    proxy = backproject_proxy([read_image(p) for p in images])
    index = build_point_index(proxy)
    labeled, tinfo = transfer_labels(recon, proxy, cfg.transfer, index=index, return_info=True)
    labeled, cinfo = enforce_ground_connectivity(labeled, cfg.transfer, return_info=True)
    write_cloud_ply(d / "labeled.ply", labeled)

    n = max(1, len(labeled))
    unlabeled = (int(tinfo["fallback"].sum()) + cinfo["fallback"]) / n
    boundary = boundary_fraction(labeled)
    present = sorted(int(c) for c in np.unique(labeled.semantic))
    placed = json.load(open(objects_path))["objects"]
    have = set(np.unique(labeled.instance).tolist())
    missing = [o for o in placed if o["instance_id"] not in have]
    audit = {
        "classes_present": [C.class_name(c) for c in present],
        "num_classes": len([c for c in present if c in C.CLASS_NAMES]),
        "placed_instances": len(placed),
        "instances_present": len(placed) - len(missing),
        "missing_instances": [{"instance_id": o["instance_id"], "model_id": o["model_id"]} for o in missing],
    }
    report = {
        "points": len(labeled),
        "proxy_points": len(proxy),
        "transfer_fallback": int(tinfo["fallback"].sum()),
        "connectivity": cinfo,
        "unlabeled_fraction": unlabeled,
        "boundary_fraction": boundary,
        "audit": audit,
    }
    warnings = [
        {"kind": "unlabeled_fraction", "value": unlabeled,
         "message": f"{unlabeled:.4%} of points fell back to {C.class_name(cfg.transfer.fallback_class)}"},
        {"kind": "boundary_estimate", "value": boundary,
         "message": f"{boundary:.2%} of points sit on a class boundary where transfer errors concentrate"},
    ]
    if missing:
        warnings.append({"kind": "missing_instances", "value": len(missing),
                         "message": f"{len(missing)} placed objects received no points"})
    return [recon_path, objects_path, *images], report, warnings


def _crown_region(cloud: LabeledPointCloud):
    """Bounding sphere of the best-sampled tall-vegetation instance, or None."""
    sel = cloud.semantic == C.HIGH_VEGETATION
    if not sel.any():
        return None
    ids, counts = np.unique(cloud.instance[sel], return_counts=True)
    best = ids[np.argmax(counts)]
    pts = cloud.positions[sel & (cloud.instance == best)]
    # the crown is the upper part of the tree
    z0 = pts[:, 2].min() + 0.4 * np.ptp(pts[:, 2])
    crown = pts[pts[:, 2] >= z0]
    lo, hi = crown.min(axis=0), crown.max(axis=0)
    radius = 0.5 * float(np.max(hi - lo))
    if radius <= 0:
        return None
    return {"kind": "sphere", "center": ((lo + hi) / 2).tolist(), "radius": radius, "instance": int(best)}


def _postprocess(cfg: RunConfig, ws: Workspace):
    p = cfg.postprocess
    src = ws.require("labeled/labeled.ply", "annotate")
    cloud = read_cloud_ply(src)
    d = ws.fresh_dir("post")
    down = grid_downsample(cloud, p.spacing)
    write_cloud_ply(d / "downsampled.ply", down)
    real6 = map_classes(down, synthetic_to_real6())
    write_cloud_ply(d / "real6.ply", real6)

    hist = class_histogram(down)
    write_histogram_csv(d / "class_histogram.csv", hist)
    plotting.plot_class_histogram(d / "class_histogram.png", hist)
    warnings = []
    region = _crown_region(cloud)
    crown = None
    if region is not None:
        prof = volume_density_histogram(cloud, region, p.density_bins)
        write_density_csv(d / "crown_density.csv", prof)
        plotting.plot_density_profiles(d / "crown_density.png", {f"instance {region['instance']}": prof})
        crown = {**region, "outer_over_inner": (float(prof.density[-1] / prof.density[0])
                                                if prof.density[0] > 0 else None)}
    else:
        warnings.append({"kind": "no_crown", "message": "no high vegetation to profile"})
    plotting.plot_cloud_topview(d / "overview.png", down)

    report = {"points": len(down), "spacing": p.spacing, "crown_profile": crown}
    if p.write_tiles and len(down):
        blocks = tile_blocks(down, p.block_edge)
        write_tiles(d / "blocks", blocks, prefix="block")
        centre = 0.5 * (down.positions.min(axis=0) + down.positions.max(axis=0))
        sphere = sample_sphere(down, centre, p.sphere_radius)
        fixed = sample_fixed_count(down, centre, p.fixed_count, seed=stage_seed(cfg.seed, "postprocess/fixed"))
        write_tiles(d / "samples", [sphere, fixed], prefix="sample")
        report.update(blocks=len(blocks), sphere_points=len(sphere), fixed_replaced=fixed.replaced)
    return [src], report, warnings


def _semantic_eval(gt_sem, pred_sem, mapping: str, stem: Path):
    if mapping == "real6":
        m = synthetic_to_real6()
        lut = m.lookup()
        names = tuple(m.target_names)
        gt, pred = lut[gt_sem], lut[pred_sem]
        k = len(names)
    else:
        names = tuple(C.CLASS_NAMES[i] for i in range(C.NUM_CLASSES))
        gt, pred = gt_sem.astype(np.int64), pred_sem.astype(np.int64)
        k = C.NUM_CLASSES
    # unlabeled truth is ignored; unlabeled predictions count as a miss
    keep = gt != C.UNLABELED
    pred = np.where(pred == C.UNLABELED, (gt + 1) % k, pred)
    scores = semantic_scores(confusion(gt[keep], pred[keep], k))
    write_semantic_report(stem, scores, names)
    plotting.plot_iou_bars(str(stem) + "_iou.png", scores, names)
    return scores, names


def _instance_eval(gt: LabeledPointCloud, pred: LabeledPointCloud, stem: Path, ignore=None):
    m = instance14_to_9()
    lut = m.lookup()

    def masks(c):
        sem = c.semantic if ignore is None else np.where(ignore, C.UNLABELED, c.semantic).astype(np.uint8)
        out = instances_from_labels(sem, c.instance)
        return [replace(x, class_id=int(lut[x.class_id])) for x in out]

    gts = masks(gt)
    preds = [replace(x, confidence=1.0) for x in masks(pred)]
    report = instance_ap(gts, preds, len(gt), classes=range(len(m.target_names)), names=tuple(m.target_names))
    write_instance_report(stem, report)
    return report


def _eval(cfg: RunConfig, ws: Workspace, gt_path=None, pred_path=None):
    gt_path = gt_path or cfg.eval.gt
    pred_path = pred_path or cfg.eval.pred
    report = {}
    if gt_path or pred_path:
        if not (gt_path and pred_path):
            raise ValueError("eval needs both a ground-truth and a prediction cloud")
        gt, pred = read_cloud(gt_path), read_cloud(pred_path)
        if len(gt) != len(pred):
            raise ValueError(f"clouds differ in size: {len(gt)} vs {len(pred)}")
        d = ws.fresh_dir("eval")
        scores, names = _semantic_eval(gt.semantic, pred.semantic, cfg.eval.mapping, d / "semantic")
        inst = _instance_eval(gt, pred, d / "instance")
        report = {"semantic": scores.as_dict(names), "instance": inst.as_dict()}
        _dump_json(d / "summary.json", _to_builtin(report))
        return [os.path.abspath(gt_path), os.path.abspath(pred_path)], report, []

    # no external files: score the transferred labels against the mesh the points were drawn from
    lab_path = ws.require("labeled/labeled.ply", "annotate")
    tri_path = ws.require("recon/source_triangle.npy", "reconstruct")
    out_path = ws.require("recon/outlier.npy", "reconstruct")
    mesh_path = ws.require("scene/mesh.ply", "gen-scene")
    labeled = read_cloud_ply(lab_path)
    tri = np.load(tri_path)
    outlier = np.load(out_path)
    mesh = read_mesh_ply(mesh_path)
    if len(tri) != len(labeled):
        raise ValueError("reconstruction details do not match the labeled cloud; re-run reconstruct and annotate")
    d = ws.fresh_dir("eval")
    truth_sem = mesh.tri_semantic[tri].astype(np.uint8)
    truth_sem[outlier] = C.UNLABELED
    truth = labeled.with_labels(truth_sem, mesh.tri_instance[tri].astype(np.uint32))
    scores, names = _semantic_eval(truth.semantic, labeled.semantic, cfg.eval.mapping, d / "transfer_semantic")
    inst = _instance_eval(truth, labeled, d / "transfer_instance", ignore=outlier)
    fine = float(np.mean(labeled.semantic[~outlier] == truth_sem[~outlier])) if (~outlier).any() else None
    report = {"fine_agreement": fine, "semantic": scores.as_dict(names), "instance": inst.as_dict()}
    _dump_json(d / "summary.json", _to_builtin(report))
    return [lab_path, tri_path, out_path, mesh_path], report, []


_RUNNERS = {
    "gen-scene": _gen_scene,
    "plan-flight": _plan_flight,
    "render": _render,
    "reconstruct": _reconstruct,
    "annotate": _annotate,
    "postprocess": _postprocess,
    "eval": _eval,
}


# -- runner -----------------------------------------------------------------------------

def load_manifest(out_dir) -> dict:
    p = Path(out_dir) / MANIFEST
    if p.exists():
        with open(p) as fh:
            return json.load(fh)
    return {}


def _relative(ws: Workspace, path) -> str:
    p = Path(path).resolve()
    try:
        return p.relative_to(ws.root).as_posix()
    except ValueError:
        return str(p)


def run(cfg: RunConfig, stages=None, eval_files: tuple | None = None) -> dict:
    """Run the named stages (all enabled stages by default) in dependency order.

    Returns the manifest; raises :class:`StageError` after writing the
    manifest-so-far if a stage fails.
    """
    if stages is None:
        stages = [s for s in STAGES if cfg.stages.get(s, True)]
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stages {sorted(unknown)}")
    stages = [s for s in STAGES if s in stages]
    ws = Workspace(cfg.output_dir)
    ws.root.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(ws.root)
    manifest.update(tool="aerialsynth", seed=cfg.seed, config=cfg.to_dict())
    manifest.setdefault("stages", {})
    for name in stages:
        t0 = time.perf_counter()
        log.info("stage %s", name)
        try:
            if name == "eval" and eval_files:
                inputs, report, warnings = _eval(cfg, ws, *eval_files)
            else:
                inputs, report, warnings = _RUNNERS[name](cfg, ws)
        except Exception as e:
            manifest["stages"][name] = {"status": "failed", "error": f"{type(e).__name__}: {e}",
                                        "seconds": round(time.perf_counter() - t0, 3)}
            manifest["status"] = "failed"
            manifest["failed_stage"] = name
            _write_manifest(ws, manifest)
            raise StageError(name, f"{type(e).__name__}: {e}", manifest) from e
        outputs = ws.files_under(STAGE_DIRS[name])
        manifest["stages"][name] = {
            "status": "ok",
            "seconds": round(time.perf_counter() - t0, 3),
            "inputs": {_relative(ws, p): sha256(p) for p in inputs},
            "outputs": {f: sha256(ws.path(f)) for f in outputs},
            "report": _to_builtin(report),
            "warnings": _to_builtin(warnings),
        }
        for w in warnings:
            log.warning("%s: %s", name, w.get("message", w))
    manifest["status"] = "ok"
    manifest.pop("failed_stage", None)
    manifest["warnings"] = [dict(stage=s, **w) for s, e in manifest["stages"].items() for w in e.get("warnings", [])]
    _write_manifest(ws, manifest)
    return manifest


def _write_manifest(ws: Workspace, manifest: dict) -> None:
    tmp = ws.path(MANIFEST + ".tmp")
    _dump_json(tmp, _to_builtin(manifest))
    os.replace(tmp, ws.path(MANIFEST))


def output_hashes(manifest: dict) -> dict:
    """Every produced file and its hash, across stages."""
    return {f: h for e in manifest.get("stages", {}).values() for f, h in e.get("outputs", {}).items()}
