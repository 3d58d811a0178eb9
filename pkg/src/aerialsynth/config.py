"""Run configuration: JSON file, schema check, defaults and sub-config validation.

A config is parsed in three steps. The JSON is checked against the bundled
schema, missing fields are filled from the dataclass defaults, and every
sub-config is constructed (each validates itself) before any stage runs.
``RunConfig.to_dict`` returns the normalized form, so parsing its output
gives back an equal config.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources

import jsonschema

from . import classes as C
from .annotate import AnnotateError, TransferParams
from .flight_render import CameraError, CameraIntrinsics
from .recon_sim import NoiseParams, ReconError
from .scene_gen import PlacementError, PlacementRule, default_catalog

# surveyed synthetic band; --unsafe-params lifts it
SAFE_ALTITUDE = (25.0, 120.0)

STAGES = ("gen-scene", "plan-flight", "render", "reconstruct", "annotate", "postprocess", "eval")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    extent: tuple[float, float] = (200.0, 200.0)
    origin: tuple[float, float] = (0.0, 0.0)
    cell_size: float = 1.0
    relief_amplitude: float = 2.0
    octaves: int = 4
    # features per km of the longer side
    ditch_rate: float = 20.0
    bump_rate: float = 30.0
    block_pitch: float = 70.0
    road_width: float = 8.0
    setback: float = 5.0
    height_range: tuple[float, float] = (6.0, 24.0)
    lot_fill: float = 0.7
    dirt_buffer: float = 3.0
    # optional GeoJSON layout replacing the procedural one
    geojson: str | None = None


@dataclass(frozen=True)
class FlightConfig:
    altitude: float = 100.0
    forward_overlap: float = 0.75
    side_overlap: float = 0.75
    width: int = 240
    height: int = 180
    hfov_deg: float = 60.0
    first_heading: float = 0.0
    pitch_deg: float | None = None
    wind_sigma_pos: float = 0.0
    wind_sigma_ang: float = 0.0
    conditions: dict = field(default_factory=dict)

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_fov(self.width, self.height, self.hfov_deg)


@dataclass(frozen=True)
class PostConfig:
    spacing: float = 0.3
    block_edge: float = 50.0
    sphere_radius: float = 18.0
    fixed_count: int = 40960
    density_bins: int = 10
    write_tiles: bool = True


@dataclass(frozen=True)
class EvalConfig:
    gt: str | None = None
    pred: str | None = None
    mapping: str = "real6"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "out"
    workers: int = 1
    scene: SceneConfig = SceneConfig()
    placement: tuple[PlacementRule, ...] = ()
    flight: FlightConfig = FlightConfig()
    noise: NoiseParams = NoiseParams()
    transfer: TransferParams = TransferParams()
    postprocess: PostConfig = PostConfig()
    eval: EvalConfig = EvalConfig()
    stages: dict = field(default_factory=lambda: {s: True for s in STAGES})

    def to_dict(self) -> dict:
        noise = asdict(self.noise)
        noise.pop("seed")
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "scene": _plain(asdict(self.scene)),
            "placement": [rule_to_dict(r) for r in self.placement],
            "flight": _plain(asdict(self.flight)),
            "noise": noise,
            "transfer": asdict(self.transfer),
            "postprocess": asdict(self.postprocess),
            "eval": asdict(self.eval),
            "stages": dict(self.stages),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _plain(d):
    if isinstance(d, dict):
        return {k: _plain(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_plain(v) for v in d]
    return d


def rule_to_dict(rule: PlacementRule) -> dict:
    d = _plain(asdict(rule))
    d["target_class"] = C.class_name(rule.target_class)
    return d


def rule_from_dict(d: dict) -> PlacementRule:
    d = dict(d)
    tc = d.get("target_class")
    if isinstance(tc, str):
        if tc not in C.CLASS_IDS:
            raise ConfigError(f"unknown target class {tc!r}")
        d["target_class"] = C.CLASS_IDS[tc]
    return PlacementRule(**_normalize(PlacementRule, d))


def schema() -> dict:
    return json.loads(resources.files("aerialsynth").joinpath("data/config.schema.json").read_text())


def _normalize(cls, data: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown fields {sorted(unknown)}")
    types = {f.name: str(f.type) for f in fields(cls)}
    out = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(v)
        # normalized form: 100 and 100.0 are the same altitude
        t = types[k]
        if t.startswith("float") and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        elif t.startswith("tuple[float") and isinstance(v, tuple):
            v = tuple(float(x) for x in v)
        out[k] = v
    return out


def _build(cls, data: dict | None, convert=None):
    data = _normalize(cls, dict(data or {}))
    if convert:
        data = convert(data)
    return cls(**data)


def from_dict(data: dict, unsafe: bool = False) -> RunConfig:
    """Validate and normalize a config mapping; raises :class:`ConfigError`."""
    try:
        jsonschema.validate(data, schema())
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}") from None
    try:
        scene = _build(SceneConfig, data.get("scene"))
        flight = _build(FlightConfig, data.get("flight"), lambda d: {**d, "conditions": dict(d.get("conditions", {}))})
        noise = _build(NoiseParams, data.get("noise"))
        transfer = _build(TransferParams, data.get("transfer"))
        post = _build(PostConfig, data.get("postprocess"))
        ev = _build(EvalConfig, data.get("eval"))
        rules = tuple(rule_from_dict(r) for r in data.get("placement", []))
    except (TypeError, ReconError, AnnotateError, PlacementError) as e:
        raise ConfigError(str(e)) from None
    stages = {s: True for s in STAGES}
    stages.update(data.get("stages", {}))
    cfg = RunConfig(
        seed=int(data.get("seed", 0)),
        output_dir=str(data.get("output_dir", "out")),
        workers=int(data.get("workers", 1)),
        scene=scene, placement=rules, flight=flight, noise=noise, transfer=transfer,
        postprocess=post, eval=ev, stages=stages,
    )
    validate(cfg, unsafe=unsafe)
    return cfg


def validate(cfg: RunConfig, unsafe: bool = False) -> None:
    """Cross-field checks the schema cannot express."""
    if cfg.seed < 0:
        raise ConfigError(f"seed must be non-negative, got {cfg.seed}")
    s = cfg.scene
    if not (s.extent[0] > 0 and s.extent[1] > 0 and s.cell_size > 0):
        raise ConfigError("scene extent and cell_size must be positive")
    if not s.block_pitch > s.road_width > 0:
        raise ConfigError("scene block_pitch must exceed road_width > 0")
    if not 0 < s.height_range[0] <= s.height_range[1]:
        raise ConfigError("scene height_range must satisfy 0 < lo <= hi")
    catalog = default_catalog()
    for k, rule in enumerate(cfg.placement):
        try:
            rule.validate(catalog)
        except PlacementError as e:
            raise ConfigError(f"placement[{k}]: {e}") from None
    f = cfg.flight
    lo, hi = SAFE_ALTITUDE
    if not unsafe and not lo <= f.altitude <= hi:
        raise ConfigError(f"flight altitude {f.altitude} m is outside [{lo:g}, {hi:g}]; pass --unsafe-params to override")
    try:
        f.intrinsics()
    except CameraError as e:
        raise ConfigError(f"flight: {e}") from None
    if f.first_heading % 90 != 0:
        raise ConfigError("flight first_heading must be a multiple of 90")
    p = cfg.postprocess
    if not (p.spacing > 0 and p.block_edge > 0 and p.sphere_radius > 0 and p.fixed_count > 0 and p.density_bins > 0):
        raise ConfigError("postprocess parameters must be positive")
    if cfg.eval.mapping not in ("real6", "none"):
        raise ConfigError(f"eval mapping must be 'real6' or 'none', got {cfg.eval.mapping!r}")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    unknown = set(cfg.stages) - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown stages {sorted(unknown)}")


def loads(text: str, unsafe: bool = False) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    return from_dict(data, unsafe=unsafe)


def load_config(path: str | os.PathLike, unsafe: bool = False) -> RunConfig:
    with open(path) as f:
        return loads(f.read(), unsafe=unsafe)


def demo_config() -> RunConfig:
    """The bundled 200 x 200 m demo scene."""
    return loads(resources.files("aerialsynth").joinpath("data/demo_config.json").read_text())


def with_overrides(cfg: RunConfig, seed=None, out=None, workers=None) -> RunConfig:
    kw = {}
    if seed is not None:
        kw["seed"] = int(seed)
    if out is not None:
        kw["output_dir"] = str(out)
    if workers is not None:
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        kw["workers"] = int(workers)
    return replace(cfg, **kw)
