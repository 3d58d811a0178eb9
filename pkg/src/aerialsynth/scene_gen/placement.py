"""Rule-driven placement of trees, vehicles and street furniture.

Five strategies are available:

``on_road``
    objects on the carriageway at randomized intervals, aligned with traffic;
``roadside_buffer``
    objects alternating between the two road edges, at most ``buffer`` metres
    outside the edge;
``building_buffer``
    objects walked around building perimeters within ``buffer`` of the wall;
``scatter_polygon``
    random polygons and rings covering ``coverage_fraction`` of the free
    space, one model per polygon, darts thrown at ``interval`` density;
``forest_cluster``
    random polygons filled with trees on a jittered grid of pitch ``interval``.

Every placed object keeps its footprint circle off buildings, inside the
terrain, and at least ``max(min_separation_a, min_separation_b, r_a + r_b)``
from every other object. Non-road strategies also keep off the carriageway.
For the linear strategies ``coverage_fraction`` is the probability that a
candidate slot is used.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import classes as C
from ..geometry import point_in_polygon, polygon_distance, polyline_distance, signed_area
from .assets import AssetCatalog, default_catalog
from .buildings import BuildingFootprint
from .terrain import HeightField

log = logging.getLogger(__name__)

STRATEGIES = ("on_road", "roadside_buffer", "building_buffer", "scatter_polygon", "forest_cluster")


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class RoadSegment:
    points: np.ndarray
    width: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(pts) < 2:
            raise PlacementError("a road polyline needs at least 2 points")
        if not self.width > 0:
            raise PlacementError(f"road width must be positive, got {self.width}")
        object.__setattr__(self, "points", pts)

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def at(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Points and unit tangents at arclengths ``s``."""
        seg = np.diff(self.points, axis=0)
        lens = np.linalg.norm(seg, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, cum[-1])
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
        t = (s - cum[k]) / np.where(lens[k] > 0, lens[k], 1.0)
        tangent = seg[k] / np.where(lens[k] > 0, lens[k], 1.0)[:, None]
        return self.points[k] + t[:, None] * seg[k], tangent


@dataclass(frozen=True)
class RoadNetwork:
    segments: tuple[RoadSegment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    def edge_distance(self, xy: np.ndarray) -> np.ndarray:
        """Signed distance to the nearest road edge (negative on the carriageway)."""
        xy = np.atleast_2d(xy)
        d = np.full(len(xy), np.inf)
        for seg in self.segments:
            d = np.minimum(d, polyline_distance(xy, seg.points) - seg.width / 2)
        return d


@dataclass(frozen=True)
class PlacementRule:
    target_class: int
    strategy: str
    interval: float = 10.0
    buffer: float = 2.0
    min_separation: float = 1.0
    coverage_fraction: float = 1.0
    scale_range: tuple[float, float] = (1.0, 1.0)
    yaw_range: tuple[float, float] = (-np.pi, np.pi)
    models: tuple[str, ...] = ()

    def validate(self, catalog: AssetCatalog | None = None) -> None:
        if self.strategy not in STRATEGIES:
            raise PlacementError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not self.interval > 0:
            raise PlacementError(f"interval must be positive, got {self.interval}")
        if self.min_separation < 0 or self.buffer < 0:
            raise PlacementError("min_separation and buffer must be non-negative")
        if not 0 <= self.coverage_fraction <= 1:
            raise PlacementError(f"coverage_fraction must be in [0, 1], got {self.coverage_fraction}")
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise PlacementError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        if self.yaw_range[0] > self.yaw_range[1]:
            raise PlacementError("yaw_range must be ordered")
        if self.target_class not in C.CLASS_NAMES:
            raise PlacementError(f"unknown target class {self.target_class}")
        if catalog is not None:
            models = self.models or tuple(catalog.models_for(self.target_class))
            if not models:
                raise PlacementError(f"no asset for class {C.class_name(self.target_class)}")
            for m in models:
                if m not in catalog:
                    raise PlacementError(f"rule references unknown model {m!r}")


@dataclass(frozen=True)
class PlacedObject:
    model_id: str
    semantic: int
    instance_id: int
    position: tuple[float, float, float]
    yaw: float
    scale: float
    radius: float = 0.0


@dataclass(frozen=True)
class PlacementWarning:
    rule_index: int
    strategy: str
    message: str


@dataclass
class _Candidates:
    xy: list = field(default_factory=list)
    yaw: list = field(default_factory=list)
    model: list = field(default_factory=list)
    on_road: bool = False

    def add(self, xy, yaw, model):
        self.xy.append(xy)
        self.yaw.append(yaw)
        self.model.append(model)


class _Occupancy:
    """Accepted object discs, checked brute force with numpy."""

    def __init__(self):
        self.xy = np.zeros((0, 2))
        self.r = np.zeros(0)
        self.sep = np.zeros(0)

    def fits(self, xy, r, sep) -> bool:
        if not len(self.r):
            return True
        d = np.hypot(self.xy[:, 0] - xy[0], self.xy[:, 1] - xy[1])
        need = np.maximum(np.maximum(self.sep, sep), self.r + r)
        return bool(np.all(d >= need))

    def add(self, xy, r, sep):
        self.xy = np.vstack([self.xy, xy])
        self.r = np.append(self.r, r)
        self.sep = np.append(self.sep, sep)


def _star_polygon(rng, center, radius, n_vertices) -> np.ndarray:
    ang = np.sort(rng.uniform(0, 2 * np.pi, n_vertices))
    rad = radius * rng.uniform(0.6, 1.0, n_vertices)
    ring = center + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    if signed_area(ring) < 0:
        ring = ring[::-1]
    return ring


class _Region:
    """Polygon, optionally with a hole (a ring)."""

    def __init__(self, outer, inner=None):
        self.outer = outer
        self.inner = inner

    def contains(self, xy):
        inside = point_in_polygon(xy, self.outer)
        if self.inner is not None:
            inside &= ~point_in_polygon(xy, self.inner)
        return inside

    def sample(self, rng, n):
        lo, hi = self.outer.min(axis=0), self.outer.max(axis=0)
        out = np.zeros((0, 2))
        for _ in range(50):
            if len(out) >= n:
                break
            pts = rng.uniform(lo, hi, size=(max(4 * n, 16), 2))
            out = np.vstack([out, pts[self.contains(pts)]])
        return out[:n]


class _Placer:
    def __init__(self, roads, footprints, hf, catalog, rng):
        self.roads = roads
        self.footprints = footprints
        self.hf = hf
        self.catalog = catalog
        self.rng = rng
        x0, y0, x1, y1 = hf.bounds
        step = 2.0
        gx, gy = np.meshgrid(np.arange(x0 + step / 2, x1, step), np.arange(y0 + step / 2, y1, step))
        self.grid = np.column_stack([gx.ravel(), gy.ravel()])
        self.free_grid = self.static_ok(self.grid, np.zeros(len(self.grid)), on_road=False)

    def building_clearance(self, xy):
        d = np.full(len(xy), np.inf)
        for fp in self.footprints:
            lo, hi = fp.ring.min(axis=0), fp.ring.max(axis=0)
            near = (
                (xy[:, 0] > lo[0] - 50) & (xy[:, 0] < hi[0] + 50)
                & (xy[:, 1] > lo[1] - 50) & (xy[:, 1] < hi[1] + 50)
            )
            if near.any():
                d[near] = np.minimum(d[near], polygon_distance(xy[near], fp.ring))
        return d

    def static_ok(self, xy, r, on_road):
        xy = np.atleast_2d(xy)
        if not len(xy):
            return np.zeros(0, dtype=bool)
        ok = self.hf.contains(xy, margin=r)
        ok &= self.building_clearance(xy) > r
        if self.roads.segments:
            edge = self.roads.edge_distance(xy)
            ok &= (edge <= 0) if on_road else (edge >= r)
        return ok

    def pick_model(self, rule):
        models = rule.models or tuple(self.catalog.models_for(rule.target_class))
        return models[self.rng.integers(len(models))]

    def yaw(self, rule, base=0.0):
        return float(base + self.rng.uniform(*rule.yaw_range))

    # -- candidate generators ------------------------------------------------

    def on_road(self, rule, cands):
        cands.on_road = True
        for seg in self.roads.segments:
            s = self.rng.uniform(0, rule.interval)
            while s <= seg.length:
                p, t = seg.at(np.array([s]))
                side = 1.0 if self.rng.random() < 0.5 else -1.0
                normal = np.array([-t[0, 1], t[0, 0]])
                offset = side * seg.width / 4 + self.rng.uniform(-0.1, 0.1) * seg.width / 2
                base = np.arctan2(t[0, 1], t[0, 0]) + (0.0 if side > 0 else np.pi)
                if self.rng.random() < rule.coverage_fraction:
                    cands.add(p[0] + offset * normal, self.yaw(rule, base), self.pick_model(rule))
                s += rule.interval * self.rng.uniform(0.5, 1.5)

    def roadside(self, rule, cands, radius_of):
        for seg in self.roads.segments:
            s0 = self.rng.uniform(0, rule.interval)
            n = int(np.floor((seg.length - s0) / rule.interval)) + 1 if seg.length >= s0 else 0
            side = 1.0 if self.rng.random() < 0.5 else -1.0
            for k in range(n):
                s = s0 + k * rule.interval
                p, t = seg.at(np.array([s]))
                model = self.pick_model(rule)
                scale = self._peek_scale(rule)
                r = radius_of(model, scale)
                normal = np.array([-t[0, 1], t[0, 0]])
                if rule.buffer >= r and self.rng.random() < rule.coverage_fraction:
                    lateral = seg.width / 2 + self.rng.uniform(r, rule.buffer)
                    base = np.arctan2(t[0, 1], t[0, 0])
                    cands.add(p[0] + side * lateral * normal, self.yaw(rule, base), (model, scale))
                side = -side

    def building_buffer(self, rule, cands, radius_of):
        for fp in self.footprints:
            ring = fp.ring
            closed = np.vstack([ring, ring[:1]])
            seg = RoadSegment(closed, 1.0)
            s = self.rng.uniform(0, rule.interval)
            while s < seg.length:
                p, t = seg.at(np.array([s]))
                model = self.pick_model(rule)
                scale = self._peek_scale(rule)
                r = radius_of(model, scale)
                outward = np.array([t[0, 1], -t[0, 0]])
                if rule.buffer > r and self.rng.random() < rule.coverage_fraction:
                    off = self.rng.uniform(r, rule.buffer)
                    cands.add(p[0] + off * outward, self.yaw(rule, np.arctan2(t[0, 1], t[0, 0])),
                              (model, scale))
                s += rule.interval

    def regions(self, rule, mean_radius, rings: bool):
        """Random polygons (and rings) until their union covers the requested free fraction."""
        free = self.grid[self.free_grid]
        if rule.coverage_fraction <= 0 or not len(free):
            return []
        covered = np.zeros(len(free), dtype=bool)
        target = rule.coverage_fraction * len(free)
        regions = []
        for _ in range(500):
            if covered.sum() >= target:
                break
            center = free[self.rng.integers(len(free))]
            radius = mean_radius * self.rng.uniform(0.6, 1.4)
            outer = _star_polygon(self.rng, center, radius, int(self.rng.integers(6, 11)))
            inner = None
            if rings and self.rng.random() < 0.3:
                inner = _star_polygon(self.rng, center, 0.45 * radius, int(self.rng.integers(5, 9)))
            region = _Region(outer, inner)
            hit = region.contains(free)
            if not (hit & ~covered).any():
                continue
            covered |= hit
            regions.append(region)
        return regions

    def scatter(self, rule, cands):
        for region in self.regions(rule, max(4 * rule.interval, 8.0), rings=True):
            model = self.pick_model(rule)
            area = abs(signed_area(region.outer))
            if region.inner is not None:
                area -= abs(signed_area(region.inner))
            n = max(1, int(np.ceil(area / rule.interval ** 2)))
            for xy in region.sample(self.rng, n):
                cands.add(xy, self.yaw(rule), model)

    def forest(self, rule, cands):
        for region in self.regions(rule, max(6 * rule.interval, 12.0), rings=False):
            lo, hi = region.outer.min(axis=0), region.outer.max(axis=0)
            xs = np.arange(lo[0], hi[0] + rule.interval, rule.interval)
            ys = np.arange(lo[1], hi[1] + rule.interval, rule.interval)
            gx, gy = np.meshgrid(xs, ys)
            pts = np.column_stack([gx.ravel(), gy.ravel()])
            pts = pts + self.rng.uniform(-0.3, 0.3, pts.shape) * rule.interval
            for xy in pts[region.contains(pts)]:
                cands.add(xy, self.yaw(rule), self.pick_model(rule))

    def _peek_scale(self, rule):
        lo, hi = rule.scale_range
        return float(self.rng.uniform(lo, hi)) if hi > lo else float(lo)


def place_objects(
    rules: list[PlacementRule],
    roads: RoadNetwork,
    footprints: list[BuildingFootprint],
    hf: HeightField,
    seed: int,
    catalog: AssetCatalog | None = None,
    first_instance_id: int = 1,
    warnings_out: list | None = None,
) -> list[PlacedObject]:
    """Place objects for each rule in order; later rules fill around earlier ones.

    Rules that cannot place anything are skipped; a :class:`PlacementWarning`
    is logged and appended to ``warnings_out`` when given.
    """
    catalog = catalog or default_catalog()
    for rule in rules:
        rule.validate(catalog)
    footprints = [fp.validated(k) for k, fp in enumerate(footprints)]
    rng = np.random.default_rng(seed)
    placer = _Placer(roads, footprints, hf, catalog, rng)
    occ = _Occupancy()
    placed: list[PlacedObject] = []
    next_id = first_instance_id

    def radius_of(model, scale):
        return catalog[model].radius * scale

    for k, rule in enumerate(rules):
        cands = _Candidates()
        if rule.strategy == "on_road":
            placer.on_road(rule, cands)
        elif rule.strategy == "roadside_buffer":
            placer.roadside(rule, cands, radius_of)
        elif rule.strategy == "building_buffer":
            placer.building_buffer(rule, cands, radius_of)
        elif rule.strategy == "scatter_polygon":
            placer.scatter(rule, cands)
        else:
            placer.forest(rule, cands)

        count = 0
        if cands.xy:
            xy = np.asarray(cands.xy, dtype=np.float64).reshape(-1, 2)
            models, scales = [], []
            for m in cands.model:
                if isinstance(m, tuple):
                    models.append(m[0])
                    scales.append(m[1])
                else:
                    models.append(m)
                    scales.append(placer._peek_scale(rule))
            radii = np.array([radius_of(m, s) for m, s in zip(models, scales)])
            ok = placer.static_ok(xy, radii, on_road=cands.on_road)
            for i in np.flatnonzero(ok):
                if not occ.fits(xy[i], radii[i], rule.min_separation):
                    continue
                occ.add(xy[i], radii[i], rule.min_separation)
                asset = catalog[models[i]]
                z = float(hf.height_at(xy[i, 0], xy[i, 1])) + asset.mount_offset
                placed.append(PlacedObject(
                    model_id=models[i],
                    semantic=asset.semantic if rule.target_class in C.VEGETATION else rule.target_class,
                    instance_id=next_id,
                    position=(float(xy[i, 0]), float(xy[i, 1]), z),
                    yaw=float(cands.yaw[i]),
                    scale=float(scales[i]),
                    radius=float(radii[i]),
                ))
                next_id += 1
                count += 1
        if count == 0 and rule.coverage_fraction > 0:
            w = PlacementWarning(k, rule.strategy, f"rule for {C.class_name(rule.target_class)} placed no objects")
            log.warning("placement rule %d (%s): %s", k, rule.strategy, w.message)
            if warnings_out is not None:
                warnings_out.append(w)
    return placed
