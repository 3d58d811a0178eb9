"""Crosshatch survey planning and wind jitter."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import convex_overlap_fraction, point_in_polygon
from .camera import CameraIntrinsics, CameraPose, _corner_rays, ground_footprint

# accepted by plan_crosshatch; tighter operational bands are the caller's business
ALTITUDE_BAND = (1.0, 1000.0)


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class FlightPlan:
    intrinsics: CameraIntrinsics
    poses: tuple[CameraPose, ...]
    altitude: float
    forward_overlap: float
    side_overlap: float
    passes: tuple[float, float] = (0.0, 90.0)
    aoi: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    ground_z: float = 0.0
    # (pass index, line index) per pose
    lines: tuple[tuple[int, int], ...] = ()
    # sun / fog settings are carried for provenance only; rendering ignores them
    conditions: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        object.__setattr__(self, "lines", tuple(tuple(x) for x in self.lines))
        if not self.altitude > 0:
            raise PlanError("altitude must be positive")
        for name in ("forward_overlap", "side_overlap"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise PlanError(f"{name} must be in [0, 1), got {v}")
        a, b = self.passes
        if abs(math.cos(math.radians(a - b))) > 1e-9:
            raise PlanError("the second pass heading must be perpendicular to the first")
        if self.lines and len(self.lines) != len(self.poses):
            raise PlanError("lines must have one entry per pose")

    def __len__(self) -> int:
        return len(self.poses)

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "altitude": self.altitude,
            "forward_overlap": self.forward_overlap,
            "side_overlap": self.side_overlap,
            "passes": list(self.passes),
            "aoi": list(self.aoi),
            "ground_z": self.ground_z,
            "conditions": dict(self.conditions),
            "poses": [dict(p.to_dict(), line=list(ln)) for p, ln in zip(self.poses, self.lines or [(0, 0)] * len(self))],
        }

    @classmethod
    def from_dict(cls, d) -> "FlightPlan":
        return cls(
            CameraIntrinsics.from_dict(d["intrinsics"]),
            tuple(CameraPose.from_dict(p) for p in d["poses"]),
            float(d["altitude"]),
            float(d["forward_overlap"]),
            float(d["side_overlap"]),
            tuple(d["passes"]),
            tuple(d["aoi"]),
            float(d.get("ground_z", 0.0)),
            tuple(tuple(p.get("line", (0, 0))) for p in d["poses"]),
            dict(d.get("conditions", {})),
        )


def write_plan(path: str | os.PathLike, plan: FlightPlan) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan.to_dict(), fh, indent=1)


def read_plan(path: str | os.PathLike) -> FlightPlan:
    with open(path, encoding="utf-8") as fh:
        return FlightPlan.from_dict(json.load(fh))


def footprint_size(intr: CameraIntrinsics, altitude: float) -> tuple[float, float]:
    """Nadir ground footprint (across-track W_x, along-track W_y) at the given height."""
    hx, hy = intr.half_fov
    return 2 * altitude * math.tan(hx), 2 * altitude * math.tan(hy)


def _stations(lo: float, hi: float, spacing: float) -> np.ndarray:
    """ceil(L/s)+1 stations at the given spacing, centred on [lo, hi]."""
    n = math.ceil((hi - lo) / spacing) + 1
    mid = (lo + hi) / 2
    return mid + (np.arange(n) - (n - 1) / 2) * spacing


def plan_crosshatch(
    aoi: tuple[float, float, float, float],
    altitude: float,
    forward_overlap: float,
    side_overlap: float,
    intrinsics: CameraIntrinsics,
    first_heading: float = 0.0,
    ground_z: float = 0.0,
    pitch: float | None = None,
) -> FlightPlan:
    """Two perpendicular lawnmower passes over ``aoi = (xmin, ymin, xmax, ymax)``.

    The first pass flies lines at ``first_heading`` (0 = north, only 0 and 90
    are supported) and the second repeats the pattern rotated by 90 degrees.
    Lines are flown alternately forwards and backwards; image rows always run
    along the line. ``pitch`` sets a fixed oblique gimbal angle, nadir by
    default.
    """
    x0, y0, x1, y1 = aoi
    if not (x1 > x0 and y1 > y0):
        raise PlanError("area of interest is empty")
    if not ALTITUDE_BAND[0] <= altitude <= ALTITUDE_BAND[1]:
        raise PlanError(f"altitude {altitude} m is outside {ALTITUDE_BAND}")
    for name, v in (("forward_overlap", forward_overlap), ("side_overlap", side_overlap)):
        if not 0 <= v < 1:
            raise PlanError(f"{name} must be in [0, 1), got {v}")
    if first_heading % 90 != 0:
        raise PlanError("first_heading must be a multiple of 90 degrees")
    wx, wy = footprint_size(intrinsics, altitude)
    along = wy * (1 - forward_overlap)
    across = wx * (1 - side_overlap)
    z = ground_z + altitude
    pitch = -math.pi / 2 if pitch is None else pitch

    poses, lines = [], []
    headings = (first_heading % 360, (first_heading + 90) % 360)
    for k, heading in enumerate(headings):
        northward = heading % 180 == 0
        # lines of a north-south pass are spread along x, stations along y
        cross = _stations(x0, x1, across) if northward else _stations(y0, y1, across)
        stations = _stations(y0, y1, along) if northward else _stations(x0, x1, along)
        for li, c in enumerate(cross):
            forward = li % 2 == 0
            h = heading if forward else (heading + 180) % 360
            seq = stations if forward == (heading in (0, 90)) else stations[::-1]
            for s in seq:
                pos = (c, s, z) if northward else (s, c, z)
                poses.append(CameraPose(pos, math.pi / 2 - math.radians(h), pitch, 0.0))
                lines.append((k, li))
    return FlightPlan(intrinsics, tuple(poses), float(altitude), float(forward_overlap), float(side_overlap),
                      headings, (x0, y0, x1, y1), float(ground_z), tuple(lines))


def apply_wind_jitter(plan: FlightPlan, seed: int, sigma_pos: float, sigma_ang: float) -> FlightPlan:
    """Zero-mean Gaussian perturbation of every pose; returns a new plan."""
    if sigma_pos < 0 or sigma_ang < 0:
        raise PlanError("jitter sigmas must be non-negative")
    if sigma_pos == 0 and sigma_ang == 0:
        return replace(plan)
    rng = np.random.default_rng(seed)
    n = len(plan.poses)
    dp = rng.normal(0.0, sigma_pos, size=(n, 3))
    da = rng.normal(0.0, sigma_ang, size=(n, 3))
    poses = tuple(
        CameraPose(tuple(np.asarray(p.position) + dp[i]), p.yaw + da[i, 0], p.pitch + da[i, 1], p.roll + da[i, 2])
        for i, p in enumerate(plan.poses)
    )
    return replace(plan, poses=poses)


def footprints(plan: FlightPlan, ground_z: float | None = None) -> list[np.ndarray]:
    """Ground footprint of every pose; matches ``ground_footprint`` per pose to rounding, computed in one batch."""
    gz = plan.ground_z if ground_z is None else ground_z
    if not plan.poses:
        return []
    rots = np.stack([p.rotation() for p in plan.poses])
    c = np.array([p.position for p in plan.poses], dtype=np.float64)
    d = np.einsum("kj,nij->nki", _corner_rays(plan.intrinsics), rots)
    if np.any(d[:, :, 2] >= 0) or np.any(c[:, 2] <= gz):
        # let the per-pose routine name the failure
        return [ground_footprint(plan.intrinsics, p, gz) for p in plan.poses]
    t = (gz - c[:, 2:3]) / d[:, :, 2]
    rings = c[:, None, :2] + t[:, :, None] * d[:, :, :2]
    x, y = rings[:, :, 0], rings[:, :, 1]
    area = np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
    return [r if a > 0 else r[::-1].copy() for r, a in zip(rings, area)]


def measured_overlaps(plan: FlightPlan, ground_z: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Forward overlap of consecutive images on each line and side overlap of neighbouring lines.

    Overlap is the area of the intersection of two ground footprints over the
    area of the first. Side overlap pairs each image with the nearest image
    on the next line of the same pass.
    """
    fps = footprints(plan, ground_z)
    lines = plan.lines or tuple((0, 0) for _ in plan.poses)
    fwd = [convex_overlap_fraction(fps[i], fps[i + 1])
           for i in range(len(fps) - 1) if lines[i] == lines[i + 1]]
    side = []
    centres = np.array([p.position[:2] for p in plan.poses])
    groups: dict[tuple[int, int], list[int]] = {}
    for i, ln in enumerate(lines):
        groups.setdefault(ln, []).append(i)
    for (k, li), idx in groups.items():
        nxt = groups.get((k, li + 1))
        if not nxt:
            continue
        for i in idx:
            j = nxt[int(np.argmin(np.linalg.norm(centres[nxt] - centres[i], axis=1)))]
            side.append(convex_overlap_fraction(fps[i], fps[j]))
    return np.array(fwd), np.array(side)


def coverage_counts(plan: FlightPlan, points: np.ndarray, ground_z: float | None = None) -> np.ndarray:
    """Number of footprints of each pass containing each ground point; shape (n_points, 2)."""
    lines = plan.lines or tuple((0, 0) for _ in plan.poses)
    counts = np.zeros((len(points), 2), dtype=np.int64)
    for fp, (k, _) in zip(footprints(plan, ground_z), lines):
        counts[:, k] += point_in_polygon(points, fp)
    return counts

