"""Pinhole cameras: intrinsics, poses and pixel rays.

The camera frame is x right, y down, z forward (optical axis). A pose is
given as yaw, pitch and roll in a Z-up right-handed world:

* yaw is the azimuth of the optical axis, counter-clockwise from +X;
* pitch is its elevation, so a nadir camera has pitch -pi/2;
* roll rotates the image about the optical axis.

For a nadir camera the image "up" direction points along the yaw azimuth,
so a camera with compass heading h (clockwise from north, +Y) has
yaw = pi/2 - h and its image rows run along the flight track.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import signed_area

NADIR_PITCH = -np.pi / 2


class CameraError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int
    height: int
    focal: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or not self.focal > 0:
            raise CameraError("width, height and focal must be positive")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float = 60.0) -> "CameraIntrinsics":
        """Square pixels, principal point at the image centre, horizontal field of view in degrees."""
        if not 0 < hfov_deg < 180:
            raise CameraError(f"horizontal field of view must be in (0, 180), got {hfov_deg}")
        focal = (width / 2) / np.tan(np.radians(hfov_deg) / 2)
        return cls(int(width), int(height), float(focal), width / 2, height / 2)

    @property
    def half_fov(self) -> tuple[float, float]:
        return float(np.arctan(self.width / 2 / self.focal)), float(np.arctan(self.height / 2 / self.focal))

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "focal": self.focal, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d) -> "CameraIntrinsics":
        return cls(int(d["width"]), int(d["height"]), float(d["focal"]), float(d["cx"]), float(d["cy"]))


@dataclass(frozen=True)
class CameraPose:
    position: tuple[float, float, float]
    yaw: float = np.pi / 2
    pitch: float = NADIR_PITCH
    roll: float = 0.0

    def __post_init__(self):
        p = tuple(float(v) for v in self.position)
        if len(p) != 3 or not np.all(np.isfinite(p)):
            raise CameraError("pose position must be 3 finite numbers")
        object.__setattr__(self, "position", p)
        # wrap yaw and roll; pitch is left as given so jitter around nadir stays zero-mean
        object.__setattr__(self, "yaw", float(np.remainder(self.yaw + np.pi, 2 * np.pi) - np.pi))
        object.__setattr__(self, "pitch", float(self.pitch))
        object.__setattr__(self, "roll", float(np.remainder(self.roll + np.pi, 2 * np.pi) - np.pi))

    @classmethod
    def nadir(cls, position, heading_deg: float = 0.0) -> "CameraPose":
        return cls(position, np.pi / 2 - np.radians(heading_deg), NADIR_PITCH, 0.0)

    def rotation(self) -> np.ndarray:
        """Camera-to-world rotation; columns are the camera x, y, z axes in world coordinates."""
        cy, sy = np.cos(self.yaw), np.sin(self.yaw)
        cp, sp = np.cos(self.pitch), np.sin(self.pitch)
        f = np.array([cp * cy, cp * sy, sp])
        r = np.array([sy, -cy, 0.0])
        u = np.array([r[1] * f[2] - r[2] * f[1], r[2] * f[0] - r[0] * f[2], r[0] * f[1] - r[1] * f[0]])
        if self.roll:
            cr, sr = np.cos(self.roll), np.sin(self.roll)
            r, u = cr * r + sr * u, -sr * r + cr * u
        return np.column_stack([r, -u, f])

    def to_dict(self) -> dict:
        return {"position": list(self.position), "yaw": self.yaw, "pitch": self.pitch, "roll": self.roll}

    @classmethod
    def from_dict(cls, d) -> "CameraPose":
        return cls(tuple(d["position"]), float(d["yaw"]), float(d["pitch"]), float(d["roll"]))


def pixel_rays(intr: CameraIntrinsics, pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Unit world-space ray directions through every pixel centre, row-major, and the shared origin."""
    j, i = np.meshgrid(np.arange(intr.width) + 0.5, np.arange(intr.height) + 0.5)
    d = np.stack([(j - intr.cx) / intr.focal, (i - intr.cy) / intr.focal, np.ones_like(j)], axis=-1)
    d = d.reshape(-1, 3) @ pose.rotation().T
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.asarray(pose.position), d


def project(intr: CameraIntrinsics, pose: CameraPose, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates (u, v) of world points and their depth along the optical axis."""
    cam = (np.atleast_2d(points) - np.asarray(pose.position)) @ pose.rotation()
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.column_stack([intr.focal * cam[:, 0] / z + intr.cx, intr.focal * cam[:, 1] / z + intr.cy])
    return uv, z


def ground_footprint(intr: CameraIntrinsics, pose: CameraPose, ground_z: float = 0.0) -> np.ndarray:
    """Image corners projected onto the plane z = ground_z, as a counter-clockwise 4-gon."""
    d = _corner_rays(intr) @ pose.rotation().T
    c = np.asarray(pose.position, dtype=np.float64)
    if np.any(d[:, 2] >= 0) or c[2] <= ground_z:
        raise CameraError("footprint is unbounded: a corner ray does not reach the ground plane")
    t = (ground_z - c[2]) / d[:, 2]
    ring = c[:2] + t[:, None] * d[:, :2]
    return ring if signed_area(ring) > 0 else ring[::-1].copy()


def _corner_rays(intr: CameraIntrinsics) -> np.ndarray:
    w, h = intr.width, intr.height
    u = np.array([0.0, w, w, 0.0])
    v = np.array([0.0, 0.0, h, h])
    return np.column_stack([(u - intr.cx) / intr.focal, (v - intr.cy) / intr.focal, np.ones(4)])
