"""Per-camera depth and label images by ray casting, and their binary container.

Container layout (little endian)::

    magic    8 bytes  b"DLIMG01\\n"
    width    uint32
    height   uint32
    depth    float32[height * width]   range along the pixel ray, +inf = no hit
    semantic uint8[height * width]     255 = no hit
    instance uint32[height * width]    0 = none
    camera   float64[9]                focal, cx, cy, x, y, z, yaw, pitch, roll

Pixel (i, j) is row i, column j; its ray passes through (j + 0.5, i + 0.5).
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from ..classes import UNLABELED
from .bvh import BVH, intersect
from .camera import CameraIntrinsics, CameraPose, pixel_rays

MAGIC = b"DLIMG01\n"


class ImageFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DepthLabelImage:
    depth: np.ndarray       # (h, w) float64 in memory, float32 on disk
    semantic: np.ndarray    # (h, w) uint8
    instance: np.ndarray    # (h, w) uint32
    intrinsics: CameraIntrinsics
    pose: CameraPose

    @property
    def hit(self) -> np.ndarray:
        return np.isfinite(self.depth)

    def check(self) -> None:
        """Raise if the depth, semantic and instance planes disagree about which pixels hit."""
        hit = self.hit
        if not np.array_equal(hit, self.semantic != UNLABELED):
            raise ImageFormatError("semantic plane disagrees with depth hits")
        if np.any(self.instance[~hit] != 0):
            raise ImageFormatError("instance set on a no-hit pixel")


def render(intr: CameraIntrinsics, pose: CameraPose, bvh: BVH, mesh) -> DepthLabelImage:
    """One primary ray per pixel centre; the nearest triangle gives depth, class and instance."""
    origin, dirs = pixel_rays(intr, pose)
    t, tri = intersect(bvh, origin, dirs)
    h, w = intr.height, intr.width
    hit = tri >= 0
    sem = np.full(len(tri), UNLABELED, np.uint8)
    inst = np.zeros(len(tri), np.uint32)
    sem[hit] = mesh.tri_semantic[tri[hit]]
    inst[hit] = mesh.tri_instance[tri[hit]]
    depth = np.where(hit, t, np.inf)
    return DepthLabelImage(depth.reshape(h, w), sem.reshape(h, w), inst.reshape(h, w), intr, pose)


def write_image(path: str | os.PathLike, img: DepthLabelImage) -> None:
    intr, pose = img.intrinsics, img.pose
    h, w = img.depth.shape
    cam = np.array([intr.focal, intr.cx, intr.cy, *pose.position, pose.yaw, pose.pitch, pose.roll], "<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(np.ascontiguousarray(img.depth, "<f4").tobytes())
        fh.write(np.ascontiguousarray(img.semantic, "u1").tobytes())
        fh.write(np.ascontiguousarray(img.instance, "<u4").tobytes())
        fh.write(cam.tobytes())


def read_image(path: str | os.PathLike) -> DepthLabelImage:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ImageFormatError(f"{path}: bad magic")
    w, h = struct.unpack_from("<II", data, 8)
    n = w * h
    need = 16 + n * 9 + 72
    if len(data) != need:
        raise ImageFormatError(f"{path}: expected {need} bytes, found {len(data)}")
    off = 16
    depth = np.frombuffer(data, "<f4", n, off).reshape(h, w).astype(np.float64)
    off += 4 * n
    sem = np.frombuffer(data, "u1", n, off).reshape(h, w).copy()
    off += n
    inst = np.frombuffer(data, "<u4", n, off).reshape(h, w).astype(np.uint32)
    off += 4 * n
    f, cx, cy, x, y, z, yaw, pitch, roll = np.frombuffer(data, "<f8", 9, off)
    intr = CameraIntrinsics(w, h, float(f), float(cx), float(cy))
    return DepthLabelImage(depth, sem, inst, intr, CameraPose((x, y, z), yaw, pitch, roll))
