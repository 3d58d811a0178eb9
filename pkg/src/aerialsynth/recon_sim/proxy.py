"""Proxy point clouds by inverse projection of rendered depth/label images."""
from __future__ import annotations

import numpy as np

from ..flight_render.camera import pixel_rays
from ..flight_render.render import DepthLabelImage
from ..pointcloud import LabeledPointCloud


def backproject_proxy(images: list[DepthLabelImage]) -> LabeledPointCloud:
    """Every hit pixel becomes ``camera centre + depth * ray`` carrying the pixel's labels."""
    if not images:
        return LabeledPointCloud.empty()
    intr = images[0].intrinsics
    for k, img in enumerate(images):
        if img.intrinsics != intr:
            raise ValueError(f"image {k} has different intrinsics from image 0")
    pos, sem, inst = [], [], []
    for img in images:
        hit = img.hit.ravel()
        if not hit.any():
            continue
        origin, dirs = pixel_rays(img.intrinsics, img.pose)
        pos.append(origin + img.depth.ravel()[hit, None] * dirs[hit])
        sem.append(img.semantic.ravel()[hit])
        inst.append(img.instance.ravel()[hit])
    if not pos:
        return LabeledPointCloud.empty()
    return LabeledPointCloud(np.concatenate(pos), np.concatenate(sem), np.concatenate(inst))
