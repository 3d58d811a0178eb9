"""Procedural template meshes standing in for a commercial asset library.

Every asset lives in a local frame with its base centred on the origin and z
up. Placement rotates it about z, scales it uniformly and translates it to
the terrain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .. import classes as C
from .mesh import box, cone, cylinder, ellipsoid, icosphere, merge_parts


@dataclass(frozen=True, eq=False)
class Asset:
    model_id: str
    semantic: int
    vertices: np.ndarray
    triangles: np.ndarray
    mount_offset: float = 0.0

    @property
    def radius(self) -> float:
        """Radius of the footprint circle around the local origin."""
        return float(np.max(np.linalg.norm(self.vertices[:, :2], axis=1)))

    @property
    def height(self) -> float:
        return float(self.vertices[:, 2].max() - min(0.0, self.vertices[:, 2].min()))

    @property
    def width(self) -> float:
        """Narrowest horizontal bounding-box extent; used to flag thin structures."""
        ext = self.vertices[:, :2].max(axis=0) - self.vertices[:, :2].min(axis=0)
        return float(ext.min())

    def transformed(self, position, yaw: float, scale: float) -> np.ndarray:
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return (self.vertices * scale) @ rot.T + np.asarray(position, dtype=np.float64)


@dataclass
class AssetCatalog:
    assets: dict[str, Asset] = field(default_factory=dict)

    def add(self, asset: Asset) -> None:
        self.assets[asset.model_id] = asset

    def __contains__(self, model_id: str) -> bool:
        return model_id in self.assets

    def __getitem__(self, model_id: str) -> Asset:
        try:
            return self.assets[model_id]
        except KeyError:
            raise KeyError(f"asset catalog has no model {model_id!r}") from None

    def models_for(self, semantic: int) -> list[str]:
        fam = C.VEGETATION if semantic in C.VEGETATION else {semantic}
        return sorted(m for m, a in self.assets.items() if a.semantic in fam)


def _asset(model_id, semantic, parts, mount_offset=0.0) -> Asset:
    v, t = merge_parts(parts)
    return Asset(model_id, semantic, v, t, mount_offset)


def _trees() -> list[Asset]:
    return [
        _asset("shrub", C.LOW_VEGETATION, [
            cylinder((0, 0, 0), 0.05, 0.35, 6),
            ellipsoid((0, 0, 0.65), (0.55, 0.55, 0.35), 5, 8),
        ]),
        _asset("tree_small", C.MEDIUM_VEGETATION, [
            cylinder((0, 0, 0), 0.12, 1.3, 6),
            ellipsoid((0, 0, 2.2), (1.2, 1.2, 1.1), 6, 10),
        ]),
        _asset("tree_conifer", C.HIGH_VEGETATION, [
            cylinder((0, 0, 0), 0.2, 1.5, 6),
            cone((0, 0, 1.5), 1.8, 6.5, 10),
        ]),
        _asset("tree_large", C.HIGH_VEGETATION, [
            cylinder((0, 0, 0), 0.3, 3.5, 8),
            icosphere((0, 0, 6.0), 3.0, 1),
        ]),
    ]


def _vehicles() -> list[Asset]:
    return [
        _asset("car", C.VEHICLE, [
            box((0, 0, 0.55), (4.4, 1.8, 0.8)),
            box((-0.2, 0, 1.25), (2.4, 1.6, 0.6)),
        ]),
        _asset("truck", C.TRUCK, [
            box((3.6, 0, 1.45), (2.0, 2.4, 2.6)),
            box((-1.4, 0, 1.85), (7.0, 2.5, 3.2)),
        ]),
        _asset("tank", C.MILITARY_VEHICLE, [
            box((0, 0, 0.8), (6.5, 3.4, 1.2)),
            box((-0.3, 0, 1.8), (3.0, 2.4, 0.8)),
            box((2.6, 0, 1.9), (3.6, 0.25, 0.25)),
        ]),
        _asset("helicopter", C.AIRCRAFT, [
            ellipsoid((0, 0, 1.5), (2.6, 1.1, 1.2), 6, 10),
            box((-4.2, 0, 1.9), (5.0, 0.4, 0.4)),
            box((-6.6, 0, 2.6), (0.6, 0.15, 1.6)),
            box((0, 0, 2.85), (10.0, 0.3, 0.06)),
            box((0, 0, 2.85), (0.3, 10.0, 0.06)),
        ]),
        _asset("bike", C.BIKE, [
            box((-0.55, 0, 0.34), (0.66, 0.05, 0.66)),
            box((0.55, 0, 0.34), (0.66, 0.05, 0.66)),
            box((0, 0, 0.65), (1.1, 0.05, 0.08)),
            box((0.5, 0, 0.95), (0.08, 0.5, 0.05)),
        ]),
        _asset("motorcycle", C.MOTORCYCLE, [
            box((-0.7, 0, 0.33), (0.64, 0.14, 0.64)),
            box((0.7, 0, 0.33), (0.64, 0.14, 0.64)),
            box((0, 0, 0.7), (1.5, 0.4, 0.45)),
            box((0.65, 0, 1.05), (0.1, 0.8, 0.06)),
        ]),
    ]


def _furniture() -> list[Asset]:
    return [
        _asset("light_pole", C.LIGHT_POLE, [
            cylinder((0, 0, 0), 0.1, 8.0, 6),
            box((0.8, 0, 7.9), (1.7, 0.15, 0.15)),
            box((1.55, 0, 7.75), (0.5, 0.25, 0.15)),
        ]),
        _asset("street_sign", C.STREET_SIGN, [
            cylinder((0, 0, 0), 0.04, 2.0, 6),
            box((0, 0, 2.25), (0.7, 0.05, 0.5)),
        ]),
        _asset("bench", C.CLUTTER, [
            box((0, 0, 0.45), (1.8, 0.45, 0.08)),
            box((0, -0.2, 0.75), (1.8, 0.06, 0.5)),
            box((-0.8, 0, 0.2), (0.08, 0.4, 0.4)),
            box((0.8, 0, 0.2), (0.08, 0.4, 0.4)),
        ]),
        _asset("container", C.CLUTTER, [box((0, 0, 1.3), (6.0, 2.4, 2.6))]),
        _asset("barrel", C.CLUTTER, [cylinder((0, 0, 0), 0.3, 0.9, 8)]),
        _asset("fence_panel", C.FENCE, [
            box((0, 0, 0.8), (4.0, 0.06, 1.6)),
            box((-1.95, 0, 0.85), (0.1, 0.1, 1.7)),
            box((1.95, 0, 0.85), (0.1, 0.1, 1.7)),
        ]),
    ]


def sphere_crown_asset(radius: float = 4.0, trunk_height: float = 2.0) -> Asset:
    """Round tree crown on a trunk; the test object for shell-shaped reconstruction."""
    return _asset("sphere_crown", C.HIGH_VEGETATION, [
        cylinder((0, 0, 0), 0.25, trunk_height + 0.5, 8),
        icosphere((0, 0, trunk_height + radius), radius, 3),
    ])


@lru_cache(maxsize=1)
def _default_assets() -> tuple[Asset, ...]:
    return tuple(_trees() + _vehicles() + _furniture() + [sphere_crown_asset()])


def default_catalog() -> AssetCatalog:
    cat = AssetCatalog()
    for a in _default_assets():
        cat.add(a)
    return cat
