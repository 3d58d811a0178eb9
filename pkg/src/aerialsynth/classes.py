"""Semantic taxonomies used across the pipeline.

Ids 1..18 are the fine-grained synthetic classes. Id 0 is the aggregate
``ground`` class kept for the coarse taxonomy and for externally supplied
clouds; the scene generator itself labels terrain as road, dirt or grass.
"""
from __future__ import annotations

import colorsys

import numpy as np

UNLABELED = 255

GROUND = 0
BUILDING = 1
LOW_VEGETATION = 2
MEDIUM_VEGETATION = 3
HIGH_VEGETATION = 4
VEHICLE = 5
TRUCK = 6
AIRCRAFT = 7
MILITARY_VEHICLE = 8
BIKE = 9
MOTORCYCLE = 10
LIGHT_POLE = 11
STREET_SIGN = 12
CLUTTER = 13
FENCE = 14
ROAD = 15
WINDOW = 16
DIRT = 17
GRASS = 18

CLASS_NAMES: dict[int, str] = {
    GROUND: "ground",
    BUILDING: "building",
    LOW_VEGETATION: "low_vegetation",
    MEDIUM_VEGETATION: "medium_vegetation",
    HIGH_VEGETATION: "high_vegetation",
    VEHICLE: "vehicle",
    TRUCK: "truck",
    AIRCRAFT: "aircraft",
    MILITARY_VEHICLE: "military_vehicle",
    BIKE: "bike",
    MOTORCYCLE: "motorcycle",
    LIGHT_POLE: "light_pole",
    STREET_SIGN: "street_sign",
    CLUTTER: "clutter",
    FENCE: "fence",
    ROAD: "road",
    WINDOW: "window",
    DIRT: "dirt",
    GRASS: "grass",
}
CLASS_IDS: dict[str, int] = {name: cid for cid, name in CLASS_NAMES.items()}
NUM_CLASSES = len(CLASS_NAMES)

# The 18 fine-grained classes a generated scene can contain.
SYNTHETIC_CLASSES = tuple(range(1, 19))

# Classes that carry per-object instance ids, in benchmark column order.
INSTANCE_CLASSES = (
    BUILDING, LOW_VEGETATION, MEDIUM_VEGETATION, HIGH_VEGETATION, VEHICLE, TRUCK,
    AIRCRAFT, MILITARY_VEHICLE, BIKE, MOTORCYCLE, LIGHT_POLE, STREET_SIGN,
    CLUTTER, FENCE,
)
INSTANCE_COLUMN_NAMES = (
    "Build.", "LowVeg.", "MediumVeg.", "HighVeg.", "Vehicle", "Truck", "Aircraft",
    "MilitaryVeh.", "Bike", "Motorcycle", "LightPole", "StreetSign", "Clutter", "Fence",
)

GROUND_FAMILY = frozenset({GROUND, ROAD, DIRT, GRASS})
VEGETATION = frozenset({LOW_VEGETATION, MEDIUM_VEGETATION, HIGH_VEGETATION})

# Coarse 6-class taxonomy, in report column order.
REAL6_NAMES = ("Ground", "Building", "Tree", "Car", "Light pole", "Fence")
# Reduced instance taxonomy.
INSTANCE9_NAMES = (
    "Build.", "Vege.", "Vehicle", "Large Vehicle", "Aircraft", "Bike",
    "Poles & Signs", "Clutter", "Fence",
)


def class_name(cid: int) -> str:
    if cid == UNLABELED:
        return "unlabeled"
    return CLASS_NAMES[int(cid)]


def is_instance_class(cid: int) -> bool:
    return int(cid) in INSTANCE_CLASSES


def vegetation_class(height: float) -> int:
    """Vegetation class from bounding-box height; boundary values go to the lower class."""
    if height <= 2.0:
        return LOW_VEGETATION
    if height <= 5.0:
        return MEDIUM_VEGETATION
    return HIGH_VEGETATION


_BASE_PALETTE = {
    GROUND: (128, 118, 96),
    BUILDING: (196, 160, 140),
    LOW_VEGETATION: (120, 170, 60),
    MEDIUM_VEGETATION: (70, 140, 50),
    HIGH_VEGETATION: (30, 100, 40),
    VEHICLE: (200, 40, 40),
    TRUCK: (220, 140, 30),
    AIRCRAFT: (210, 210, 220),
    MILITARY_VEHICLE: (90, 100, 60),
    BIKE: (40, 40, 160),
    MOTORCYCLE: (120, 30, 140),
    LIGHT_POLE: (150, 150, 150),
    STREET_SIGN: (240, 220, 40),
    CLUTTER: (150, 90, 60),
    FENCE: (110, 80, 50),
    ROAD: (70, 70, 75),
    WINDOW: (90, 140, 190),
    DIRT: (150, 120, 80),
    GRASS: (100, 160, 70),
}


def base_color(cid: int) -> tuple[int, int, int]:
    return _BASE_PALETTE.get(int(cid), (255, 0, 255))


def jittered_color(cid: int, rng: np.random.Generator, amount: float = 0.08) -> tuple[int, int, int]:
    """Class base color with a small random HSV shift, for per-instance variety."""
    r, g, b = (c / 255.0 for c in base_color(cid))
    h, s, v = colorsys.rgb_to_hsv(r, g, b)
    h = (h + rng.uniform(-amount, amount) * 0.25) % 1.0
    s = float(np.clip(s + rng.uniform(-amount, amount), 0.0, 1.0))
    v = float(np.clip(v + rng.uniform(-amount, amount), 0.0, 1.0))
    r, g, b = colorsys.hsv_to_rgb(h, s, v)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))
