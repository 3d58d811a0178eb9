"""Building footprints and their extrusion into labeled prisms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..classes import BUILDING, WINDOW, jittered_color
from ..geometry import drop_collinear, is_simple_polygon, signed_area, triangulate_polygon
from .mesh import LabeledMesh, empty_mesh
from .terrain import HeightField

# style -> (roof, windows)
STYLES = {
    "flat": ("flat", True),
    "gable": ("gable", True),
    "flat_plain": ("flat", False),
    "gable_plain": ("gable", False),
}

FLOOR_HEIGHT = 3.0
WINDOW_WIDTH = 1.2
WINDOW_HEIGHT = 1.4
WINDOW_SILL = 0.9
WINDOW_PITCH = 3.0


class FootprintError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"footprint {index}: {message}")
        self.index = index


@dataclass(frozen=True, eq=False)
class BuildingFootprint:
    ring: np.ndarray
    height: float
    style: str = "flat"

    def __post_init__(self):
        ring = np.asarray(self.ring, dtype=np.float64).reshape(-1, 2)
        if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
            ring = ring[:-1]
        object.__setattr__(self, "ring", ring)

    def validated(self, index: int = 0) -> "BuildingFootprint":
        """Counter-clockwise copy with collinear vertices removed; raises :class:`FootprintError`."""
        if not self.height > 0:
            raise FootprintError(index, f"height must be positive, got {self.height}")
        if self.style not in STYLES:
            raise FootprintError(index, f"unknown style {self.style!r}")
        if len(self.ring) < 3:
            raise FootprintError(index, "ring needs at least 3 vertices")
        if not is_simple_polygon(self.ring):
            raise FootprintError(index, "ring is self-intersecting")
        ring = drop_collinear(self.ring)
        if len(ring) < 3 or abs(signed_area(ring)) <= 1e-9:
            raise FootprintError(index, "ring has zero area")
        if signed_area(ring) < 0:
            ring = ring[::-1].copy()
        return BuildingFootprint(ring, float(self.height), self.style)


def _window_columns(length: float) -> list[tuple[float, float]]:
    n = int(np.floor((length - 0.6) / WINDOW_PITCH))
    if n <= 0:
        return []
    margin = (length - n * WINDOW_PITCH) / 2
    cols = []
    for k in range(n):
        mid = margin + (k + 0.5) * WINDOW_PITCH
        cols.append((mid - WINDOW_WIDTH / 2, mid + WINDOW_WIDTH / 2))
    return cols


def _window_rows(height: float) -> list[tuple[float, float]]:
    rows = []
    floor = 0.0
    while floor + WINDOW_SILL + WINDOW_HEIGHT + 0.3 <= height:
        rows.append((floor + WINDOW_SILL, floor + WINDOW_SILL + WINDOW_HEIGHT))
        floor += FLOOR_HEIGHT
    return rows


class _Builder:
    """Accumulates vertices (deduplicated by key) and labeled triangles."""

    def __init__(self):
        self.verts: list[np.ndarray] = []
        self.keys: dict = {}
        self.tris: list[tuple[int, int, int]] = []
        self.labels: list[int] = []

    def vertex(self, key, pos) -> int:
        if key is None or key not in self.keys:
            self.verts.append(np.asarray(pos, dtype=np.float64))
            idx = len(self.verts) - 1
            if key is not None:
                self.keys[key] = idx
            return idx
        return self.keys[key]

    def tri(self, a, b, c, label):
        self.tris.append((a, b, c))
        self.labels.append(label)


def _wall(b: _Builder, ring, i, z0, levels, windows: bool):
    """Tessellate wall ``i`` into bands so window cells are separate, non-overlapping quads.

    Corner vertices are shared through keys (corner index, level index) so the
    prism stays watertight; the bottom and top bands fan out from the wall's
    corners, which avoids T-junctions with the base and roof.
    """
    n = len(ring)
    p, q = ring[i], ring[(i + 1) % n]
    length = float(np.linalg.norm(q - p))
    d = (q - p) / length
    cols = _window_columns(length) if windows and len(levels) > 2 else []
    xs = [0.0] + [x for c in cols for x in c] + [length]
    last = len(xs) - 1
    win_cols = {2 * k + 1 for k in range(len(cols))}
    # levels are [0, sill1, top1, sill2, top2, ..., H]; odd bands are window rows
    win_rows = {2 * k + 1 for k in range((len(levels) - 2) // 2)}

    def vert(xi, li):
        if xi == 0:
            return b.vertex(("c", i, li), (*p, z0 + levels[li]))
        if xi == last:
            return b.vertex(("c", (i + 1) % n, li), (*q, z0 + levels[li]))
        return b.vertex(("w", i, xi, li), (*(p + xs[xi] * d), z0 + levels[li]))

    nb = len(levels) - 1
    split = last > 1
    for band in range(nb):
        lo, hi = band, band + 1
        if split and nb > 1 and band == 0:
            a, c = vert(0, lo), vert(last, lo)
            tops = [vert(k, hi) for k in range(last + 1)]
            b.tri(a, c, tops[-1], BUILDING)
            for k in range(last - 1, -1, -1):
                b.tri(a, tops[k + 1], tops[k], BUILDING)
        elif split and nb > 1 and band == nb - 1:
            a, c = vert(0, hi), vert(last, hi)
            bots = [vert(k, lo) for k in range(last + 1)]
            for k in range(last):
                b.tri(bots[k], bots[k + 1], a, BUILDING)
            b.tri(bots[-1], c, a, BUILDING)
        else:
            for k in range(last):
                v00, v10 = vert(k, lo), vert(k + 1, lo)
                v11, v01 = vert(k + 1, hi), vert(k, hi)
                label = WINDOW if (band in win_rows and k in win_cols) else BUILDING
                b.tri(v00, v10, v11, label)
                b.tri(v00, v11, v01, label)


def _gable_axis(ring: np.ndarray):
    """For a rectangle, return (long-edge start index); None for other shapes."""
    if len(ring) != 4:
        return None
    e = [ring[(i + 1) % 4] - ring[i] for i in range(4)]
    for i in range(4):
        if abs(np.dot(e[i], e[(i + 1) % 4])) > 1e-6 * np.linalg.norm(e[i]) * np.linalg.norm(e[(i + 1) % 4]):
            return None
    return 0 if np.linalg.norm(e[0]) >= np.linalg.norm(e[1]) else 1


def extrude_building(fp: BuildingFootprint, base_z: float, instance_id: int, color) -> LabeledMesh:
    roof, windows = STYLES[fp.style]
    ring = fp.ring
    n = len(ring)
    height = fp.height
    rows = _window_rows(height) if windows else []
    levels = [0.0] + [z for r in rows for z in r] + [height]
    b = _Builder()
    for i in range(n):
        _wall(b, ring, i, base_z, levels, windows and bool(rows))

    top = len(levels) - 1
    base_idx = [b.vertex(("c", i, 0), (*ring[i], base_z)) for i in range(n)]
    top_idx = [b.vertex(("c", i, top), (*ring[i], base_z + height)) for i in range(n)]
    for i0, i1, i2 in triangulate_polygon(ring):
        b.tri(base_idx[i0], base_idx[i2], base_idx[i1], BUILDING)

    axis = _gable_axis(ring) if roof == "gable" else None
    if axis is None:
        for i0, i1, i2 in triangulate_polygon(ring):
            b.tri(top_idx[i0], top_idx[i1], top_idx[i2], BUILDING)
    else:
        # ridge parallel to the long edges, over the mid-line of the short edges
        i = axis
        a0, a1, a2, a3 = i, (i + 1) % 4, (i + 2) % 4, (i + 3) % 4
        short = float(np.linalg.norm(ring[a2] - ring[a1]))
        rise = min(0.35 * short, 4.0)
        zr = base_z + height + rise
        m1 = (ring[a1] + ring[a2]) / 2
        m0 = (ring[a3] + ring[a0]) / 2
        r1 = b.vertex(None, (*m1, zr))
        r0 = b.vertex(None, (*m0, zr))
        t = top_idx
        b.tri(t[a0], t[a1], r1, BUILDING)
        b.tri(t[a0], r1, r0, BUILDING)
        b.tri(t[a2], t[a3], r0, BUILDING)
        b.tri(t[a2], r0, r1, BUILDING)
        b.tri(t[a1], t[a2], r1, BUILDING)
        b.tri(t[a3], t[a0], r0, BUILDING)

    m = len(b.tris)
    return LabeledMesh(
        np.array(b.verts),
        np.array(b.tris, dtype=np.int64),
        np.array(b.labels),
        np.full(m, instance_id),
        np.tile(np.asarray(color, np.uint8), (m, 1)),
        np.full(m, np.inf),
    )


def extrude_buildings(
    footprints: list[BuildingFootprint],
    hf: HeightField,
    first_instance_id: int = 1,
    seed: int = 0,
) -> LabeledMesh:
    """Extrude every footprint into a closed prism seated at the highest terrain point under it.

    Instance ids are assigned consecutively from ``first_instance_id`` in input order.
    """
    rng = np.random.default_rng(seed)
    parts = []
    for k, fp in enumerate(footprints):
        fp = fp.validated(k)
        if not np.all(hf.contains(fp.ring)):
            raise FootprintError(k, "footprint extends beyond the height field")
        base_z = hf.max_height_in(fp.ring)
        parts.append(extrude_building(fp, base_z, first_instance_id + k, jittered_color(BUILDING, rng)))
    if not parts:
        return empty_mesh()
    return LabeledMesh.concatenate(parts)
