"""Height fields: procedural generation, ground-detail sculpting and the text grid format."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..geometry import point_segment_distance


class ParameterError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HeightField:
    """Elevation samples on a regular grid; node (r, c) sits at origin + (c, r) * cell_size.

    Between nodes the surface is the triangulation used by the terrain mesh
    (each cell split along its (r, c)-(r+1, c+1) diagonal), so
    :meth:`height_at` agrees exactly with the rendered ground.
    """

    origin: tuple[float, float]
    cell_size: float
    elevations: np.ndarray

    def __post_init__(self):
        elev = np.ascontiguousarray(self.elevations, dtype=np.float64)
        if elev.ndim != 2 or elev.shape[0] < 2 or elev.shape[1] < 2:
            raise ParameterError(f"elevation grid must be 2D with at least 2x2 nodes, got {elev.shape}")
        if not self.cell_size > 0:
            raise ParameterError(f"cell_size must be positive, got {self.cell_size}")
        if not np.all(np.isfinite(elev)):
            raise ParameterError("elevations must be finite")
        object.__setattr__(self, "elevations", elev)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.elevations.shape

    @property
    def extent(self) -> tuple[float, float]:
        rows, cols = self.shape
        return (cols - 1) * self.cell_size, (rows - 1) * self.cell_size

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        ex, ey = self.extent
        return self.origin[0], self.origin[1], self.origin[0] + ex, self.origin[1] + ey

    def contains(self, xy: np.ndarray, margin: float | np.ndarray = 0.0) -> np.ndarray:
        xy = np.atleast_2d(xy)
        x0, y0, x1, y1 = self.bounds
        return (
            (xy[:, 0] - margin >= x0) & (xy[:, 0] + margin <= x1)
            & (xy[:, 1] - margin >= y0) & (xy[:, 1] + margin <= y1)
        )

    def node_positions(self) -> np.ndarray:
        rows, cols = self.shape
        xs = self.origin[0] + np.arange(cols) * self.cell_size
        ys = self.origin[1] + np.arange(rows) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel(), self.elevations.ravel()])

    def height_at(self, x, y) -> np.ndarray:
        """Piecewise-linear height, clamped to the grid extent."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        rows, cols = self.shape
        fx = np.clip((x - self.origin[0]) / self.cell_size, 0.0, cols - 1)
        fy = np.clip((y - self.origin[1]) / self.cell_size, 0.0, rows - 1)
        c = np.minimum(np.floor(fx).astype(np.int64), cols - 2)
        r = np.minimum(np.floor(fy).astype(np.int64), rows - 2)
        u = fx - c
        v = fy - r
        z = self.elevations
        za, zb, zd, ze = z[r, c], z[r, c + 1], z[r + 1, c], z[r + 1, c + 1]
        upper = u >= v
        return np.where(
            upper,
            za + u * (zb - za) + v * (ze - zb),
            za + v * (zd - za) + u * (ze - zd),
        )

    def max_height_in(self, ring: np.ndarray) -> float:
        """Maximum terrain height over a polygon: ring vertices plus grid nodes inside it."""
        from ..geometry import point_in_polygon

        zs = [float(np.max(self.height_at(ring[:, 0], ring[:, 1])))]
        nodes = self.node_positions()
        lo, hi = ring.min(axis=0), ring.max(axis=0)
        box = (
            (nodes[:, 0] >= lo[0]) & (nodes[:, 0] <= hi[0])
            & (nodes[:, 1] >= lo[1]) & (nodes[:, 1] <= hi[1])
        )
        cand = nodes[box]
        if len(cand):
            inside = point_in_polygon(cand[:, :2], ring)
            if inside.any():
                zs.append(float(cand[inside, 2].max()))
        return max(zs)


def _value_noise(rng: np.random.Generator, xs: np.ndarray, ys: np.ndarray, spacing: float) -> np.ndarray:
    nx = int(np.ceil(xs[-1] / spacing)) + 2
    ny = int(np.ceil(ys[-1] / spacing)) + 2
    lattice = rng.random((ny, nx))
    fx = xs / spacing
    fy = ys / spacing
    ix = np.floor(fx).astype(np.int64)
    iy = np.floor(fy).astype(np.int64)
    tx = fx - ix
    ty = fy - iy
    sx = tx * tx * (3 - 2 * tx)
    sy = ty * ty * (3 - 2 * ty)
    a = lattice[np.ix_(iy, ix)]
    b = lattice[np.ix_(iy, ix + 1)]
    c = lattice[np.ix_(iy + 1, ix)]
    d = lattice[np.ix_(iy + 1, ix + 1)]
    top = a + (b - a) * sx[None, :]
    bot = c + (d - c) * sx[None, :]
    return top + (bot - top) * sy[:, None]


def generate_terrain(
    seed: int,
    extent: tuple[float, float],
    cell_size: float,
    relief_amplitude: float,
    origin: tuple[float, float] = (0.0, 0.0),
    octaves: int = 4,
) -> HeightField:
    """Smooth value-noise terrain whose height range is exactly ``relief_amplitude``."""
    ex, ey = float(extent[0]), float(extent[1])
    if not (ex > 0 and ey > 0):
        raise ParameterError(f"extent must be positive, got {extent}")
    if not cell_size > 0:
        raise ParameterError(f"cell_size must be positive, got {cell_size}")
    if relief_amplitude < 0:
        raise ParameterError(f"relief_amplitude must be non-negative, got {relief_amplitude}")
    cols = int(np.ceil(ex / cell_size - 1e-9)) + 1
    rows = int(np.ceil(ey / cell_size - 1e-9)) + 1
    if relief_amplitude == 0:
        return HeightField(origin, cell_size, np.zeros((rows, cols)))

    rng = np.random.default_rng(seed)
    xs = np.arange(cols) * cell_size
    ys = np.arange(rows) * cell_size
    spacing = max(ex, ey) / 2.0
    total = np.zeros((rows, cols))
    weight = 1.0
    for _ in range(octaves):
        total += weight * _value_noise(rng, xs, ys, spacing)
        weight *= 0.5
        spacing = max(spacing / 2.0, cell_size)
    lo, hi = total.min(), total.max()
    if hi > lo:
        elev = (total - lo) / (hi - lo) * relief_amplitude
    else:
        elev = np.zeros_like(total)
    return HeightField(origin, cell_size, elev)


def _feature_count(rate: float, hf: HeightField) -> int:
    if rate <= 0:
        return 0
    length_km = max(hf.extent) / 1000.0
    return max(1, int(round(rate * length_km)))


def sculpt_ground_details(
    hf: HeightField,
    seed: int,
    ditch_rate: float,
    bump_rate: float,
    ditch_depth: float = 0.3,
    ditch_width: float = 1.5,
    bump_height: float = 0.12,
    bump_width: float = 0.6,
) -> HeightField:
    """Carve ditches/gutters and raise speed bumps as short linear features.

    Rates are features per kilometre of the field's longer side (at least one
    feature whenever a rate is positive). Each feature has a raised-cosine
    cross-section; overlapping ditches take the deepest value, so no edit
    exceeds its configured depth or height.
    """
    if ditch_rate < 0 or bump_rate < 0:
        raise ParameterError("feature rates must be non-negative")
    if not (0 < ditch_depth <= 0.5) or not (0 < bump_height <= 0.5):
        raise ParameterError("ditch depth and bump height must be in (0, 0.5] m")
    n_ditch = _feature_count(ditch_rate, hf)
    n_bump = _feature_count(bump_rate, hf)
    if n_ditch == 0 and n_bump == 0:
        return HeightField(hf.origin, hf.cell_size, hf.elevations.copy())

    rng = np.random.default_rng(seed)
    nodes = hf.node_positions()[:, :2]
    rows, cols = hf.shape
    lowest = np.zeros(len(nodes))
    highest = np.zeros(len(nodes))
    ex, ey = hf.extent

    def segment(min_len, max_len):
        # start on a grid node so the feature's centre line always hits a sample
        r, c = rng.integers(0, rows), rng.integers(0, cols)
        a = np.array([hf.origin[0] + c * hf.cell_size, hf.origin[1] + r * hf.cell_size])
        ang = rng.uniform(0, np.pi)
        length = rng.uniform(min_len, max_len)
        b = a + length * np.array([np.cos(ang), np.sin(ang)])
        return a, b

    def profile(a, b, width, amount):
        w = max(width, 1.5 * hf.cell_size)
        d = point_segment_distance(nodes, a, b)
        out = np.zeros(len(nodes))
        m = d < w / 2
        out[m] = amount * 0.5 * (1 + np.cos(np.pi * 2 * d[m] / w))
        return out

    for _ in range(n_ditch):
        a, b = segment(0.1 * max(ex, ey), 0.4 * max(ex, ey))
        lowest = np.minimum(lowest, -profile(a, b, ditch_width, ditch_depth))
    for _ in range(n_bump):
        a, b = segment(3.0, 8.0)
        highest = np.maximum(highest, profile(a, b, bump_width, bump_height))
    elev = hf.elevations + (lowest + highest).reshape(rows, cols)
    return HeightField(hf.origin, hf.cell_size, elev)


def write_heightfield(path: str | os.PathLike, hf: HeightField) -> None:
    rows, cols = hf.shape
    with open(path, "w") as fh:
        fh.write("# heightfield grid, row-major, row 0 at origin y\n")
        fh.write(f"origin {hf.origin[0]!r} {hf.origin[1]!r}\n")
        fh.write(f"cell_size {hf.cell_size!r}\n")
        fh.write(f"rows {rows}\ncols {cols}\n")
        for row in hf.elevations:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_heightfield(path: str | os.PathLike) -> HeightField:
    header: dict[str, list[str]] = {}
    values: list[float] = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key = line.split()[0]
            if key in ("origin", "cell_size", "rows", "cols"):
                header[key] = line.split()[1:]
            else:
                values.extend(float(v) for v in line.split())
    missing = {"origin", "cell_size", "rows", "cols"} - set(header)
    if missing:
        raise ParameterError(f"{path}: missing header fields {sorted(missing)}")
    rows, cols = int(header["rows"][0]), int(header["cols"][0])
    if len(values) != rows * cols:
        raise ParameterError(f"{path}: expected {rows * cols} elevations, found {len(values)}")
    origin = (float(header["origin"][0]), float(header["origin"][1]))
    return HeightField(origin, float(header["cell_size"][0]), np.array(values).reshape(rows, cols))
