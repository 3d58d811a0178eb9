"""Footprint and road inputs: GeoJSON-style files and a procedural city layout."""
from __future__ import annotations

import json
import os

import numpy as np

from .buildings import STYLES, BuildingFootprint
from .placement import RoadNetwork, RoadSegment
from .terrain import ParameterError


class LayoutError(ValueError):
    pass


def read_geojson(path: str | os.PathLike) -> tuple[list[BuildingFootprint], RoadNetwork]:
    """Polygon features with a ``height`` property become footprints, LineStrings with ``width`` become roads.

    Only the outer ring of a polygon is used. Coordinates are taken as local
    metres; no projection is applied.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    feats = doc.get("features") if isinstance(doc, dict) else None
    if feats is None:
        raise LayoutError(f"{path}: not a FeatureCollection")
    footprints, segments = [], []
    for k, f in enumerate(feats):
        geom = f.get("geometry") or {}
        props = f.get("properties") or {}
        kind = geom.get("type")
        if kind == "Polygon":
            if "height" not in props:
                raise LayoutError(f"{path}: feature {k} polygon has no height property")
            ring = np.asarray(geom["coordinates"][0], dtype=np.float64)[:, :2]
            footprints.append(BuildingFootprint(ring, float(props["height"]), props.get("style", "flat")))
        elif kind == "LineString":
            if "width" not in props:
                raise LayoutError(f"{path}: feature {k} line has no width property")
            pts = np.asarray(geom["coordinates"], dtype=np.float64)[:, :2]
            segments.append(RoadSegment(pts, float(props["width"])))
        else:
            raise LayoutError(f"{path}: feature {k} has unsupported geometry {kind!r}")
    return footprints, RoadNetwork(tuple(segments))


def write_geojson(path: str | os.PathLike, footprints, roads: RoadNetwork) -> None:
    feats = []
    for fp in footprints:
        ring = np.vstack([fp.ring, fp.ring[:1]]).tolist()
        feats.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": {"height": fp.height, "style": fp.style},
        })
    for seg in roads.segments:
        feats.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": seg.points.tolist()},
            "properties": {"width": seg.width},
        })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh, indent=1)


def _rect(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)


def _l_shape(x0, y0, x1, y1, fx, fy):
    xm = x0 + fx * (x1 - x0)
    ym = y0 + fy * (y1 - y0)
    return np.array([[x0, y0], [x1, y0], [x1, ym], [xm, ym], [xm, y1], [x0, y1]], dtype=np.float64)


def procedural_layout(
    seed: int,
    extent: tuple[float, float],
    origin: tuple[float, float] = (0.0, 0.0),
    block_pitch: float = 70.0,
    road_width: float = 8.0,
    setback: float = 5.0,
    height_range: tuple[float, float] = (6.0, 24.0),
    lot_fill: float = 0.7,
) -> tuple[list[BuildingFootprint], RoadNetwork]:
    """Grid of roads with rectangular and L-shaped buildings on the blocks between them.

    Each block is split into 2×2 lots; a lot is built with probability
    ``lot_fill``.
    """
    if not (extent[0] > 0 and extent[1] > 0 and block_pitch > road_width > 0):
        raise ParameterError("extent must be positive and block_pitch > road_width > 0")
    rng = np.random.default_rng(seed)
    ox, oy = origin
    w, h = extent

    def lines(length):
        n = max(1, int(length // block_pitch))
        off = (length - (n - 1) * block_pitch) / 2
        return [off + k * block_pitch for k in range(n)]

    xs, ys = lines(w), lines(h)
    segments = [RoadSegment([[ox + x, oy], [ox + x, oy + h]], road_width) for x in xs]
    segments += [RoadSegment([[ox, oy + y], [ox + w, oy + y]], road_width) for y in ys]

    def spans(cuts, length):
        edges = [0.0] + cuts + [length]
        out = []
        for a, b in zip(edges[:-1], edges[1:]):
            lo = a + (road_width / 2 + setback if a > 0 else setback)
            hi = b - (road_width / 2 + setback if b < length else setback)
            if hi - lo >= 16.0:
                out.append((lo, hi))
        return out

    styles = sorted(STYLES)
    footprints = []
    for ya, yb in spans(ys, h):
        for xa, xb in spans(xs, w):
            xm, ym = (xa + xb) / 2, (ya + yb) / 2
            for lx0, lx1 in ((xa, xm - 2), (xm + 2, xb)):
                for ly0, ly1 in ((ya, ym - 2), (ym + 2, yb)):
                    if lx1 - lx0 < 6 or ly1 - ly0 < 6 or rng.random() >= lot_fill:
                        continue
                    bw = rng.uniform(0.6, 1.0) * (lx1 - lx0)
                    bh = rng.uniform(0.6, 1.0) * (ly1 - ly0)
                    x0 = lx0 + rng.uniform(0, lx1 - lx0 - bw)
                    y0 = ly0 + rng.uniform(0, ly1 - ly0 - bh)
                    style = styles[rng.integers(len(styles))]
                    if rng.random() < 0.3:
                        ring = _l_shape(x0, y0, x0 + bw, y0 + bh, rng.uniform(0.4, 0.7), rng.uniform(0.4, 0.7))
                        style = style.replace("gable", "flat")
                    else:
                        ring = _rect(x0, y0, x0 + bw, y0 + bh)
                    ring = ring + (ox, oy)
                    footprints.append(BuildingFootprint(ring, float(rng.uniform(*height_range)), style))
    return footprints, RoadNetwork(tuple(segments))
