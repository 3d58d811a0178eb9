"""Photogrammetry-like point clouds from a labeled mesh and a flight plan.

Dense matching only recovers surfaces that several cameras see, and it
recovers them more densely the more cameras see them. The simulator mimics
that with a thinned Poisson process on the mesh surface:

1. For each triangle, count the cameras whose frustum meets the triangle's
   bounding sphere and that see its front face from at least one vertex.
   This count ``K`` bounds the number of cameras seeing any point on it.
2. Draw ``Poisson(area * density_per_view * K)`` uniform candidates.
3. Keep a candidate with probability ``v / K``, where ``v`` is its exact view
   count (in frustum, front-facing and unoccluded), provided ``v >= min_views``.
   The cameras are visited in order and the count stops as soon as the
   decision is known.

The kept density is therefore ``density_per_view * v``. Kept points are
pushed along the surface normal by Gaussian noise, points on thin objects are
dropped with ``dropout_prob`` and a small fraction becomes outliers spread
uniformly in a ball around their surface point.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba as nb
import numpy as np

from ..flight_render.bvh import BVH, ray_occluded
from ..flight_render.plan import FlightPlan
from ..pointcloud import LabeledPointCloud

NEAR = 0.1
_SURFACE_OFFSET = 1e-4
_CHUNK = 16384


class ReconError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseParams:
    surface_sigma: float = 0.05
    outlier_rate: float = 0.002
    outlier_radius: float = 0.5
    min_views: int = 2
    # 30 points per m^2 once two cameras see a surface
    density_per_view: float = 15.0
    thin_dropout_width: float = 0.3
    dropout_prob: float = 0.8
    # views more oblique than this (angle to the surface normal) do not count; 90 disables the gate
    max_incidence_deg: float = 90.0
    seed: int = 0

    def __post_init__(self):
        if self.surface_sigma < 0 or self.outlier_radius < 0:
            raise ReconError("surface_sigma and outlier_radius must be non-negative")
        for name in ("outlier_rate", "dropout_prob"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ReconError(f"{name} must be in [0, 1], got {v}")
        if int(self.min_views) != self.min_views or self.min_views < 1:
            raise ReconError("min_views must be an integer >= 1")
        if not self.density_per_view > 0:
            raise ReconError("density_per_view must be positive")
        if self.thin_dropout_width < 0:
            raise ReconError("thin_dropout_width must be non-negative")
        if not 0 < self.max_incidence_deg <= 90:
            raise ReconError("max_incidence_deg must be in (0, 90]")

    def to_dict(self) -> dict:
        return asdict(self)


def _camera_arrays(plan: FlightPlan, max_incidence_deg: float = 90.0):
    intr = plan.intrinsics
    centers = np.array([p.position for p in plan.poses], dtype=np.float64)
    rots = np.array([p.rotation() for p in plan.poses], dtype=np.float64)
    f, cx, cy, w, h = intr.focal, intr.cx, intr.cy, float(intr.width), float(intr.height)
    # side planes of the frustum in camera coordinates, inward unit normals through the origin
    planes = np.array([[f, 0.0, cx], [-f, 0.0, w - cx], [0.0, f, cy], [0.0, -f, h - cy]])
    planes /= np.linalg.norm(planes, axis=1, keepdims=True)
    cos_min = 0.0 if max_incidence_deg >= 90 else math.cos(math.radians(max_incidence_deg))
    return centers, rots, planes, np.array([f, cx, cy, w, h, cos_min])


@nb.njit(cache=True)
def _camera_bound(a, b, c, normals, centers, rots, planes):
    """Conservative per-triangle count of cameras that might see some point of it."""
    m = a.shape[0]
    n = centers.shape[0]
    out = np.zeros(m, np.int64)
    for t in range(m):
        gx = (a[t, 0] + b[t, 0] + c[t, 0]) / 3.0
        gy = (a[t, 1] + b[t, 1] + c[t, 1]) / 3.0
        gz = (a[t, 2] + b[t, 2] + c[t, 2]) / 3.0
        r = 0.0
        for v in (a, b, c):
            d = np.sqrt((v[t, 0] - gx) ** 2 + (v[t, 1] - gy) ** 2 + (v[t, 2] - gz) ** 2)
            r = max(r, d)
        r += 1e-6
        k = 0
        for j in range(n):
            front = False
            for v in (a, b, c):
                s = (normals[t, 0] * (centers[j, 0] - v[t, 0]) + normals[t, 1] * (centers[j, 1] - v[t, 1])
                     + normals[t, 2] * (centers[j, 2] - v[t, 2]))
                if s > 0.0:
                    front = True
            if not front:
                continue
            px = gx - centers[j, 0]
            py = gy - centers[j, 1]
            pz = gz - centers[j, 2]
            cxx = rots[j, 0, 0] * px + rots[j, 1, 0] * py + rots[j, 2, 0] * pz
            cyy = rots[j, 0, 1] * px + rots[j, 1, 1] * py + rots[j, 2, 1] * pz
            czz = rots[j, 0, 2] * px + rots[j, 1, 2] * py + rots[j, 2, 2] * pz
            if czz < NEAR - r:
                continue
            inside = True
            for q in range(4):
                if planes[q, 0] * cxx + planes[q, 1] * cyy + planes[q, 2] * czz < -r:
                    inside = False
                    break
            if inside:
                k += 1
        out[t] = k
    return out


@nb.njit(cache=True, inline="always")
def _sees(p, nrm, j, centers, rots, cam):
    """Frustum, front-face and incidence test of point p for camera j; returns the distance or -1."""
    dx = centers[j, 0] - p[0]
    dy = centers[j, 1] - p[1]
    dz = centers[j, 2] - p[2]
    facing = nrm[0] * dx + nrm[1] * dy + nrm[2] * dz
    if facing <= 0.0:
        return -1.0
    cxx = -(rots[j, 0, 0] * dx + rots[j, 1, 0] * dy + rots[j, 2, 0] * dz)
    cyy = -(rots[j, 0, 1] * dx + rots[j, 1, 1] * dy + rots[j, 2, 1] * dz)
    czz = -(rots[j, 0, 2] * dx + rots[j, 1, 2] * dy + rots[j, 2, 2] * dz)
    if czz < NEAR:
        return -1.0
    u = cam[0] * cxx / czz + cam[1]
    v = cam[0] * cyy / czz + cam[2]
    if u < 0.0 or u >= cam[3] or v < 0.0 or v >= cam[4]:
        return -1.0
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    if facing < cam[5] * dist:
        return -1.0
    return dist


@nb.njit(cache=True)
def _thin_candidates(points, tri_of, normals, need, centers, rots, cam,
                     lo, hi, left, right, start, count, order, v0, e1, e2):
    """For each candidate, whether at least ``need`` cameras see it unoccluded."""
    n = points.shape[0]
    keep = np.zeros(n, np.bool_)
    o = np.empty(3)
    d = np.empty(3)
    for i in range(n):
        t = tri_of[i]
        nrm = normals[t]
        p = points[i]
        seen = 0
        for j in range(centers.shape[0]):
            dist = _sees(p, nrm, j, centers, rots, cam)
            if dist < 0.0:
                continue
            for k in range(3):
                o[k] = p[k] + _SURFACE_OFFSET * nrm[k]
            dd = 0.0
            for k in range(3):
                d[k] = centers[j, k] - o[k]
                dd += d[k] * d[k]
            dd = np.sqrt(dd)
            for k in range(3):
                d[k] /= dd
            if not ray_occluded(lo, hi, left, right, start, count, order, v0, e1, e2, o, d, 1e-7, dd):
                seen += 1
                if seen >= need[i]:
                    keep[i] = True
                    break
    return keep


@nb.njit(cache=True)
def exact_view_counts(points, tri_of, normals, centers, rots, cam,
                      lo, hi, left, right, start, count, order, v0, e1, e2):
    n = points.shape[0]
    out = np.zeros(n, np.int64)
    o = np.empty(3)
    d = np.empty(3)
    for i in range(n):
        nrm = normals[tri_of[i]]
        p = points[i]
        for j in range(centers.shape[0]):
            dist = _sees(p, nrm, j, centers, rots, cam)
            if dist < 0.0:
                continue
            dd = 0.0
            for k in range(3):
                o[k] = p[k] + _SURFACE_OFFSET * nrm[k]
            for k in range(3):
                d[k] = centers[j, k] - o[k]
                dd += d[k] * d[k]
            dd = np.sqrt(dd)
            for k in range(3):
                d[k] /= dd
            if not ray_occluded(lo, hi, left, right, start, count, order, v0, e1, e2, o, d, 1e-7, dd):
                out[i] += 1
    return out


def camera_bounds(mesh, plan: FlightPlan) -> np.ndarray:
    centers, rots, planes, _ = _camera_arrays(plan)
    a, b, c = mesh.corners()
    return _camera_bound(a, b, c, mesh.normals(), centers, rots, planes)


def view_counts(mesh, bvh: BVH, plan: FlightPlan, points: np.ndarray, tri_of: np.ndarray,
                max_incidence_deg: float = 90.0) -> np.ndarray:
    """Exact number of cameras seeing each surface point (used for audits and tests)."""
    centers, rots, _, cam = _camera_arrays(plan, max_incidence_deg)
    return exact_view_counts(np.ascontiguousarray(points, dtype=np.float64), np.asarray(tri_of, np.int64),
                             mesh.normals(), centers, rots, cam, *bvh.arrays())


def _sample_on_triangles(rng, a, b, c, tri):
    r1 = rng.random(len(tri))
    r2 = rng.random(len(tri))
    flip = r1 + r2 > 1.0
    r1 = np.where(flip, 1.0 - r1, r1)
    r2 = np.where(flip, 1.0 - r2, r2)
    return a[tri] + r1[:, None] * (b[tri] - a[tri]) + r2[:, None] * (c[tri] - a[tri])


def _ball(rng, n, radius):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.random(n) ** (1.0 / 3.0))[:, None]


def simulate_reconstruction(mesh, bvh: BVH, plan: FlightPlan, params: NoiseParams | None = None,
                            return_details: bool = False):
    """Unlabeled point cloud with visibility-dependent density, normal noise, dropout and outliers.

    With ``return_details`` also returns a dict with the source triangle and an
    outlier flag per output point (ground truth for audits; never labels).
    """
    params = params or NoiseParams()
    if len(plan.poses) == 0:
        raise ReconError("flight plan has no cameras")
    centers, rots, planes, cam = _camera_arrays(plan, params.max_incidence_deg)
    a, b, c = mesh.corners()
    normals = mesh.normals()
    areas = mesh.areas()
    bound = _camera_bound(a, b, c, normals, centers, rots, planes)
    bound[bound < params.min_views] = 0
    rng = np.random.default_rng([params.seed, 0])
    counts = rng.poisson(areas * params.density_per_view * bound)
    tri_all = np.repeat(np.arange(len(areas)), counts)

    # candidates are processed in fixed-size chunks, each with its own stream
    kept_pts, kept_tri = [], []
    n_chunks = (len(tri_all) + _CHUNK - 1) // _CHUNK
    for k in range(n_chunks):
        crng = np.random.default_rng([params.seed, 1, k])
        tri = tri_all[k * _CHUNK:(k + 1) * _CHUNK]
        pts = _sample_on_triangles(crng, a, b, c, tri)
        u = crng.random(len(tri))
        need = np.maximum(params.min_views, np.floor(u * bound[tri]).astype(np.int64) + 1)
        keep = _thin_candidates(pts, tri, normals, need, centers, rots, cam, *bvh.arrays())
        kept_pts.append(pts[keep])
        kept_tri.append(tri[keep])
    pts = np.concatenate(kept_pts) if kept_pts else np.zeros((0, 3))
    tri = np.concatenate(kept_tri) if kept_tri else np.zeros(0, np.int64)

    prng = np.random.default_rng([params.seed, 2])
    if params.thin_dropout_width > 0 and params.dropout_prob > 0:
        thin = mesh.tri_width[tri] < params.thin_dropout_width
        drop = thin & (prng.random(len(tri)) < params.dropout_prob)
        pts, tri = pts[~drop], tri[~drop]
    if params.surface_sigma > 0:
        pts = pts + prng.normal(0.0, params.surface_sigma, len(tri))[:, None] * normals[tri]
    outlier = prng.random(len(tri)) < params.outlier_rate
    if outlier.any():
        pts[outlier] = pts[outlier] + _ball(prng, int(outlier.sum()), params.outlier_radius)

    cloud = LabeledPointCloud.unlabeled(pts, mesh.tri_color[tri])
    if return_details:
        return cloud, {"triangle": tri, "outlier": outlier}
    return cloud


@nb.njit(cache=True)
def _z_crossings(points, a, b, c):
    """Parity of crossings of an upward ray (slightly tilted) with the triangles."""
    n = points.shape[0]
    out = np.zeros(n, np.int64)
    dx, dy, dz = 1.3e-4, 2.9e-4, 1.0
    for i in range(n):
        ox, oy, oz = points[i, 0], points[i, 1], points[i, 2]
        for t in range(a.shape[0]):
            e1x, e1y, e1z = b[t, 0] - a[t, 0], b[t, 1] - a[t, 1], b[t, 2] - a[t, 2]
            e2x, e2y, e2z = c[t, 0] - a[t, 0], c[t, 1] - a[t, 1], c[t, 2] - a[t, 2]
            px = dy * e2z - dz * e2y
            py = dz * e2x - dx * e2z
            pz = dx * e2y - dy * e2x
            det = e1x * px + e1y * py + e1z * pz
            if det == 0.0:
                continue
            inv = 1.0 / det
            sx, sy, sz = ox - a[t, 0], oy - a[t, 1], oz - a[t, 2]
            u = (sx * px + sy * py + sz * pz) * inv
            if u < 0.0 or u > 1.0:
                continue
            qx = sy * e1z - sz * e1y
            qy = sz * e1x - sx * e1z
            qz = sx * e1y - sy * e1x
            v = (dx * qx + dy * qy + dz * qz) * inv
            if v < 0.0 or u + v > 1.0:
                continue
            if (e2x * qx + e2y * qy + e2z * qz) * inv > 0.0:
                out[i] += 1
    return out


def inside_closed_mesh(points, vertices, triangles) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    a, b, c = (np.ascontiguousarray(v[t[:, k]]) for k in range(3))
    return _z_crossings(np.ascontiguousarray(points, dtype=np.float64), a, b, c) % 2 == 1


def sample_uniform_volume(vertices, triangles, n: int, seed: int = 0) -> np.ndarray:
    """Points uniformly distributed inside a closed mesh (rejection from its bounding box).

    This is the naive "fill the volume" baseline that photogrammetry output
    does not look like.
    """
    v = np.asarray(vertices, dtype=np.float64)
    lo, hi = v.min(axis=0), v.max(axis=0)
    rng = np.random.default_rng(seed)
    out = np.zeros((0, 3))
    while len(out) < n:
        cand = rng.uniform(lo, hi, size=(max(2 * (n - len(out)), 64), 3))
        out = np.vstack([out, cand[inside_closed_mesh(cand, v, triangles)]])
    return out[:n]
