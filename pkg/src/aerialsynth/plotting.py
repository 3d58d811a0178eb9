"""Report figures. Everything renders off-screen to PNG files.

PNG metadata is stripped of the library version so reruns give identical bytes.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import classes as C  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> str:
    path = os.fspath(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def _rgb(cid: int):
    return tuple(v / 255 for v in C.base_color(cid)) if cid in C.CLASS_NAMES else (0.5, 0.5, 0.5)


def plot_class_histogram(path, hist: dict[int, int], names: dict[int, str] | None = None) -> str:
    """Bar chart of points per class on a log axis (empty classes are drawn as gaps)."""
    names = names or C.CLASS_NAMES
    ids = sorted(hist)
    counts = np.array([hist[i] for i in ids], dtype=float)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(range(len(ids)), np.where(counts > 0, counts, np.nan), color=[_rgb(i) for i in ids], edgecolor="k", lw=0.3)
    ax.set_yscale("log")
    ax.set_xticks(range(len(ids)))
    ax.set_xticklabels([names.get(i, str(i)) for i in ids], rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("points")
    return _save(fig, path)


def plot_density_profiles(path, profiles: dict, xlabel: str = "radius [m]") -> str:
    """Density per bin for one or more profiles, keyed by legend label."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, prof in profiles.items():
        mid = 0.5 * (prof.edges[:-1] + prof.edges[1:])
        ax.plot(mid, prof.density, marker="o", ms=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("points / m$^3$")
    if len(profiles) > 1:
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_iou_bars(path, scores, names) -> str:
    """Per-class IoU in percent with the mean as a dashed line."""
    iou = np.asarray(scores.iou, dtype=float) * 100
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(names) + 1), 3.5))
    ax.bar(range(len(names)), np.nan_to_num(iou), color="tab:blue")
    for k in np.flatnonzero(np.isnan(iou)):
        ax.text(k, 1, "n/a", ha="center", fontsize=7)
    ax.axhline(scores.miou * 100, ls="--", color="k", lw=1)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 100)
    ax.set_ylabel("IoU [%]")
    ax.set_title(f"mIoU {scores.miou * 100:.1f}  oAcc {scores.oacc * 100:.1f}", fontsize=9)
    return _save(fig, path)


def plot_flight_plan(path, plan, footprint_polys=None) -> str:
    """Camera stations per pass over the area of interest, optionally with ground footprints."""
    fig, ax = plt.subplots(figsize=(5, 5))
    x0, y0, x1, y1 = plan.aoi
    ax.add_patch(plt.Rectangle((x0, y0), x1 - x0, y1 - y0, fill=False, ec="k", lw=1))
    pos = np.array([p.position for p in plan.poses]).reshape(-1, 3)
    passes = np.array([ln[0] for ln in plan.lines]) if plan.lines else np.zeros(len(pos), int)
    if footprint_polys is not None:
        for poly in footprint_polys:
            ring = np.vstack([poly, poly[:1]])
            ax.plot(ring[:, 0], ring[:, 1], color="0.8", lw=0.3)
    for k, color in ((0, "tab:blue"), (1, "tab:orange")):
        sel = passes == k
        if sel.any():
            ax.plot(pos[sel, 0], pos[sel, 1], "-o", ms=2, lw=0.6, color=color, label=f"pass {k + 1}")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(fontsize=8, loc="upper right")
    ax.set_title(f"{len(plan)} images at {plan.altitude:g} m", fontsize=9)
    return _save(fig, path)


def plot_cloud_topview(path, cloud, max_points: int = 60000) -> str:
    """Top view coloured by semantic class; a fixed stride keeps the figure deterministic."""
    fig, ax = plt.subplots(figsize=(6, 6))
    step = max(1, len(cloud) // max_points)
    pos = cloud.positions[::step]
    sem = cloud.semantic[::step]
    palette = np.array([_rgb(i) for i in range(256)])
    order = np.argsort(pos[:, 2], kind="stable")
    ax.scatter(pos[order, 0], pos[order, 1], c=palette[sem[order]], s=0.5, marker=".", lw=0)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    return _save(fig, path)
