"""Segmentation scores: confusion-matrix IoU/accuracy and instance average precision.

Instance AP follows the ScanNet-style protocol. Within a class, predictions
are visited by descending confidence (ties: lower prediction index first)
and each takes the unmatched ground-truth instance of highest point IoU
(ties: lower gt index) provided that IoU reaches the threshold. The
precision/recall curve is read at 101 recall points using the running
maximum of precision to the right. mAP averages thresholds 0.50:0.05:0.95;
class means only count classes that have ground-truth instances.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import classes as C

AP_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.951, 0.05), 2).tolist())
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


class MetricsError(ValueError):
    pass


def _num(x) -> float | None:
    """JSON-safe float: NaN becomes null."""
    x = float(x)
    return None if math.isnan(x) else x


# -- semantic -----------------------------------------------------------------

def confusion(gt: np.ndarray, pred: np.ndarray, num_classes: int, ignore_label: int | None = None) -> np.ndarray:
    """K x K counts with rows = ground truth and columns = prediction.

    Points whose ground truth equals ``ignore_label`` are dropped first.
    """
    gt = np.asarray(gt).reshape(-1).astype(np.int64)
    pred = np.asarray(pred).reshape(-1).astype(np.int64)
    if len(gt) != len(pred):
        raise MetricsError(f"label arrays differ in length: {len(gt)} vs {len(pred)}")
    if ignore_label is not None:
        keep = gt != ignore_label
        gt, pred = gt[keep], pred[keep]
    K = int(num_classes)
    if K < 1:
        raise MetricsError("num_classes must be positive")
    for name, a in (("gt", gt), ("pred", pred)):
        if len(a) and (a.min() < 0 or a.max() >= K):
            raise MetricsError(f"{name} labels must lie in [0, {K})")
    return np.bincount(gt * K + pred, minlength=K * K).reshape(K, K).astype(np.int64)


@dataclass(frozen=True)
class SemanticScores:
    iou: np.ndarray      # NaN for classes absent from both gt and prediction
    valid: np.ndarray    # classes that enter the mean
    miou: float
    oacc: float

    def as_dict(self, names=None) -> dict:
        names = names or [str(k) for k in range(len(self.iou))]
        return {
            "mIoU": self.miou,
            "oAcc": self.oacc,
            "iou": {n: _num(v) for n, v in zip(names, self.iou)},
        }


def semantic_scores(cm: np.ndarray) -> SemanticScores:
    """Per-class IoU = TP / (TP + FP + FN), mean IoU over non-vacuous classes, and overall accuracy."""
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise MetricsError(f"confusion matrix must be square, got shape {cm.shape}")
    if np.any(cm < 0):
        raise MetricsError("confusion matrix has negative entries")
    total = cm.sum()
    if cm.size == 0 or total == 0:
        raise MetricsError("confusion matrix is empty")
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(axis=0) + cm.sum(axis=1) - np.diag(cm)
    valid = denom > 0
    iou = np.full(len(tp), np.nan)
    iou[valid] = tp[valid] / denom[valid]
    return SemanticScores(iou, valid, float(iou[valid].mean()), float(tp.sum() / total))


# -- instance -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InstanceMask:
    """A set of point indices with a class id (ground truth when confidence is None)."""

    indices: np.ndarray
    class_id: int
    confidence: float | None = None

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64).reshape(-1))
        if not len(idx):
            raise MetricsError("instance masks must be non-empty")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "class_id", int(self.class_id))
        if self.confidence is not None:
            c = float(self.confidence)
            if not 0.0 <= c <= 1.0:
                raise MetricsError(f"confidence must lie in [0, 1], got {c}")
            object.__setattr__(self, "confidence", c)


def InstancePrediction(indices, class_id: int, confidence: float) -> InstanceMask:
    return InstanceMask(indices, class_id, confidence)


def instances_from_labels(semantic: np.ndarray, instance: np.ndarray, classes=C.INSTANCE_CLASSES) -> list[InstanceMask]:
    """Ground-truth masks from per-point labels.

    A mask is every point sharing a nonzero instance id. Its class is the most
    common semantic among those points that belongs to ``classes`` (smallest
    id on ties); ids with no such point are skipped.
    """
    semantic = np.asarray(semantic).reshape(-1)
    instance = np.asarray(instance).reshape(-1)
    if len(semantic) != len(instance):
        raise MetricsError("semantic and instance arrays differ in length")
    ids = np.unique(instance[instance > 0])
    order = np.argsort(instance, kind="stable")
    starts = np.searchsorted(instance[order], ids, side="left")
    ends = np.searchsorted(instance[order], ids, side="right")
    allowed = np.zeros(256, bool)
    allowed[list(classes)] = True
    out = []
    for a, b in zip(starts, ends):
        idx = order[a:b]
        sem = semantic[idx].astype(np.int64)
        counts = np.bincount(sem[allowed[sem]], minlength=256)
        if counts.sum() == 0:
            continue
        out.append(InstanceMask(idx, int(np.argmax(counts))))
    return out


def _mask_matrix(masks: list[InstanceMask], n_points: int) -> sparse.csr_matrix:
    if not masks:
        return sparse.csr_matrix((0, n_points), dtype=np.int64)
    rows = np.concatenate([np.full(len(m.indices), k) for k, m in enumerate(masks)])
    cols = np.concatenate([m.indices for m in masks])
    return sparse.csr_matrix((np.ones(len(cols), np.int64), (rows, cols)), shape=(len(masks), n_points))


def iou_matrix(preds: list[InstanceMask], gts: list[InstanceMask], n_points: int) -> np.ndarray:
    """Point-set IoU between every prediction (rows) and gt instance (columns)."""
    P, G = _mask_matrix(preds, n_points), _mask_matrix(gts, n_points)
    inter = (P @ G.T).toarray().astype(np.float64)
    sp = np.array([len(m.indices) for m in preds], np.float64)
    sg = np.array([len(m.indices) for m in gts], np.float64)
    union = sp[:, None] + sg[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def greedy_match(iou: np.ndarray, threshold: float) -> np.ndarray:
    """Gt index matched by each prediction (rows already in confidence order), -1 if none."""
    n_p, n_g = iou.shape
    taken = np.zeros(n_g, bool)
    match = np.full(n_p, -1, np.int64)
    for i in range(n_p):
        cand = np.where(taken, -1.0, iou[i])
        if n_g == 0:
            continue
        j = int(np.argmax(cand))  # argmax returns the lowest index among ties
        if cand[j] >= threshold:
            match[i] = j
            taken[j] = True
    return match


def average_precision(tp: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP from per-prediction TP flags in ranking order."""
    if n_gt == 0:
        return math.nan
    tp = np.asarray(tp, dtype=bool)
    if not len(tp):
        return 0.0
    ctp = np.cumsum(tp)
    precision = ctp / np.arange(1, len(tp) + 1)
    recall = ctp / n_gt
    # running maximum of precision from the right
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    k = np.searchsorted(recall, RECALL_POINTS, side="left")
    ok = k < len(recall)
    return float(np.where(ok, envelope[np.minimum(k, len(recall) - 1)], 0.0).mean())


@dataclass(frozen=True)
class InstanceReport:
    classes: tuple           # class ids, one row each
    thresholds: tuple
    ap_table: np.ndarray     # (classes, thresholds); NaN where the class has no gt
    n_gt: np.ndarray
    ap25: np.ndarray         # per class
    names: tuple = field(default=())

    def _at(self, t: float) -> np.ndarray:
        k = [i for i, v in enumerate(self.thresholds) if abs(v - t) < 1e-9]
        if not k:
            raise MetricsError(f"threshold {t} was not evaluated")
        return self.ap_table[:, k[0]]

    @property
    def ap(self) -> np.ndarray:
        band = [i for i, v in enumerate(self.thresholds) if any(abs(v - b) < 1e-9 for b in AP_THRESHOLDS)]
        a = self.ap_table[:, band]
        return np.where(self.n_gt > 0, a.mean(axis=1) if a.size else np.nan, np.nan)

    @property
    def ap50(self) -> np.ndarray:
        return self._at(0.5)

    @property
    def present(self) -> np.ndarray:
        return self.n_gt > 0

    def mean(self, values: np.ndarray) -> float:
        v = values[self.present]
        return float(v.mean()) if len(v) else math.nan

    @property
    def mAP(self) -> float:
        return self.mean(self.ap)

    @property
    def mAP50(self) -> float:
        return self.mean(self.ap50)

    @property
    def mAP25(self) -> float:
        return self.mean(self.ap25)

    def as_dict(self) -> dict:
        names = self.names or tuple(str(c) for c in self.classes)

        def col(v):
            return {n: _num(x) for n, x in zip(names, v)}

        return {
            "mAP": _num(self.mAP), "mAP50": _num(self.mAP50), "mAP25": _num(self.mAP25),
            "AP": col(self.ap), "AP50": col(self.ap50), "AP25": col(self.ap25),
            "n_gt": {n: int(k) for n, k in zip(names, self.n_gt)},
        }


def _class_ap(preds, gts, n_points, thresholds):
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    ranked = [preds[i] for i in order]
    iou = iou_matrix(ranked, gts, n_points) if ranked and gts else np.zeros((len(ranked), len(gts)))
    return [average_precision(greedy_match(iou, t) >= 0, len(gts)) for t in thresholds]


def instance_ap(gts: list[InstanceMask], preds: list[InstanceMask], n_points: int, classes=None,
                thresholds=AP_THRESHOLDS, names=()) -> InstanceReport:
    """Per-class AP at each threshold plus AP25; see the module docstring for the protocol.

    Classes that have predictions but no ground truth get NaN and stay out of
    the means; their predictions cannot affect other classes.
    """
    for m in list(gts) + list(preds):
        if m.indices[0] < 0 or m.indices[-1] >= n_points:
            raise MetricsError(f"instance mask references points outside [0, {n_points})")
    for p in preds:
        if p.confidence is None:
            raise MetricsError("predictions need a confidence")
    if classes is None:
        classes = sorted({m.class_id for m in gts} | {m.class_id for m in preds})
    classes = tuple(int(c) for c in classes)
    thresholds = tuple(float(t) for t in thresholds)
    table = np.full((len(classes), len(thresholds)), np.nan)
    ap25 = np.full(len(classes), np.nan)
    n_gt = np.zeros(len(classes), np.int64)
    for r, c in enumerate(classes):
        g = [m for m in gts if m.class_id == c]
        p = [m for m in preds if m.class_id == c]
        n_gt[r] = len(g)
        if not g:
            continue
        vals = _class_ap(p, g, n_points, thresholds + (0.25,))
        table[r] = vals[:-1]
        ap25[r] = vals[-1]
    return InstanceReport(classes, thresholds, table, n_gt, ap25, tuple(names))


# -- reports ------------------------------------------------------------------

def _pct(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{100.0 * v:.2f}"


def write_semantic_report(stem: str | os.PathLike, scores: SemanticScores, names) -> tuple[str, str]:
    """``stem.csv`` (percent, columns mIoU, oAcc then per-class IoU) and ``stem.json`` (fractions)."""
    names = list(names)
    csv_path, json_path = f"{stem}.csv", f"{stem}.json"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mIoU", "oAcc"] + names)
        w.writerow([_pct(scores.miou), _pct(scores.oacc)] + [_pct(float(v)) for v in scores.iou])
    with open(json_path, "w") as fh:
        json.dump(scores.as_dict(names), fh, indent=2)
        fh.write("\n")
    return csv_path, json_path


def write_instance_report(stem: str | os.PathLike, report: InstanceReport) -> tuple[str, str]:
    """``stem.csv`` with rows AP/AP50/AP25 and columns mean then per class, plus ``stem.json``."""
    names = list(report.names or [str(c) for c in report.classes])
    csv_path, json_path = f"{stem}.csv", f"{stem}.json"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Metric", "mean"] + names)
        for label, mean, vals in (("AP", report.mAP, report.ap), ("AP50", report.mAP50, report.ap50),
                                  ("AP25", report.mAP25, report.ap25)):
            w.writerow([label, _pct(mean)] + [_pct(float(v)) for v in vals])
    with open(json_path, "w") as fh:
        json.dump(report.as_dict(), fh, indent=2)
        fh.write("\n")
    return csv_path, json_path
