"""Depth errors (RMSE, MAE, REL), mean IoU and mAP@0.5 over connected-component instances.

All functions take numpy arrays (torch tensors are converted) for one image;
``aggregate`` averages per-image results uniformly over a dataset.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

# 4-connectivity
_STRUCTURE = ndimage.generate_binary_structure(2, 1)


@dataclass
class MetricsReport:
    rmse: float
    mae: float
    rel: float
    iou: float
    map50: float
    sample_count: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))


def _np(x) -> np.ndarray:
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    return np.asarray(x)


def depth_metrics(pred, target, valid=None) -> tuple[float, float, float]:
    """Return (rmse, mae, rel) over valid pixels."""
    pred, target = _np(pred).astype(np.float64), _np(target).astype(np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    valid = np.ones(pred.shape, bool) if valid is None else _np(valid).astype(bool)
    if not valid.any():
        raise ValueError("valid mask is empty")
    p, t = pred[valid], target[valid]
    if np.any(t <= 0):
        raise ValueError("ground-truth depth must be positive on valid pixels for REL")
    err = p - t
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mae = float(np.mean(np.abs(err)))
    rel = float(np.mean(np.abs(err) / t))
    return rmse, mae, rel


def _check_ids(mask: np.ndarray, num_classes: int, name: str):
    if mask.size and (mask.min() < 0 or mask.max() >= num_classes):
        raise ValueError(f"{name} ids must lie in [0, {num_classes}), got [{mask.min()}, {mask.max()}]")


def iou(pred_mask, gt_mask, num_classes: int) -> float:
    """Mean IoU over classes present in either mask."""
    pred_mask, gt_mask = _np(pred_mask).astype(np.int64), _np(gt_mask).astype(np.int64)
    _check_ids(pred_mask, num_classes, "prediction")
    _check_ids(gt_mask, num_classes, "ground-truth")
    scores = []
    for c in range(num_classes):
        p, g = pred_mask == c, gt_mask == c
        union = np.logical_or(p, g).sum()
        if union == 0:
            continue
        scores.append(np.logical_and(p, g).sum() / union)
    return float(np.mean(scores)) if scores else 1.0


def components(mask: np.ndarray) -> list[np.ndarray]:
    """4-connected components of a boolean mask, as a list of boolean masks."""
    labels, n = ndimage.label(mask, structure=_STRUCTURE)
    return [labels == i for i in range(1, n + 1)]


def average_precision(scores: list[float], is_tp: list[bool], num_gt: int) -> float:
    """Area under the all-point interpolated precision/recall curve."""
    if num_gt == 0:
        return 0.0
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    tp = np.asarray(is_tp, dtype=np.float64)[order]
    fp = 1.0 - tp
    tp_cum, fp_cum = np.cumsum(tp), np.cumsum(fp)
    recall = tp_cum / num_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, np.finfo(np.float64).eps)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def match_instances(pred_instances: list[np.ndarray], pred_scores: list[float],
                    gt_instances: list[np.ndarray], threshold: float = 0.5) -> list[bool]:
    """Greedy score-ordered matching; returns a TP flag per prediction (input order)."""
    order = np.argsort(-np.asarray(pred_scores, dtype=np.float64), kind="stable")
    matched = [False] * len(gt_instances)
    flags = [False] * len(pred_instances)
    for i in order:
        best, best_j = -1.0, -1
        for j, g in enumerate(gt_instances):
            if matched[j]:
                continue
            inter = np.logical_and(pred_instances[i], g).sum()
            union = np.logical_or(pred_instances[i], g).sum()
            ov = inter / union if union else 0.0
            if ov > best:
                best, best_j = ov, j
        if best_j >= 0 and best > threshold:
            matched[best_j] = True
            flags[i] = True
    return flags


def map50(pred_prob, gt_mask, num_classes: int, threshold: float = 0.5) -> float:
    """mAP in [0, 100] over non-background classes; a class absent from both is skipped.

    Returns NaN when every foreground class is skipped.
    """
    prob = _np(pred_prob).astype(np.float64)
    gt_mask = _np(gt_mask).astype(np.int64)
    _check_ids(gt_mask, num_classes, "ground-truth")
    pred_mask = prob.argmax(axis=0)
    aps = []
    for c in range(1, num_classes):
        pred_inst = components(pred_mask == c)
        gt_inst = components(gt_mask == c)
        if not pred_inst and not gt_inst:
            continue
        scores = [float(prob[c][m].mean()) for m in pred_inst]
        flags = match_instances(pred_inst, scores, gt_inst, threshold)
        aps.append(average_precision(scores, flags, len(gt_inst)))
    if not aps:
        return float("nan")
    return 100.0 * float(np.mean(aps))


def image_metrics(pred_depth, gt_depth, pred_prob, gt_mask, num_classes: int,
                  valid=None) -> dict:
    rmse, mae, rel = depth_metrics(pred_depth, gt_depth, valid)
    pred_mask = _np(pred_prob).argmax(axis=0)
    return {
        "rmse": rmse, "mae": mae, "rel": rel,
        "iou": iou(pred_mask, gt_mask, num_classes),
        "map50": map50(pred_prob, gt_mask, num_classes),
    }


def aggregate(per_image: list[dict]) -> MetricsReport:
    """Uniform per-image average; images where mAP is undefined are left out of mAP."""
    if not per_image:
        raise ValueError("no images to aggregate")
    def mean(key):
        vals = [r[key] for r in per_image if not np.isnan(r[key])]
        return float(np.mean(vals)) if vals else float("nan")
    return MetricsReport(
        rmse=mean("rmse"), mae=mean("mae"), rel=mean("rel"),
        iou=mean("iou"), map50=mean("map50"), sample_count=len(per_image),
    )
