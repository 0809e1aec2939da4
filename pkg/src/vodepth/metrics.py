"""Eigen-protocol depth metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

MIN_DEPTH = 0.5
MAX_DEPTH = 80.0
COLUMNS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "d1", "d2", "d3")


@dataclass
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    pixels: int

    def as_row(self) -> tuple:
        return (self.abs_rel, self.sq_rel, self.rmse, self.rmse_log,
                self.delta1, self.delta2, self.delta3)

    def to_csv(self) -> str:
        """One line, in the usual column order (abs_rel ... d3)."""
        return ",".join(f"{v:.6f}" for v in self.as_row())

    def as_dict(self) -> dict:
        return asdict(self)


def compute_errors(pred, gt):
    """Metrics over paired depth samples (already masked and clamped)."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if pred.size == 0:
        raise ValueError("no valid pixels to evaluate")
    ratio = np.maximum(pred / gt, gt / pred)
    diff = pred - gt
    return {
        "abs_rel": float(np.mean(np.abs(diff) / gt)),
        "sq_rel": float(np.mean(diff ** 2 / gt)),
        "rmse": float(np.sqrt(np.mean(diff ** 2))),
        "rmse_log": float(np.sqrt(np.mean((np.log(pred) - np.log(gt)) ** 2))),
        "delta1": float(np.mean(ratio < 1.25)),
        "delta2": float(np.mean(ratio < 1.25 ** 2)),
        "delta3": float(np.mean(ratio < 1.25 ** 3)),
    }


def valid_mask(gt_depth, min_depth=MIN_DEPTH, max_depth=MAX_DEPTH):
    gt = np.asarray(gt_depth, dtype=np.float64)
    return np.isfinite(gt) & (gt > min_depth) & (gt < max_depth)


def compute_metrics(pred_depth, gt_depth, min_depth=MIN_DEPTH, max_depth=MAX_DEPTH) -> MetricsReport:
    """Single-image metrics: clamp predictions, keep pixels with valid ground truth."""
    pred = np.asarray(pred_depth, dtype=np.float64)
    gt = np.asarray(gt_depth, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    mask = valid_mask(gt, min_depth, max_depth)
    pred = np.clip(pred[mask], min_depth, max_depth)
    e = compute_errors(pred, gt[mask])
    return MetricsReport(**e, pixels=int(mask.sum()))


def mean_report(reports) -> MetricsReport:
    """Per-image average, as in the Eigen protocol."""
    reports = list(reports)
    if not reports:
        raise ValueError("no images evaluated")
    fields = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")
    avg = {f: float(np.mean([getattr(r, f) for r in reports])) for f in fields}
    return MetricsReport(**avg, pixels=sum(r.pixels for r in reports))
