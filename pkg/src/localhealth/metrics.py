"""Risk-classification metrics and prediction-side thresholding."""
from __future__ import annotations

import numpy as np

from .data import RiskThreshold


def _confusion(preds: np.ndarray, labels: np.ndarray) -> tuple[int, int, int, int]:
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    return tp, fp, fn, tn


def _f1(tp: int, fp: int, fn: int) -> float:
    # zero-denominator convention: a class with no true and no predicted members scores 0
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def macro_f1(preds, labels) -> float:
    """Unweighted mean of the per-class F1 over classes {0, 1}."""
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape or preds.ndim != 1 or preds.size == 0:
        raise ValueError(f"need equal-length non-empty vectors, got {preds.shape} vs {labels.shape}")
    tp, fp, fn, tn = _confusion(preds, labels)
    f1_pos = _f1(tp, fp, fn)
    f1_neg = _f1(tn, fn, fp)
    return (f1_pos + f1_neg) / 2.0


def accuracy(preds, labels) -> float:
    """Fraction correct, in percent."""
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape or preds.size == 0:
        raise ValueError("need equal-length non-empty vectors")
    return 100.0 * float(np.mean(preds == labels))


def predict_risk(
    ghat: np.ndarray,
    threshold: RiskThreshold,
    rule: str = "label_threshold",
) -> np.ndarray:
    """Binary risk predictions from regression outputs.

    The default mirrors the label rule: r_hat = 1 iff ghat >= tau of the
    evaluation year.  The "predicted_quantile" alternative thresholds at the
    prediction distribution's own 75th percentile instead (sensitivity
    analysis; calibration-free).
    """
    ghat = np.asarray(ghat, dtype=float)
    if rule == "label_threshold":
        tau = threshold.tau
    elif rule == "predicted_quantile":
        tau = float(np.percentile(ghat, 75))
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return (ghat >= tau).astype(int)


def predict_risk_by_year(
    ghat: np.ndarray,
    years: np.ndarray,
    thresholds: dict[int, RiskThreshold],
    rule: str = "label_threshold",
) -> np.ndarray:
    """predict_risk applied per evaluation year for a mixed-year vector."""
    ghat = np.asarray(ghat, dtype=float)
    years = np.asarray(years, dtype=int)
    preds = np.zeros(ghat.size, dtype=int)
    for year in np.unique(years):
        if year not in thresholds:
            raise ValueError(f"missing risk threshold for year {year}")
        mask = years == year
        preds[mask] = predict_risk(ghat[mask], thresholds[int(year)], rule=rule)
    return preds
