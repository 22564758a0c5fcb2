"""Threshold-sweep metrics: precision/recall/F1, AUC-PR, AUC-ROC, VUS-PR, VUS-ROC.

Scores are min-max normalized to [0, 1] and compared against thresholds
h_i = i/I with the closed rule ``score >= h``. A tolerance ℓ extends every
labelled anomaly segment by ℓ timestamps on both sides; a prediction inside
that buffer counts as a true positive, while an unpredicted buffer point is
not a miss (it counts as a true negative). Tolerance therefore only ever
turns false positives into true positives.

Curves are traced in order of increasing threshold and closed with the
all-negative corner (recall 0 / precision 1 for PR, FPR 0 / TPR 0 for
ROC), so a perfect detector has area exactly 1. Each tolerance slice is
integrated with the trapezoid rule; the volume is the mean slice area over
ℓ_1..ℓ_J.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from arta.errors import ConfigurationError, EvaluationError

DEFAULT_I = 50
DEFAULT_J = 10
DEFAULT_LMAX = 20


def normalize_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise EvaluationError("scores contain non-finite values")
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.zeros_like(s)
    return (s - lo) / (hi - lo)


def thresholds(I: int) -> np.ndarray:
    if I < 1:
        raise ConfigurationError("I must be >= 1")
    return np.arange(I + 1) / I


def tolerances(J: int, l_max: int) -> np.ndarray:
    if J < 1 or l_max < 0:
        raise ConfigurationError("J must be >= 1 and l_max >= 0")
    return np.rint(np.linspace(0, l_max, J + 1)).astype(int)


def _labels(labels, n: int | None = None) -> np.ndarray:
    y = np.asarray(labels).astype(np.int8)
    if n is not None and y.shape != (n,):
        raise ConfigurationError(f"labels have length {y.shape[0]}, scores have {n}")
    if not np.isin(y, (0, 1)).all():
        raise ConfigurationError("labels must be 0/1")
    return y


def segments(labels) -> list[tuple[int, int]]:
    """Maximal runs of 1s as half-open (start, stop) pairs."""
    y = np.concatenate([[0], _labels(labels), [0]])
    edges = np.flatnonzero(np.diff(y))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def dilate(labels, tol: int) -> np.ndarray:
    """Extend every anomaly segment by ``tol`` points per side (clipped)."""
    y = _labels(labels)
    if tol <= 0:
        return y.copy()
    c = np.concatenate([[0], np.cumsum(y)])
    n = len(y)
    idx = np.arange(n)
    lo = np.clip(idx - tol, 0, n)
    hi = np.clip(idx + tol + 1, 0, n)
    return (c[hi] - c[lo] > 0).astype(np.int8)


def _require_both_classes(y: np.ndarray) -> None:
    if y.sum() == 0 or y.sum() == len(y):
        raise EvaluationError("ground truth must contain both normal and anomalous points")


def confusion(scores, labels, h: float, tol: int = 0) -> tuple[int, int, int, int]:
    """(TP, FP, FN, TN) of ``scores >= h`` with a tolerance buffer of ``tol``.

    Predictions inside the dilated region are TP; misses are counted only
    on the original labels. ``scores`` are expected to be normalized already.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _labels(labels, len(s))
    tp, fp, fn, tn = _counts(s, y, dilate(y, tol), np.array([h], dtype=np.float64))
    return int(tp[0]), int(fp[0]), int(fn[0]), int(tn[0])


def pr_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if tp + fn == 0:
        raise EvaluationError("recall undefined: no anomalies in ground truth")
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


@dataclass
class MetricSurface:
    """Grids indexed [threshold i, tolerance j].

    For ``mode == "pr"`` ``x`` is recall and ``y`` precision; for ``roc``
    ``x`` is FPR and ``y`` TPR.
    """

    mode: str
    thresholds: np.ndarray
    tolerances: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        xn, yn = ("recall", "precision") if self.mode == "pr" else ("fpr", "tpr")
        w.writerow(["threshold", "tolerance", xn, yn])
        for i, h in enumerate(self.thresholds):
            for j, tol in enumerate(self.tolerances):
                w.writerow([f"{h:.9g}", int(tol), f"{self.x[i, j]:.9g}", f"{self.y[i, j]:.9g}"])
        return buf.getvalue()


def _counts(s: np.ndarray, y: np.ndarray, yd: np.ndarray, hs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    pred = s[None, :] >= hs[:, None]  # (I+1, N)
    yb, ydb = y.astype(bool), yd.astype(bool)
    tp = (pred & ydb).sum(axis=1)
    fp = (pred & ~ydb).sum(axis=1)
    fn = (~pred & yb).sum(axis=1)
    tn = len(s) - tp - fp - fn
    return tp, fp, fn, tn


def surface(scores, labels, mode: str, hs: np.ndarray, tols) -> MetricSurface:
    """PR or ROC grids over every (threshold, tolerance) pair."""
    if mode not in ("pr", "roc"):
        raise ConfigurationError(f"mode must be 'pr' or 'roc', got {mode!r}")
    s = normalize_scores(scores)
    y = _labels(labels, len(s))
    _require_both_classes(y)
    tols = np.asarray(tols, dtype=int)
    x = np.empty((len(hs), len(tols)))
    yy = np.empty_like(x)
    for j, tol in enumerate(tols):
        tp, fp, fn, tn = _counts(s, y, dilate(y, int(tol)), hs)
        if mode == "pr":
            x[:, j] = tp / (tp + fn)
            yy[:, j] = np.where(tp + fp == 0, 1.0, tp / np.maximum(tp + fp, 1))
        else:
            neg = fp + tn
            x[:, j] = np.where(neg == 0, 0.0, fp / np.maximum(neg, 1))
            yy[:, j] = tp / (tp + fn)
    return MetricSurface(mode, np.asarray(hs, dtype=np.float64), tols, x, yy)


def _closed(x: np.ndarray, y: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray]:
    corner_y = 1.0 if mode == "pr" else 0.0
    return np.append(x, 0.0), np.append(y, corner_y)


def slice_area(x: np.ndarray, y: np.ndarray, mode: str) -> float:
    """Trapezoid area of one curve given in order of increasing threshold."""
    xc, yc = _closed(x, y, mode)
    return float(0.5 * np.sum((xc[:-1] - xc[1:]) * (yc[1:] + yc[:-1])))


def auc_pr(scores, labels, I: int = DEFAULT_I) -> float:
    surf = surface(scores, labels, "pr", thresholds(I), [0])
    return slice_area(surf.x[:, 0], surf.y[:, 0], "pr")


def auc_roc(scores, labels, I: int = DEFAULT_I) -> float:
    surf = surface(scores, labels, "roc", thresholds(I), [0])
    return slice_area(surf.x[:, 0], surf.y[:, 0], "roc")


def auc_roc_rank(scores, labels) -> float:
    """Probability a random anomaly outranks a random normal point (ties count half)."""
    from scipy.stats import rankdata

    s = np.asarray(scores, dtype=np.float64)
    y = _labels(labels, len(s)).astype(bool)
    _require_both_classes(y)
    ranks = rankdata(s)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class VusResult:
    value: float  # mean slice area over tolerances 1..J, in [0, 1]
    raw: float  # (1/4)·Σ_i Σ_{j>=1} |Δx|·(y_i + y_{i-1}), unnormalized
    surface: MetricSurface


def vus(
    scores,
    labels,
    mode: str = "pr",
    I: int = DEFAULT_I,
    J: int = DEFAULT_J,
    l_max: int = DEFAULT_LMAX,
    tols=None,
) -> VusResult:
    """Volume under the PR (or ROC) surface over thresholds × tolerances.

    ``tols`` overrides the evenly spaced grid 0..l_max with J+1 entries.
    """
    tols = tolerances(J, l_max) if tols is None else np.asarray(tols, dtype=int)
    if len(tols) < 2:
        raise ConfigurationError("need at least two tolerance levels (J >= 1)")
    surf = surface(scores, labels, mode, thresholds(I), tols)
    areas = np.array([slice_area(surf.x[:, j], surf.y[:, j], mode) for j in range(1, len(tols))])
    return VusResult(float(areas.mean()), float(areas.sum() / 2.0), surf)


def best_f1(scores, labels, I: int = DEFAULT_I) -> tuple[float, float]:
    """Best point-wise F1 over the threshold grid, and the threshold achieving it."""
    s = normalize_scores(scores)
    y = _labels(labels, len(s))
    _require_both_classes(y)
    best = (-1.0, 0.0)
    for h in thresholds(I):
        tp, fp, fn, _ = confusion(s, y, h)
        f1 = pr_f1(tp, fp, fn)[2]
        if f1 > best[0]:
            best = (f1, float(h))
    return best


METRICS = ("vus_pr", "vus_roc", "auc_pr", "auc_roc", "f1")


def evaluate(
    scores,
    labels,
    metrics=METRICS,
    I: int = DEFAULT_I,
    J: int = DEFAULT_J,
    l_max: int = DEFAULT_LMAX,
) -> dict[str, float]:
    """Named metric values; VUS entries also get a ``*_raw`` companion."""
    out: dict[str, float] = {}
    for name in metrics:
        if name in ("vus_pr", "vus_roc"):
            r = vus(scores, labels, name[4:], I, J, l_max)
            out[name] = r.value
            out[name + "_raw"] = r.raw
        elif name == "auc_pr":
            out[name] = auc_pr(scores, labels, I)
        elif name == "auc_roc":
            out[name] = auc_roc(scores, labels, I)
        elif name == "f1":
            out[name], out["f1_threshold"] = best_f1(scores, labels, I)
        else:
            raise ConfigurationError(f"unknown metric {name!r}; expected one of {METRICS}")
    return out
