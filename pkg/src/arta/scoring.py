"""Inference-time scoring strategies and window-to-timestamp alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from arta.data import TimeSeries, window_array
from arta.detector import as_batch, reconstruct
from arta.errors import ConfigurationError
from arta.generator import apply_mask, generate_mask, window_baseline

STRATEGIES = ("detector", "mask_weighted", "sensitivity_gap")
DEFAULT_STRATEGY = "detector"


@dataclass(frozen=True)
class ScoreSeries:
    s: np.ndarray  # (N,)
    strategy: str


def _window_batch_scores(model, x: torch.Tensor, strategy: str) -> torch.Tensor:
    """Scores for a (B, T, F) batch, accumulated in float64."""
    det = model.detector
    err = (x.double() - reconstruct(det, x).double()).square()  # (B, T, F)
    if strategy == "detector":
        return err.mean(dim=(1, 2))
    if model.generator is None:
        raise ConfigurationError(f"strategy {strategy!r} needs a generator; this model was trained without one")
    m = generate_mask(model.generator, x)
    if strategy == "mask_weighted":
        return (m.double()[..., None] * err).mean(dim=(1, 2))
    if strategy == "sensitivity_gap":
        base = torch.zeros_like(x) if model.config.no_baseline else window_baseline(x)
        x_tilde = apply_mask(x, m, base)
        err_tilde = (x_tilde.double() - reconstruct(det, x_tilde).double()).square()
        return (err - err_tilde).mean(dim=(1, 2))
    raise ConfigurationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def score_window(model, w, strategy: str = DEFAULT_STRATEGY) -> float:
    """Score of a single (T, F) window. ``sensitivity_gap`` may be negative."""
    x, _ = as_batch(w, model.detector.n_features)
    with torch.no_grad():
        return float(_window_batch_scores(model, x, strategy)[0])


def score_windows(model, windows: np.ndarray | torch.Tensor, strategy: str = DEFAULT_STRATEGY, batch_size: int = 256) -> np.ndarray:
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if strategy != "detector" and model.generator is None:
        raise ConfigurationError(f"strategy {strategy!r} needs a generator; this model was trained without one")
    xs = windows if isinstance(windows, torch.Tensor) else torch.from_numpy(np.array(windows, dtype=np.float32))
    out = []
    with torch.no_grad():
        for i in range(0, xs.shape[0], batch_size):
            out.append(_window_batch_scores(model, xs[i : i + batch_size].float(), strategy).numpy())
    return np.concatenate(out) if out else np.zeros(0)


def align_scores(window_scores: np.ndarray, n: int, T: int) -> np.ndarray:
    """Place the score of the window starting at i on timestamp i + T - 1.

    The first T - 1 timestamps, which close no window, repeat the first
    window's score.
    """
    if len(window_scores) != n - T + 1:
        raise ConfigurationError(f"expected {n - T + 1} window scores for N={n}, T={T}, got {len(window_scores)}")
    return np.concatenate([np.full(T - 1, window_scores[0]), window_scores])


def score_series(model, ts: TimeSeries, strategy: str = DEFAULT_STRATEGY, normalized: bool = False) -> ScoreSeries:
    """Stride-1 window scores aligned to every timestamp of ``ts``.

    ``ts`` is normalized with the model's stored statistics unless
    ``normalized`` says it already is.
    """
    T = model.config.window
    if ts.n < T:
        raise ConfigurationError(f"series has {ts.n} points, fewer than the window length {T}")
    if ts.f != model.detector.n_features:
        raise ConfigurationError(f"series has {ts.f} sensors, model expects {model.detector.n_features}")
    if not normalized and model.normalizer is not None:
        ts = model.normalizer.apply(ts)
    windows = window_array(ts.values.astype(np.float32), T, 1)
    return ScoreSeries(align_scores(score_windows(model, windows, strategy), ts.n, T), strategy)
