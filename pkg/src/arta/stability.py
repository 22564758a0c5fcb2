"""Empirical checks of the masking stability bounds.

The detector's Lipschitz constant (w.r.t. the ℓ1 norm of the input) has
no closed form, so it is replaced by a sampled estimate L̂ and every bound
is reported with its slack rather than asserted. Because the mask is
broadcast over F sensors, ‖δ⊙M‖₁ ≤ ε·F·‖M‖₁; the F factor is kept
explicit in every bound below.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from arta import seeding
from arta.data import compute_baseline
from arta.detector import DetectorParams, window_scores
from arta.generator import GeneratorParams, apply_mask, generate_mask

ScoreFn = Callable[[np.ndarray], np.ndarray]


def detector_score_fn(detector: DetectorParams) -> ScoreFn:
    """Mean-aggregated window scores for a (B, T, F) float array."""

    def fn(x: np.ndarray) -> np.ndarray:
        return window_scores(detector, torch.as_tensor(np.asarray(x, dtype=np.float32)))

    return fn


def _as_score_fn(detector) -> ScoreFn:
    return detector if callable(detector) else detector_score_fn(detector)


@dataclass
class LipschitzEstimate:
    L_hat: float
    n_pairs: int
    eps_scale: float


def estimate_lipschitz(detector, windows: np.ndarray, n_pairs: int = 1000, eps_scale: float = 0.1, seed: int = 0) -> LipschitzEstimate:
    """max |A(X+δ) − A(X)| / ‖δ‖₁ over random pairs, δ ~ U[−eps, eps]^{T×F}.

    ``detector`` is a DetectorParams or any batched score function.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    score = _as_score_fn(detector)
    windows = np.asarray(windows, dtype=np.float64)
    rng = seeding.stream(seed, "lipschitz")
    picks = rng.integers(0, windows.shape[0], size=n_pairs)
    x = windows[picks]
    delta = rng.uniform(-eps_scale, eps_scale, size=x.shape)
    # scores are evaluated at float32; use the rounded perturbation actually seen
    x32 = x.astype(np.float32)
    xd32 = (x + delta).astype(np.float32)
    d = np.abs(score(xd32) - score(x32))
    l1 = np.abs(xd32.astype(np.float64) - x32).sum(axis=(1, 2))
    ratio = np.where(l1 > 0, d / np.maximum(l1, 1e-300), 0.0)
    return LipschitzEstimate(float(ratio.max()), n_pairs, eps_scale)


@dataclass
class StabilityReport:
    """Per-trial rows of (deviation, bound); ratio = deviation / bound."""

    L_hat: float
    eps: float
    n_features: int
    deviation: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bound: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta_zero: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def n_trials(self) -> int:
        return len(self.deviation)

    @property
    def ratio(self) -> np.ndarray:
        return np.where(self.bound > 0, self.deviation / np.where(self.bound > 0, self.bound, 1.0), np.where(self.deviation > 0, np.inf, 0.0))

    @property
    def violations(self) -> int:
        return int(np.sum(self.deviation > self.bound))

    @property
    def violation_rate(self) -> float:
        return self.violations / self.n_trials if self.n_trials else 0.0

    @property
    def max_ratio(self) -> float:
        return float(self.ratio.max()) if self.n_trials else 0.0

    def to_csv(self, seed: int | None = None) -> str:
        buf = io.StringIO()
        if seed is not None:
            buf.write(f"# seed={seed}\n")
        buf.write(f"# L_hat={self.L_hat:.9g} eps={self.eps:.9g} F={self.n_features}\n")
        buf.write(f"# trials={self.n_trials} violations={self.violations} violation_rate={self.violation_rate:.6g} max_ratio={self.max_ratio:.6g}\n")
        if self.n_trials:
            q = np.quantile(self.ratio, [0.5, 0.9, 0.99])
            buf.write(f"# ratio_quantiles p50={q[0]:.6g} p90={q[1]:.6g} p99={q[2]:.6g}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "deviation", "bound", "ratio", "violation_rate"])
        rate = self.violation_rate
        for i, (d, b, r) in enumerate(zip(self.deviation, self.bound, self.ratio)):
            w.writerow([i, f"{d:.9g}", f"{b:.9g}", f"{r:.9g}", f"{rate:.6g}"])
        return buf.getvalue()


def check_theorem1(
    detector,
    generator: GeneratorParams | None,
    windows: np.ndarray,
    eps: float = 0.1,
    n_trials: int = 1000,
    seed: int = 0,
    L_hat: float | None = None,
    masks: np.ndarray | None = None,
    zero_delta_every: int = 0,
) -> StabilityReport:
    """Compare |A(X̃_δ) − A(X̃)| with L̂·ε·F·‖M‖₁ on random windows and δ.

    Masks come from ``generator`` unless given explicitly (one per window).
    With ``zero_delta_every = k > 0`` every k-th trial uses δ = 0.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    score = _as_score_fn(detector)
    windows = np.asarray(windows, dtype=np.float64)
    if L_hat is None:
        L_hat = estimate_lipschitz(score, windows, max(100, n_trials), eps, seed + 1).L_hat
    n_features = windows.shape[2]
    report = StabilityReport(L_hat, eps, n_features)
    if n_trials == 0:
        return report
    rng = seeding.stream(seed, "theorem1")
    picks = rng.integers(0, windows.shape[0], size=n_trials)
    x = windows[picks]
    if masks is None:
        with torch.no_grad():
            m = generate_mask(generator, torch.as_tensor(x.astype(np.float32))).double().numpy()
    else:
        m = np.asarray(masks, dtype=np.float64)[picks]
    delta = rng.uniform(-eps, eps, size=x.shape)
    zero = np.zeros(n_trials, dtype=bool)
    if zero_delta_every > 0:
        zero[::zero_delta_every] = True
        delta[zero] = 0.0
    b = compute_baseline(x)
    x_tilde = apply_mask(x, m, b)
    x_tilde_d = apply_mask(x + delta, m, b)
    dev = np.abs(score(x_tilde_d.astype(np.float32)) - score(x_tilde.astype(np.float32)))
    report.deviation = dev
    report.bound = L_hat * eps * n_features * m.sum(axis=1)
    report.delta_zero = zero
    return report


@dataclass
class CapacityReport:
    k: float
    diameter: np.ndarray  # ‖X̃₁ − X̃₂‖₁ per pair
    capacity_bound: float  # 2k·F·‖X − B‖_∞
    holder_lhs: np.ndarray  # ‖(X − B)⊙(m₁ − m₂)‖₁
    holder_rhs: np.ndarray  # ‖X − B‖_∞·‖m₁ − m₂‖₁·F
    score_gap: np.ndarray | None = None  # |A(X̃₁) − A(X̃₂)|
    score_bound: np.ndarray | None = None  # L̂·‖X̃₁ − X̃₂‖₁
    L_hat: float | None = None

    @property
    def capacity_violations(self) -> int:
        return int(np.sum(self.diameter > self.capacity_bound))

    @property
    def holder_violations(self) -> int:
        return int(np.sum(self.holder_lhs > self.holder_rhs))

    @property
    def score_violations(self) -> int:
        if self.score_gap is None:
            return 0
        return int(np.sum(self.score_gap > self.score_bound))


def sample_l1_masks(n: int, T: int, k: float, rng: np.random.Generator) -> np.ndarray:
    """Random masks in [0, 1]^T with ‖m‖₁ ≤ k (rescaled when over budget)."""
    m = rng.random((n, T)) * rng.random((n, 1))
    total = m.sum(axis=1, keepdims=True)
    scale = np.where(total > k, k / np.maximum(total, 1e-300), 1.0)
    return np.clip(m * scale, 0.0, 1.0)


def check_capacity(
    x: np.ndarray,
    baseline: np.ndarray,
    masks_a: np.ndarray,
    masks_b: np.ndarray,
    k: float,
    detector=None,
    L_hat: float | None = None,
) -> CapacityReport:
    """Diameter of the masked family against 2k·F·‖X − B‖_∞ for paired masks.

    When ``detector`` is given the score gap of each pair is also compared
    with L̂·‖X̃₁ − X̃₂‖₁.
    """
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    ma, mb = np.asarray(masks_a, dtype=np.float64), np.asarray(masks_b, dtype=np.float64)
    if np.any(ma.sum(axis=1) > k * (1 + 1e-12)) or np.any(mb.sum(axis=1) > k * (1 + 1e-12)):
        raise ValueError("masks exceed the l1 budget k")
    F = x.shape[1]
    xa = apply_mask(x[None], ma, baseline[None])
    xb = apply_mask(x[None], mb, baseline[None])
    diameter = np.abs(xa - xb).sum(axis=(1, 2))
    dev_inf = float(np.abs(x - baseline).max())
    holder_lhs = np.abs((x - baseline)[None] * (ma - mb)[..., None]).sum(axis=(1, 2))
    holder_rhs = dev_inf * np.abs(ma - mb).sum(axis=1) * F
    report = CapacityReport(k, diameter, 2 * k * F * dev_inf, holder_lhs, holder_rhs)
    if detector is not None:
        score = _as_score_fn(detector)
        if L_hat is None:
            L_hat = estimate_lipschitz(score, x[None], 1000, float(np.abs(xa - xb).max()) or 0.1).L_hat
        report.L_hat = L_hat
        report.score_gap = np.abs(score(xa.astype(np.float32)) - score(xb.astype(np.float32)))
        report.score_bound = L_hat * diameter
    return report
