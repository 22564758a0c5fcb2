"""Test-time corruptions: Gaussian and AR(1) colored noise at a target SNR, salt-and-pepper.

SNR is applied per sensor: sensor f gets noise power P_f / 10^(snr_db/10)
where P_f is the mean squared value of that sensor. Labels pass through
untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from arta import seeding
from arta.data import TimeSeries
from arta.errors import ConfigurationError

NOISE_KINDS = ("gaussian", "salt_pepper", "colored")
SALT_PEPPER_GRID = (0.01, 0.05, 0.10, 0.15, 0.20)
SNR_GRID_DB = (30.0, 25.0, 20.0, 15.0, 10.0)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    snr_db: float | None = None
    p: float | None = None
    rho: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise ConfigurationError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.kind in ("gaussian", "colored") and self.snr_db is None:
            raise ConfigurationError(f"{self.kind} noise needs snr_db")
        if self.kind == "salt_pepper" and (self.p is None or not 0.0 <= self.p <= 1.0):
            raise ConfigurationError("salt_pepper noise needs p in [0, 1]")
        if not abs(self.rho) < 1.0:
            raise ConfigurationError("|rho| must be < 1")

    @property
    def severity(self) -> float:
        return self.p if self.kind == "salt_pepper" else self.snr_db

    def apply(self, ts: TimeSeries) -> TimeSeries:
        if self.kind == "gaussian":
            return add_gaussian(ts, self.snr_db, self.seed)
        if self.kind == "colored":
            return add_colored(ts, self.snr_db, self.rho, self.seed)
        return add_salt_pepper(ts, self.p, self.seed)


def _noise_std(ts: TimeSeries, snr_db: float) -> np.ndarray:
    power = np.mean(ts.values**2, axis=0)
    if np.any(power <= 0):
        bad = [ts.sensor_names[i] for i in np.flatnonzero(power <= 0)]
        raise ConfigurationError(f"SNR undefined for all-zero sensor(s): {', '.join(bad)}")
    return np.sqrt(power / 10.0 ** (snr_db / 10.0))


def add_gaussian(ts: TimeSeries, snr_db: float, seed: int = 0) -> TimeSeries:
    """Add i.i.d. N(0, σ_f²) noise; ``snr_db=inf`` returns the input unchanged."""
    if math.isinf(snr_db) and snr_db > 0:
        return ts
    sigma = _noise_std(ts, snr_db)
    noise = seeding.stream(seed, "noise-gaussian").standard_normal(ts.values.shape) * sigma
    return ts.with_values(ts.values + noise)


def ar1_noise(n: int, n_sensors: int, stationary_std: np.ndarray, rho: float, rng: np.random.Generator) -> np.ndarray:
    """n_t = ρ n_{t-1} + ε_t, started from the stationary distribution."""
    innov_std = stationary_std * math.sqrt(1.0 - rho**2)
    eps = rng.standard_normal((n, n_sensors)) * innov_std
    eps[0] = rng.standard_normal(n_sensors) * stationary_std
    return lfilter([1.0], [1.0, -rho], eps, axis=0)


def add_colored(ts: TimeSeries, snr_db: float, rho: float = 0.5, seed: int = 0) -> TimeSeries:
    """Add AR(1) noise whose stationary power meets the target SNR per sensor."""
    if not abs(rho) < 1.0:
        raise ConfigurationError("|rho| must be < 1")
    if math.isinf(snr_db) and snr_db > 0:
        return ts
    target_std = _noise_std(ts, snr_db)
    noise = ar1_noise(ts.n, ts.f, target_std, rho, seeding.stream(seed, "noise-colored"))
    return ts.with_values(ts.values + noise)


def add_salt_pepper(ts: TimeSeries, p: float, seed: int = 0) -> TimeSeries:
    """Replace each cell with probability p by its sensor's min or max (50/50).

    The extremes are taken from ``ts`` itself, i.e. from the split being
    corrupted.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError("p must be in [0, 1]")
    if p == 0.0:
        return ts
    rng = seeding.stream(seed, "noise-salt-pepper")
    hit = rng.random(ts.values.shape) < p
    high = rng.random(ts.values.shape) < 0.5
    lo, hi = ts.values.min(axis=0), ts.values.max(axis=0)
    extremes = np.where(high, hi, lo)
    return ts.with_values(np.where(hit, extremes, ts.values))


def measure_snr(clean, corrupted) -> float:
    """10·log10(Σx² / Σ(x̃ − x)²) in dB; +inf when there is no noise."""
    x = clean.values if isinstance(clean, TimeSeries) else np.asarray(clean, dtype=np.float64)
    y = corrupted.values if isinstance(corrupted, TimeSeries) else np.asarray(corrupted, dtype=np.float64)
    if x.shape != y.shape:
        raise ConfigurationError(f"shape mismatch {x.shape} vs {y.shape}")
    noise = float(np.sum((y - x) ** 2))
    if noise == 0.0:
        return math.inf
    return 10.0 * math.log10(float(np.sum(x**2)) / noise)


def default_grid(kind: str) -> tuple[float, ...]:
    return SALT_PEPPER_GRID if kind == "salt_pepper" else SNR_GRID_DB
