"""Synthetic multi-sensor series with injected anomalies (test and demo fixture)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from arta import seeding
from arta.data import TimeSeries
from arta.errors import ConfigurationError


@dataclass(frozen=True)
class Anomaly:
    kind: str  # "spike" or "level_shift"
    start: int
    length: int
    sensors: tuple[int, ...]


def sinusoid_series(
    n: int = 5000,
    n_sensors: int = 5,
    seed: int = 0,
    ar_rho: float = 0.7,
    noise_std: float = 0.1,
    period_range: tuple[float, float] = (30.0, 80.0),
) -> np.ndarray:
    """Sum of two sinusoids per sensor plus AR(1) background noise."""
    rng = seeding.stream(seed, "synthetic-signal")
    t = np.arange(n)[:, None]
    periods = rng.uniform(*period_range, size=(1, n_sensors))
    phases = rng.uniform(0, 2 * np.pi, size=(2, n_sensors))
    amps = rng.uniform(0.5, 1.5, size=(2, n_sensors))
    x = amps[0] * np.sin(2 * np.pi * t / periods + phases[0]) + amps[1] * np.sin(2 * np.pi * t / (periods * 2.7) + phases[1])
    eps = rng.standard_normal((n, n_sensors)) * noise_std * np.sqrt(1 - ar_rho**2)
    noise = np.zeros_like(eps)
    noise[0] = rng.standard_normal(n_sensors) * noise_std
    for i in range(1, n):
        noise[i] = ar_rho * noise[i - 1] + eps[i]
    return x + noise


def anomaly_layout(
    test_start: int,
    n: int,
    n_anomalies: int = 20,
    window: int = 100,
    shift_length: int = 20,
) -> list[tuple[str, int, int]]:
    """(kind, start, length) for alternating spike / level-shift pairs.

    Each spike sits right after the previous pair's score footprint (a
    window length past its level shift), so the score just before a spike
    is not inflated by an earlier anomaly.
    """
    pairs = (n_anomalies + 1) // 2
    period = (n - test_start - window // 2) // pairs
    if period < 2 * window + shift_length:
        raise ConfigurationError("test region too short for the requested anomalies")
    out = []
    for k in range(n_anomalies):
        p = test_start + window // 2 + (k // 2) * period
        if k % 2 == 0:
            out.append(("spike", p, 1))
        else:
            out.append(("level_shift", p + window, shift_length))
    return out


def make_fixture(
    n: int = 5000,
    n_sensors: int = 5,
    n_anomalies: int = 20,
    seed: int = 0,
    split_fraction: float = 0.5,
    window: int = 100,
    spike_size: float = 6.0,
    shift_size: float = 3.0,
    shift_length: int = 20,
) -> tuple[TimeSeries, list[Anomaly]]:
    """Labelled series whose anomalies all lie after the training region.

    Magnitudes are in units of each sensor's standard deviation.
    """
    values = sinusoid_series(n, n_sensors, seed)
    scale = values.std(axis=0)
    labels = np.zeros(n, dtype=np.int8)
    rng = seeding.stream(seed, "synthetic-anomalies")
    anomalies = []
    for kind, start, length in anomaly_layout(int(n * split_fraction), n, n_anomalies, window, shift_length):
        k = int(rng.integers(1, 3))
        sensors = tuple(sorted(rng.choice(n_sensors, size=k, replace=False).tolist()))
        sign = rng.choice([-1.0, 1.0], size=k)
        size = spike_size if kind == "spike" else shift_size
        for s, sg in zip(sensors, sign):
            values[start : start + length, s] += sg * size * scale[s]
        labels[start : start + length] = 1
        anomalies.append(Anomaly(kind, start, length, sensors))
    names = tuple(f"sensor_{i}" for i in range(n_sensors))
    return TimeSeries(values, labels, names), anomalies
