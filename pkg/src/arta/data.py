"""CSV ingestion, z-score normalization, sliding windows and window baselines.

Series are time-major: ``values`` has one row per timestamp and one column
per sensor.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from arta.errors import ConfigurationError, ParseError

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray  # (N, F) float64
    labels: np.ndarray | None = None  # (N,) int8 in {0, 1}
    sensor_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ConfigurationError(f"values must be (N>=1, F>=1), got shape {values.shape}")
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (values.shape[0],):
                raise ConfigurationError(f"labels must have length {values.shape[0]}, got {labels.shape}")
            if not np.isin(labels, (0, 1)).all():
                raise ConfigurationError("labels must be 0/1")
            object.__setattr__(self, "labels", labels.astype(np.int8))
        names = tuple(self.sensor_names) or tuple(f"s{i}" for i in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise ConfigurationError(f"{len(names)} sensor names for {values.shape[1]} sensors")
        object.__setattr__(self, "sensor_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def f(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        return replace(self, values=values)

    def slice(self, start: int, stop: int) -> "TimeSeries":
        labels = None if self.labels is None else self.labels[start:stop]
        return TimeSeries(self.values[start:stop], labels, self.sensor_names)


@dataclass(frozen=True)
class Window:
    values: np.ndarray  # (T, F)
    start_index: int = 0


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _data_lines(text: str):
    # '#' lines are metadata (seed echo etc.) and carry no data
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() and not line.lstrip().startswith("#"):
            yield lineno, line


def load_csv(path: str | Path, has_labels: bool = True) -> TimeSeries:
    """Read a header-first CSV; numeric columns become sensors.

    A column named ``label`` (any case) becomes the label vector when
    ``has_labels`` is set, and is dropped otherwise.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigurationError(f"no such file: {path}") from None
    lines = list(_data_lines(text))
    if not lines:
        raise ParseError(f"{path}: empty file")
    rows = list(csv.reader(io.StringIO("\n".join(line for _, line in lines))))
    header = [h.strip() for h in rows[0]]
    label_cols = [i for i, h in enumerate(header) if h.lower() == "label"]
    if len(label_cols) > 1:
        raise ParseError(f"{path}: more than one label column")
    label_col = label_cols[0] if label_cols else None
    sensor_cols = [i for i in range(len(header)) if i != label_col]
    if not sensor_cols:
        raise ParseError(f"{path}: no sensor columns")
    if len(rows) < 2:
        raise ParseError(f"{path}: no data rows")

    values = np.empty((len(rows) - 1, len(sensor_cols)))
    labels = np.empty(len(rows) - 1, dtype=np.int8) if label_col is not None and has_labels else None
    for r, row in enumerate(rows[1:]):
        lineno = lines[r + 1][0]
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for c, col in enumerate(sensor_cols):
            cell = row[col].strip()
            if not cell:
                raise ParseError(f"{path}:{lineno}: column {header[col]!r}: missing or non-finite value")
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: column {header[col]!r}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}:{lineno}: column {header[col]!r}: missing or non-finite value")
            values[r, c] = v
        if labels is not None:
            cell = row[label_col].strip()
            if cell not in ("0", "1", "0.0", "1.0"):
                raise ParseError(f"{path}:{lineno}: label must be 0 or 1, got {cell!r}")
            labels[r] = int(float(cell))
    return TimeSeries(values, labels, tuple(header[c] for c in sensor_cols))


def format_float(v: float) -> str:
    return f"{v:.9g}"


def save_csv(ts: TimeSeries, path: str | Path, comments: dict[str, object] | None = None) -> None:
    """Write ``ts`` as CSV (9 significant digits), atomically."""
    buf = io.StringIO()
    for k, v in (comments or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = list(ts.sensor_names) + (["label"] if ts.labels is not None else [])
    w.writerow(header)
    for t in range(ts.n):
        row = [format_float(v) for v in ts.values[t]]
        if ts.labels is not None:
            row.append(str(int(ts.labels[t])))
        w.writerow(row)
    write_atomic(path, buf.getvalue())


def write_atomic(path: str | Path, content: str | bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(content, str):
        tmp.write_text(content, encoding="utf-8")
    else:
        tmp.write_bytes(content)
    tmp.replace(path)


# ---------------------------------------------------------------------------
# Windows, splits, normalization
# ---------------------------------------------------------------------------


def window_count(n: int, T: int, stride: int = 1) -> int:
    return (n - T) // stride + 1


def window_array(values: np.ndarray, T: int, stride: int = 1) -> np.ndarray:
    """All windows as a read-only (count, T, F) strided view."""
    n = values.shape[0]
    if T < 1 or stride < 1:
        raise ConfigurationError("window length and stride must be >= 1")
    if T > n:
        raise ConfigurationError(f"window length {T} exceeds series length {n}")
    view = np.lib.stride_tricks.sliding_window_view(values, T, axis=0)  # (n-T+1, F, T)
    return view[::stride].transpose(0, 2, 1)


def make_windows(ts: TimeSeries, T: int, stride: int = 1) -> list[Window]:
    arr = window_array(ts.values, T, stride)
    return [Window(arr[k], k * stride) for k in range(arr.shape[0])]


def split_point(n: int, split_fraction: float) -> int:
    if not 0.0 < split_fraction <= 1.0:
        raise ConfigurationError("split_fraction must be in (0, 1]")
    return max(1, int(math.floor(n * split_fraction)))


def train_region(ts: TimeSeries, split_fraction: float = 0.5) -> TimeSeries:
    """Leading ``split_fraction`` of the series: the (normal) training region."""
    return ts.slice(0, split_point(ts.n, split_fraction))


def train_test_split(ts: TimeSeries, split_fraction: float = 0.5) -> tuple[TimeSeries, TimeSeries]:
    cut = split_point(ts.n, split_fraction)
    if cut >= ts.n:
        raise ConfigurationError(f"split_fraction {split_fraction} leaves no test region in {ts.n} points")
    return ts.slice(0, cut), ts.slice(cut, ts.n)


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray = field(repr=False)

    @classmethod
    def fit(cls, train: TimeSeries) -> "Normalizer":
        v = train.values
        mean = v.mean(axis=0)
        # constant sensors: use the exact value so round-off is not amplified by the floor
        const = np.all(v == v[0], axis=0)
        mean[const] = v[0, const]
        std = np.maximum(v.std(axis=0), STD_FLOOR)
        return cls(mean, std)

    def apply(self, ts: TimeSeries) -> TimeSeries:
        if ts.f != self.mean.shape[0]:
            raise ConfigurationError(f"normalizer fitted on {self.mean.shape[0]} sensors, series has {ts.f}")
        return ts.with_values((ts.values - self.mean) / self.std)

    def invert(self, ts: TimeSeries) -> TimeSeries:
        return ts.with_values(ts.values * self.std + self.mean)


def fit_apply_normalizer(
    train: TimeSeries, others: list[TimeSeries] = ()
) -> tuple[Normalizer, TimeSeries, list[TimeSeries]]:
    """Fit z-score statistics on ``train`` only and apply them to every series."""
    norm = Normalizer.fit(train)
    return norm, norm.apply(train), [norm.apply(o) for o in others]


def compute_baseline(w: Window | np.ndarray) -> np.ndarray:
    """Per-sensor temporal mean of the window, repeated over every row.

    Accepts a single (T, F) window or a batch (B, T, F).
    """
    x = w.values if isinstance(w, Window) else np.asarray(w)
    mean = x.mean(axis=-2, keepdims=True)
    return np.broadcast_to(mean, x.shape).copy()
