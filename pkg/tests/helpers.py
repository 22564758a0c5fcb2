import numpy as np

from arta.data import TimeSeries
from arta.training import TrainConfig

TOY = dict(window=20, hidden=8, warmup_epochs=1, joint_epochs=2, batch=16, stride=5, lr=1e-3)


def toy_config(**kw) -> TrainConfig:
    return TrainConfig(**{**TOY, **kw})


def toy_series(n=400, f=3, seed=0) -> TimeSeries:
    rng = np.random.default_rng(seed)
    t = np.arange(n)[:, None]
    v = np.sin(2 * np.pi * t / (15 + 4 * np.arange(f))) + 0.1 * rng.standard_normal((n, f))
    y = np.zeros(n, dtype=int)
    v[300, 0] += 5
    y[300] = 1
    return TimeSeries(v, y)
