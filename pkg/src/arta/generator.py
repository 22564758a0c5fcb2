"""LSTM mask generator and the baseline-aware masking operator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from arta.detector import as_batch
from arta.errors import ConfigurationError
from arta.numerics import LstmParams, forward_linear, forward_lstm, uniform_init


@dataclass
class GeneratorParams:
    lstm: LstmParams  # F -> H
    head_w: torch.Tensor  # (T, H)
    head_b: torch.Tensor  # (T,)

    def __post_init__(self) -> None:
        if self.head_w.shape[1] != self.lstm.hidden:
            raise ConfigurationError("generator head must read the LSTM hidden state")
        if tuple(self.head_b.shape) != (self.head_w.shape[0],):
            raise ConfigurationError("generator head bias must have T entries")

    @property
    def window(self) -> int:
        return self.head_w.shape[0]

    @property
    def n_features(self) -> int:
        return self.lstm.in_features

    @classmethod
    def init(cls, n_features: int, hidden: int, window: int, rng: np.random.Generator) -> "GeneratorParams":
        bound = 1.0 / math.sqrt(hidden)
        return cls(
            lstm=LstmParams.init(n_features, hidden, rng),
            head_w=uniform_init(rng, (window, hidden), bound),
            head_b=uniform_init(rng, (window,), bound),
        )

    @classmethod
    def zeros(cls, n_features: int, hidden: int, window: int) -> "GeneratorParams":
        return cls(LstmParams.zeros(n_features, hidden), torch.zeros(window, hidden), torch.zeros(window))

    def tensors(self) -> dict[str, torch.Tensor]:
        out = {f"lstm.{k}": v for k, v in self.lstm.tensors().items()}
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    @classmethod
    def from_tensors(cls, t: dict[str, torch.Tensor]) -> "GeneratorParams":
        return cls(LstmParams(t["lstm.w_ih"], t["lstm.w_hh"], t["lstm.b"]), t["head.w"], t["head.b"])

    def to(self, dtype: torch.dtype) -> "GeneratorParams":
        return GeneratorParams.from_tensors({k: v.to(dtype) for k, v in self.tensors().items()})


def generate_mask(params: GeneratorParams, w) -> torch.Tensor:
    """Soft temporal mask in (0, 1)^T from the final LSTM hidden state."""
    x, single = as_batch(w, params.n_features, params.head_w.dtype)
    if x.shape[1] != params.window:
        raise ConfigurationError(f"window length {x.shape[1]} does not match generator head ({params.window})")
    _, h, _ = forward_lstm(params.lstm, x)
    m = torch.sigmoid(forward_linear(params.head_w, params.head_b, h))
    return m[0] if single else m


def window_baseline(x: torch.Tensor) -> torch.Tensor:
    """Torch counterpart of :func:`arta.data.compute_baseline` for (…, T, F) tensors."""
    return x.mean(dim=-2, keepdim=True).expand_as(x)


def apply_mask(x, m, baseline):
    """x̃[t, f] = m[t]·x[t, f] + (1 − m[t])·b[t, f]; the mask broadcasts over sensors.

    Works on numpy arrays or tensors, single windows (T, F) with mask (T,)
    or batches (B, T, F) with masks (B, T).
    """
    m_col = m[..., None]
    return m_col * x + (1 - m_col) * baseline


def mask_l1(m) -> torch.Tensor | float:
    """Plain sum of mask entries over time (per window for a batch)."""
    if isinstance(m, torch.Tensor):
        return m.double().sum(dim=-1)
    return np.asarray(m, dtype=np.float64).sum(axis=-1)
