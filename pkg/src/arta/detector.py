"""LSTM autoencoder detector: reconstructions, point-wise scores, window score."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from arta.data import Window
from arta.errors import ConfigurationError
from arta.numerics import (
    LstmParams,
    SpectralState,
    estimate_spectral_norm,
    forward_linear,
    forward_lstm,
    loss_mse,
    uniform_init,
)

AGGREGATORS = ("mean", "max")


@dataclass
class DetectorParams:
    encoder: LstmParams  # F -> H
    decoder: LstmParams  # H -> H
    proj_w: torch.Tensor  # (F, H)
    proj_b: torch.Tensor  # (F,)
    spectral: dict[str, SpectralState] = field(default_factory=dict)

    def __post_init__(self) -> None:
        h = self.encoder.hidden
        if self.decoder.in_features != h or self.decoder.hidden != h:
            raise ConfigurationError("decoder must map the latent (H) to H hidden units")
        if tuple(self.proj_w.shape) != (self.encoder.in_features, h):
            raise ConfigurationError(f"projection must be (F, H), got {tuple(self.proj_w.shape)}")
        if tuple(self.proj_b.shape) != (self.encoder.in_features,):
            raise ConfigurationError("projection bias must have F entries")

    @property
    def n_features(self) -> int:
        return self.encoder.in_features

    @property
    def hidden(self) -> int:
        return self.encoder.hidden

    @classmethod
    def init(cls, n_features: int, hidden: int, rng: np.random.Generator, sn_warmup: int = 30) -> "DetectorParams":
        params = cls(
            encoder=LstmParams.init(n_features, hidden, rng),
            decoder=LstmParams.init(hidden, hidden, rng),
            proj_w=uniform_init(rng, (n_features, hidden), 1.0 / math.sqrt(hidden)),
            proj_b=uniform_init(rng, (n_features,), 1.0 / math.sqrt(hidden)),
        )
        tensors = params.tensors()
        for name in params.matrix_names():
            state = SpectralState.init(tensors[name].shape[0], rng)
            estimate_spectral_norm(tensors[name], state, sn_warmup)
            params.spectral[name] = state
        return params

    @classmethod
    def zeros(cls, n_features: int, hidden: int) -> "DetectorParams":
        return cls(
            encoder=LstmParams.zeros(n_features, hidden),
            decoder=LstmParams.zeros(hidden, hidden),
            proj_w=torch.zeros(n_features, hidden),
            proj_b=torch.zeros(n_features),
        )

    def tensors(self) -> dict[str, torch.Tensor]:
        out = {f"encoder.{k}": v for k, v in self.encoder.tensors().items()}
        out.update({f"decoder.{k}": v for k, v in self.decoder.tensors().items()})
        out["proj.w"] = self.proj_w
        out["proj.b"] = self.proj_b
        return out

    @staticmethod
    def matrix_names() -> list[str]:
        # every weight matrix is spectrally normalized; biases are not
        return ["encoder.w_ih", "encoder.w_hh", "decoder.w_ih", "decoder.w_hh", "proj.w"]

    @classmethod
    def from_tensors(cls, t: dict[str, torch.Tensor], spectral: dict[str, SpectralState] | None = None) -> "DetectorParams":
        return cls(
            encoder=LstmParams(t["encoder.w_ih"], t["encoder.w_hh"], t["encoder.b"]),
            decoder=LstmParams(t["decoder.w_ih"], t["decoder.w_hh"], t["decoder.b"]),
            proj_w=t["proj.w"],
            proj_b=t["proj.b"],
            spectral=dict(spectral or {}),
        )

    def to(self, dtype: torch.dtype) -> "DetectorParams":
        return DetectorParams.from_tensors({k: v.to(dtype) for k, v in self.tensors().items()}, self.spectral)


def as_batch(w, n_features: int | None = None, dtype: torch.dtype = torch.float32) -> tuple[torch.Tensor, bool]:
    """Coerce a Window, (T, F) or (B, T, F) array into a (B, T, F) tensor.

    The flag tells callers whether to strip the batch axis again.
    """
    if isinstance(w, Window):
        w = w.values
    x = w if isinstance(w, torch.Tensor) else torch.as_tensor(np.asarray(w))
    x = x.to(dtype)
    single = x.dim() == 2
    if single:
        x = x.unsqueeze(0)
    if x.dim() != 3:
        raise ConfigurationError(f"window must be (T, F) or (B, T, F), got {tuple(x.shape)}")
    if n_features is not None and x.shape[-1] != n_features:
        raise ConfigurationError(f"window has {x.shape[-1]} sensors, detector expects {n_features}")
    return x, single


def _reconstruct(params: DetectorParams, x: torch.Tensor) -> torch.Tensor:
    _, z, _ = forward_lstm(params.encoder, x)  # z: (B, H), final hidden state
    repeated = z.unsqueeze(1).expand(-1, x.shape[1], -1)
    dec, _, _ = forward_lstm(params.decoder, repeated)
    return forward_linear(params.proj_w, params.proj_b, dec)


def reconstruct(params: DetectorParams, w) -> torch.Tensor:
    """Autoencoder output with the same shape as ``w``.

    The encoder's final hidden state is repeated T times as the decoder
    input; the projection maps each decoder state back to F sensors.
    """
    x, single = as_batch(w, params.n_features, params.proj_w.dtype)
    out = _reconstruct(params, x)
    return out[0] if single else out


def pointwise_scores(params: DetectorParams, w) -> torch.Tensor:
    """a_t = mean over sensors of the squared reconstruction residual."""
    x, single = as_batch(w, params.n_features, params.proj_w.dtype)
    a = (x.double() - _reconstruct(params, x).double()).square().mean(dim=-1)
    return a[0] if single else a


def aggregate(a: torch.Tensor, aggregator: str = "mean") -> torch.Tensor:
    if aggregator == "mean":
        return a.mean(dim=-1)
    if aggregator == "max":
        return a.max(dim=-1).values
    raise ConfigurationError(f"unknown aggregator {aggregator!r}; expected one of {AGGREGATORS}")


def anomaly_score(params: DetectorParams, w, aggregator: str = "mean") -> torch.Tensor:
    """Aggregated window score(s). With ``mean`` this is loss_mse(w, reconstruct(w))."""
    x, single = as_batch(w, params.n_features, params.proj_w.dtype)
    if aggregator == "mean":
        recon = _reconstruct(params, x)
        s = torch.stack([loss_mse(x[i], recon[i]) for i in range(x.shape[0])]) if not single else loss_mse(x[0], recon[0])
        return s
    a = pointwise_scores(params, x)
    s = aggregate(a, aggregator)
    return s[0] if single else s


def window_scores(params: DetectorParams, windows: torch.Tensor, batch_size: int = 512) -> np.ndarray:
    """Mean-aggregated scores for a stack of windows, without building a graph."""
    out = []
    with torch.no_grad():
        for i in range(0, windows.shape[0], batch_size):
            x = windows[i : i + batch_size]
            recon = _reconstruct(params, x)
            out.append((x.double() - recon.double()).square().mean(dim=(1, 2)).numpy())
    return np.concatenate(out) if out else np.zeros(0)
