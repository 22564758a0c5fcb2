"""Numeric substrate: LSTM / linear primitives, MSE, gradients, Adam, spectral norm.

Tensors are ``torch.Tensor`` (float32 for parameters and activations).
Reductions that feed losses and norms are accumulated in float64.
Reverse-mode differentiation is delegated to torch autograd; the finite
difference checker in :func:`check_gradients` is independent of it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import torch
from torch.func import functional_call

from arta.errors import ConfigurationError, NumericError

DTYPE = torch.float32

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigurationError(msg)


def as_tensor(x, dtype: torch.dtype = DTYPE) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], bound: float) -> torch.Tensor:
    return torch.from_numpy(rng.uniform(-bound, bound, size=shape).astype(np.float32))


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------


@dataclass
class LstmParams:
    """Single-layer LSTM weights, gate order input/forget/cell/output."""

    w_ih: torch.Tensor  # (4H, F_in)
    w_hh: torch.Tensor  # (4H, H)
    b: torch.Tensor  # (4H,)

    def __post_init__(self) -> None:
        four_h = self.w_hh.shape[0]
        _check(four_h % 4 == 0, f"w_hh rows must be 4H, got {four_h}")
        h = four_h // 4
        _check(tuple(self.w_hh.shape) == (4 * h, h), f"w_hh must be (4H, H), got {tuple(self.w_hh.shape)}")
        _check(self.w_ih.dim() == 2 and self.w_ih.shape[0] == 4 * h, f"w_ih must be (4H, F_in), got {tuple(self.w_ih.shape)}")
        _check(tuple(self.b.shape) == (4 * h,), f"b must be (4H,), got {tuple(self.b.shape)}")

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]

    @property
    def in_features(self) -> int:
        return self.w_ih.shape[1]

    @classmethod
    def init(cls, in_features: int, hidden: int, rng: np.random.Generator) -> "LstmParams":
        bound = 1.0 / math.sqrt(hidden)
        return cls(
            w_ih=uniform_init(rng, (4 * hidden, in_features), bound),
            w_hh=uniform_init(rng, (4 * hidden, hidden), bound),
            b=uniform_init(rng, (4 * hidden,), bound),
        )

    @classmethod
    def zeros(cls, in_features: int, hidden: int) -> "LstmParams":
        return cls(
            w_ih=torch.zeros(4 * hidden, in_features),
            w_hh=torch.zeros(4 * hidden, hidden),
            b=torch.zeros(4 * hidden),
        )

    def tensors(self) -> dict[str, torch.Tensor]:
        return {"w_ih": self.w_ih, "w_hh": self.w_hh, "b": self.b}


_LSTM_TEMPLATES: dict[tuple[int, int], torch.nn.LSTM] = {}


def _template(in_features: int, hidden: int) -> torch.nn.LSTM:
    key = (in_features, hidden)
    if key not in _LSTM_TEMPLATES:
        _LSTM_TEMPLATES[key] = torch.nn.LSTM(in_features, hidden, batch_first=True)
    return _LSTM_TEMPLATES[key]


def lstm_cell(
    params: LstmParams, x: torch.Tensor, h: torch.Tensor, c: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """One explicit recurrence step (used for small cases and as a cross-check)."""
    gates = x @ params.w_ih.T + h @ params.w_hh.T + params.b
    i, f, g, o = gates.chunk(4, dim=-1)
    c_new = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
    h_new = torch.sigmoid(o) * torch.tanh(c_new)
    return h_new, c_new


def forward_lstm(
    params: LstmParams,
    inputs: torch.Tensor,
    h0: torch.Tensor | None = None,
    c0: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Run the LSTM over ``inputs`` of shape (T, F_in) or (B, T, F_in).

    Returns ``(hidden_seq, hT, cT)`` with hidden_seq shaped like the input
    but with H features. Missing initial states default to zeros.
    """
    unbatched = inputs.dim() == 2
    _check(inputs.dim() in (2, 3), f"inputs must be (T, F) or (B, T, F), got {tuple(inputs.shape)}")
    x = inputs.unsqueeze(0) if unbatched else inputs
    _check(x.shape[1] >= 1, "sequence length must be >= 1")
    _check(
        x.shape[2] == params.in_features,
        f"input features {x.shape[2]} do not match LSTM input size {params.in_features}",
    )
    batch, hidden = x.shape[0], params.hidden
    dtype = params.w_ih.dtype
    x = x.to(dtype)

    def _state(s: torch.Tensor | None) -> torch.Tensor:
        if s is None:
            return torch.zeros(1, batch, hidden, dtype=dtype)
        _check(s.shape[-1] == hidden, f"initial state must have {hidden} features")
        return s.to(dtype).reshape(1, -1, hidden).expand(1, batch, hidden).contiguous()

    weights = {
        "weight_ih_l0": params.w_ih,
        "weight_hh_l0": params.w_hh,
        "bias_ih_l0": params.b,
        "bias_hh_l0": torch.zeros_like(params.b),
    }
    with warnings.catch_warnings():
        # weights are not one flattened buffer; the kernel copes, but warns
        warnings.simplefilter("ignore", UserWarning)
        seq, (h_n, c_n) = functional_call(
            _template(params.in_features, hidden), weights, (x, (_state(h0), _state(c0)))
        )
    h_n, c_n = h_n[0], c_n[0]
    if unbatched:
        return seq[0], h_n[0], c_n[0]
    return seq, h_n, c_n


# ---------------------------------------------------------------------------
# Linear / losses
# ---------------------------------------------------------------------------


def forward_linear(W: torch.Tensor, b: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """y = W x + b, applied over the last axis of ``x``."""
    _check(W.dim() == 2, f"W must be a matrix, got shape {tuple(W.shape)}")
    _check(tuple(b.shape) == (W.shape[0],), f"bias shape {tuple(b.shape)} does not match W rows {W.shape[0]}")
    _check(x.shape[-1] == W.shape[1], f"input size {x.shape[-1]} does not match W columns {W.shape[1]}")
    return x.to(W.dtype) @ W.T + b


def loss_mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean squared difference over all elements, accumulated in float64."""
    _check(tuple(a.shape) == tuple(b.shape), f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a.double() - b.double()).square().mean()


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def compute_gradients(
    loss: torch.Tensor, params: Mapping[str, torch.Tensor], label: str = "loss"
) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of a scalar ``loss`` w.r.t. each named parameter."""
    if not bool(torch.isfinite(loss)):
        raise NumericError(f"{label} is not finite ({float(loss.detach())})")
    names = list(params)
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    out = {}
    for name, g in zip(names, grads):
        if g is None:
            g = torch.zeros_like(params[name])
        elif not bool(torch.isfinite(g).all()):
            raise NumericError(f"non-finite gradient for {name} in {label}")
        out[name] = g
    return out


def check_gradients(
    loss_fn: Callable[[Mapping[str, torch.Tensor]], torch.Tensor],
    params: Mapping[str, torch.Tensor],
    step: float = 1e-3,
    n_coords: int = 50,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central differences.

    ``n_coords`` coordinates are sampled (without replacement) from the
    concatenation of all parameters; all coordinates are used if fewer
    exist. Run it on float64 parameters: at float32 the difference
    quotient itself is noisier than the tolerances callers care about.
    """
    if step <= 0:
        raise ConfigurationError("step must be positive")
    leaves = {k: v.detach().clone().requires_grad_(True) for k, v in params.items()}
    analytic = compute_gradients(loss_fn(leaves), leaves, label="check_gradients")

    index = [(name, i) for name, v in leaves.items() for i in range(v.numel())]
    rng = np.random.default_rng(seed)
    if len(index) > n_coords:
        picks = rng.choice(len(index), size=n_coords, replace=False)
        index = [index[p] for p in sorted(picks)]

    worst = 0.0
    with torch.no_grad():
        for name, i in index:
            flat = leaves[name].view(-1)
            orig = flat[i].item()
            flat[i] = orig + step
            up = float(loss_fn(leaves))
            flat[i] = orig - step
            down = float(loss_fn(leaves))
            flat[i] = orig
            fd = (up - down) / (2.0 * step)
            an = float(analytic[name].view(-1)[i])
            worst = max(worst, abs(an - fd) / (abs(an) + abs(fd) + 1e-8))
    return worst


# ---------------------------------------------------------------------------
# Spectral normalization
# ---------------------------------------------------------------------------


@dataclass
class SpectralState:
    """Persistent left-singular-vector estimate for one weight matrix."""

    u: torch.Tensor  # (O,), float64, unit norm
    iterations: int = 0

    @classmethod
    def init(cls, rows: int, rng: np.random.Generator) -> "SpectralState":
        u = torch.from_numpy(rng.standard_normal(rows))
        return cls(u=u / u.norm())


def estimate_spectral_norm(W: torch.Tensor, state: SpectralState, iters: int = 1) -> float:
    """Power-iteration estimate of the largest singular value of ``W``.

    ``state.u`` is refined in place. A zero matrix returns 0 and leaves the
    state untouched.
    """
    if iters < 1:
        raise ConfigurationError("iters must be >= 1")
    Wd = W.detach().double()
    _check(Wd.dim() == 2 and Wd.shape[0] == state.u.shape[0], "spectral state does not match matrix rows")
    if not bool(Wd.abs().max() > 0):
        return 0.0
    u = state.u
    sigma = 0.0
    for _ in range(iters):
        v = Wd.T @ u
        v = v / v.norm().clamp_min(1e-300)
        wv = Wd @ v
        norm = float(wv.norm())
        if norm == 0.0:
            # u orthogonal to the range of W; restart along a column of W
            u = Wd[:, int(Wd.abs().sum(0).argmax())].clone()
            u = u / u.norm()
            continue
        u = wv / norm
        sigma = norm
    state.u = u
    state.iterations += iters
    return sigma


def apply_spectral_normalization(
    params: Mapping[str, torch.Tensor],
    states: Mapping[str, SpectralState],
    iters: int = 1,
) -> dict[str, float]:
    """Divide every matrix named in ``states`` by its spectral-norm estimate, in place.

    Returns the estimates used. Matrices with an estimate below 1e-12 are
    left as they are.
    """
    sigmas = {}
    with torch.no_grad():
        for name, state in states.items():
            W = params[name]
            sigma = estimate_spectral_norm(W, state, iters)
            sigmas[name] = sigma
            if sigma >= 1e-12:
                W.div_(sigma)
    return sigmas


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS


def adam_update(
    params: Mapping[str, torch.Tensor],
    grads: Mapping[str, torch.Tensor],
    state: AdamState,
    lr: float,
) -> Mapping[str, torch.Tensor]:
    """One bias-corrected Adam step, applied in place to ``params``."""
    if lr <= 0:
        raise ConfigurationError("lr must be positive")
    for name, g in grads.items():
        _check(tuple(g.shape) == tuple(params[name].shape), f"gradient shape mismatch for {name}")
        if not bool(torch.isfinite(g).all()):
            raise NumericError(f"non-finite gradient for {name}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    with torch.no_grad():
        for name, g in grads.items():
            p = params[name]
            if name not in state.m:
                state.m[name] = torch.zeros_like(p)
                state.v[name] = torch.zeros_like(p)
            m, v = state.m[name], state.v[name]
            m.mul_(state.beta1).add_(g, alpha=1.0 - state.beta1)
            v.mul_(state.beta2).addcmul_(g, g, value=1.0 - state.beta2)
            denom = (v / bc2).sqrt_().add_(state.eps)
            p.addcdiv_(m, denom, value=-lr / bc1)
    return params
