"""Two-stage training: detector warm-up, then alternating generator/detector updates.

Per joint batch the generator takes one Adam step on

    L_G = -err(x, D(x̃)) + λ·mean‖m‖₁

with the detector frozen, then the detector takes one Adam step on

    L_D = err(x, D(x)) + γ·err(x, D(x̃))

with x̃ rebuilt from a fresh mask of the just-updated generator. ``err``
is the reconstruction error against the clean window. Detector weight
matrices are spectrally normalized after every detector update.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch

from arta import seeding
from arta.data import Normalizer, TimeSeries, fit_apply_normalizer, train_region, window_array
from arta.detector import DetectorParams, aggregate, reconstruct
from arta.errors import ConfigurationError
from arta.generator import GeneratorParams, apply_mask, generate_mask, mask_l1, window_baseline
from arta.numerics import AdamState, adam_update, apply_spectral_normalization, check_gradients, compute_gradients, loss_mse

log = logging.getLogger(__name__)

ABLATIONS = ("no_generator", "no_adversarial", "no_sparsity", "no_baseline")


@dataclass
class TrainConfig:
    window: int = 100
    hidden: int = 64
    warmup_epochs: int = 10
    joint_epochs: int = 100
    lambda_sp: float = 0.01
    gamma_rob: float = 0.1
    lr: float = 1e-4
    batch: int = 32
    seed: int = 0
    aggregator: str = "mean"
    stride: int = 1
    split_fraction: float = 0.5
    sn_iters: int = 1
    grad_check: bool = True
    no_generator: bool = False
    no_adversarial: bool = False
    no_sparsity: bool = False
    no_baseline: bool = False

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.lambda_sp < 0 or self.gamma_rob < 0:
            raise ConfigurationError("lambda_sp and gamma_rob must be >= 0")
        if self.warmup_epochs < 0 or self.joint_epochs < 0:
            raise ConfigurationError("epoch counts must be >= 0")
        if self.batch < 1 or self.window < 1 or self.hidden < 1 or self.stride < 1 or self.sn_iters < 1:
            raise ConfigurationError("batch, window, hidden, stride and sn_iters must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.aggregator not in ("mean", "max"):
            raise ConfigurationError(f"aggregator must be mean or max, got {self.aggregator!r}")
        if not 0.0 < self.split_fraction <= 1.0:
            raise ConfigurationError("split_fraction must be in (0, 1]")

    @property
    def effective_lambda(self) -> float:
        return 0.0 if self.no_sparsity else self.lambda_sp

    def with_ablation(self, name: str | None) -> "TrainConfig":
        if not name:
            return self
        if name not in ABLATIONS:
            raise ConfigurationError(f"unknown ablation {name!r}; expected one of {ABLATIONS}")
        return TrainConfig(**{**asdict(self), name: True})

    def echo(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class EpochRecord:
    epoch: int
    phase: str  # "warmup" or "joint"
    loss_d: float
    loss_g: float = math.nan
    mask_l1_mean: float = math.nan
    clean_mse: float = math.nan
    adv_mse: float = math.nan


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    grad_checks: list[tuple[str, float]] = field(default_factory=list)

    COLUMNS = ("epoch", "phase", "L_D", "L_G", "mask_l1_mean", "clean_mse", "adv_mse")

    def to_csv(self, seed: int | None = None) -> str:
        buf = io.StringIO()
        if seed is not None:
            buf.write(f"# seed={seed}\n")
        for name, err in self.grad_checks:
            buf.write(f"# grad_check {name} max_rel_err={err:.3e}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.epochs:
            vals = [r.loss_d, r.loss_g, r.mask_l1_mean, r.clean_mse, r.adv_mse]
            w.writerow([r.epoch, r.phase] + ["" if math.isnan(v) else f"{v:.9g}" for v in vals])
        return buf.getvalue()


@dataclass
class ArtaModel:
    config: TrainConfig
    detector: DetectorParams
    generator: GeneratorParams | None = None
    normalizer: Normalizer | None = None

    @property
    def has_generator(self) -> bool:
        return self.generator is not None


# ---------------------------------------------------------------------------
# Losses and single steps
# ---------------------------------------------------------------------------


def reconstruction_error(target: torch.Tensor, recon: torch.Tensor, aggregator: str = "mean") -> torch.Tensor:
    """Batch mean of the aggregated window error (plain MSE for ``mean``)."""
    if aggregator == "mean":
        return loss_mse(target, recon)
    a = (target.double() - recon.double()).square().mean(dim=-1)
    return aggregate(a, aggregator).mean()


def _baseline(x: torch.Tensor, cfg: TrainConfig) -> torch.Tensor:
    return torch.zeros_like(x) if cfg.no_baseline else window_baseline(x)


def masked_input(generator: GeneratorParams, x: torch.Tensor, cfg: TrainConfig) -> tuple[torch.Tensor, torch.Tensor]:
    m = generate_mask(generator, x)
    return apply_mask(x, m, _baseline(x, cfg)), m


def generator_loss(cfg: TrainConfig, detector: DetectorParams, generator: GeneratorParams, x: torch.Tensor):
    x_tilde, m = masked_input(generator, x, cfg)
    adv = reconstruction_error(x, reconstruct(detector, x_tilde), cfg.aggregator)
    l1 = mask_l1(m).mean()
    return -adv + cfg.effective_lambda * l1, adv, l1


def detector_loss(cfg: TrainConfig, detector: DetectorParams, x: torch.Tensor, x_tilde: torch.Tensor | None):
    if x_tilde is None:
        clean = reconstruction_error(x, reconstruct(detector, x), cfg.aggregator)
        return clean, clean, None
    recon = reconstruct(detector, torch.cat([x, x_tilde]))
    b = x.shape[0]
    clean = reconstruction_error(x, recon[:b], cfg.aggregator)
    adv = reconstruction_error(x, recon[b:], cfg.aggregator)
    return clean + cfg.gamma_rob * adv, clean, adv


def generator_step(
    cfg: TrainConfig,
    detector: DetectorParams,
    generator: GeneratorParams,
    adam: AdamState,
    batch: torch.Tensor,
) -> tuple[float, float, float]:
    """One Adam step on the generator; returns (L_G, err(x, D(x̃)), mean ‖m‖₁)."""
    if cfg.no_generator:
        raise ConfigurationError("generator_step called with the no_generator ablation")
    params = generator.tensors()
    _leafify(params)
    loss, adv, l1 = generator_loss(cfg, detector, generator, batch)
    grads = compute_gradients(loss, params, label="L_G")
    adam_update(params, grads, adam, cfg.lr)
    return float(loss.detach()), float(adv.detach()), float(l1.detach())


def detector_step(
    cfg: TrainConfig,
    detector: DetectorParams,
    generator: GeneratorParams | None,
    adam: AdamState,
    batch: torch.Tensor,
) -> tuple[float, float, float, float]:
    """One Adam step on the detector, then spectral normalization.

    Returns (L_D, clean error, masked error, mean ‖m‖₁); the last two are
    NaN without a generator.
    """
    x_tilde, l1 = None, math.nan
    if generator is not None:
        with torch.no_grad():
            x_tilde, m = masked_input(generator, batch, cfg)
            l1 = float(mask_l1(m).mean())
    params = detector.tensors()
    _leafify(params)
    loss, clean, adv = detector_loss(cfg, detector, batch, x_tilde)
    grads = compute_gradients(loss, params, label="L_D")
    adam_update(params, grads, adam, cfg.lr)
    apply_spectral_normalization(params, detector.spectral, cfg.sn_iters)
    return float(loss.detach()), float(clean.detach()), math.nan if adv is None else float(adv.detach()), l1


# ---------------------------------------------------------------------------
# Loops
# ---------------------------------------------------------------------------


def _as_windows(windows) -> torch.Tensor:
    x = windows if isinstance(windows, torch.Tensor) else torch.from_numpy(np.array(windows))
    x = x.to(torch.float32)
    if x.dim() != 3 or x.shape[0] == 0:
        raise ConfigurationError("training needs a non-empty (n, T, F) window stack")
    return x


def _batches(n: int, cfg: TrainConfig, tag: str, epoch: int):
    order = seeding.stream(cfg.seed, tag, epoch).permutation(n)
    for i in range(0, n, cfg.batch):
        yield order[i : i + cfg.batch]


def _leafify(tensors: dict[str, torch.Tensor]) -> None:
    for t in tensors.values():
        t.requires_grad_(True)


def _spot_check(name: str, loss_fn, tensors: dict[str, torch.Tensor], seed: int) -> float:
    params64 = {k: v.detach().double() for k, v in tensors.items()}
    return check_gradients(loss_fn, params64, step=1e-3, n_coords=50, seed=seed)


def warmup(
    cfg: TrainConfig,
    detector: DetectorParams,
    windows,
    adam: AdamState | None = None,
    report: TrainReport | None = None,
) -> DetectorParams:
    """Detector-only reconstruction training for ``cfg.warmup_epochs`` epochs."""
    x_all = _as_windows(windows)
    adam = adam if adam is not None else AdamState()
    _leafify(detector.tensors())
    for epoch in range(cfg.warmup_epochs):
        losses = []
        for idx in _batches(x_all.shape[0], cfg, "warmup-shuffle", epoch):
            loss, _, _, _ = detector_step(cfg, detector, None, adam, x_all[idx])
            losses.append(loss)
        rec = EpochRecord(epoch=epoch, phase="warmup", loss_d=float(np.mean(losses)), clean_mse=float(np.mean(losses)))
        log.info("warmup epoch %d  L_D=%.6g", epoch, rec.loss_d)
        if report is not None:
            report.epochs.append(rec)
    return detector


def init_model(cfg: TrainConfig, n_features: int) -> ArtaModel:
    detector = DetectorParams.init(n_features, cfg.hidden, seeding.stream(cfg.seed, "init-detector"))
    generator = None
    if not cfg.no_generator:
        generator = GeneratorParams.init(n_features, cfg.hidden, cfg.window, seeding.stream(cfg.seed, "init-generator"))
    return ArtaModel(cfg, detector, generator)


def joint_train(cfg: TrainConfig, windows, model: ArtaModel | None = None) -> tuple[ArtaModel, TrainReport]:
    """Warm-up followed by ``cfg.joint_epochs`` epochs of alternating updates.

    Ablations: ``no_generator`` trains the plain autoencoder for the joint
    epochs too; ``no_adversarial`` never updates the generator but still
    feeds its (initial) masks to the detector; ``no_sparsity`` zeroes λ;
    ``no_baseline`` masks towards zero instead of the window mean.
    """
    x_all = _as_windows(windows)
    if x_all.shape[1] != cfg.window:
        raise ConfigurationError(f"windows have length {x_all.shape[1]}, config says {cfg.window}")
    model = model if model is not None else init_model(cfg, x_all.shape[2])
    det, gen = model.detector, model.generator
    report = TrainReport()
    det_adam, gen_adam = AdamState(), AdamState()
    _leafify(det.tensors())
    if gen is not None:
        _leafify(gen.tensors())

    if cfg.grad_check:
        probe = x_all[:2].double()
        report.grad_checks.append((
            "L_rec",
            _spot_check("L_rec", lambda p: detector_loss(cfg, DetectorParams.from_tensors(p), probe, None)[0], det.tensors(), cfg.seed),
        ))
    warmup(cfg, det, x_all, det_adam, report)

    if gen is not None and cfg.grad_check and cfg.joint_epochs > 0:
        probe = x_all[:2].double()
        g64 = gen.to(torch.float64)
        d64 = det.to(torch.float64)
        report.grad_checks.append((
            "L_G",
            _spot_check("L_G", lambda p: generator_loss(cfg, d64, GeneratorParams.from_tensors(p), probe)[0], g64.tensors(), cfg.seed),
        ))
        with torch.no_grad():
            xt, _ = masked_input(g64, probe, cfg)
        report.grad_checks.append((
            "L_D",
            _spot_check("L_D", lambda p: detector_loss(cfg, DetectorParams.from_tensors(p), probe, xt)[0], d64.tensors(), cfg.seed),
        ))

    lam = cfg.effective_lambda
    for epoch in range(cfg.joint_epochs):
        ld, lg, l1s, cl, adv_s = [], [], [], [], []
        for idx in _batches(x_all.shape[0], cfg, "joint-shuffle", epoch):
            x = x_all[idx]
            if gen is not None and not cfg.no_adversarial:
                g_loss, _, _ = generator_step(cfg, det, gen, gen_adam, x)
            loss_d, clean, adv, l1 = detector_step(cfg, det, gen, det_adam, x)
            if gen is not None and cfg.no_adversarial:
                # static generator: report the loss it would see, without updating it
                g_loss = -adv + lam * l1
            ld.append(loss_d)
            cl.append(clean)
            if gen is not None:
                lg.append(g_loss)
                l1s.append(l1)
                adv_s.append(adv)
        rec = EpochRecord(
            epoch=cfg.warmup_epochs + epoch,
            phase="joint",
            loss_d=float(np.mean(ld)),
            loss_g=float(np.mean(lg)) if lg else math.nan,
            mask_l1_mean=float(np.mean(l1s)) if l1s else math.nan,
            clean_mse=float(np.mean(cl)),
            adv_mse=float(np.mean(adv_s)) if adv_s else math.nan,
        )
        log.info("joint epoch %d  L_D=%.6g  L_G=%.6g  |m|=%.4g", rec.epoch, rec.loss_d, rec.loss_g, rec.mask_l1_mean)
        report.epochs.append(rec)
    return model, report


def fit(cfg: TrainConfig, ts: TimeSeries) -> tuple[ArtaModel, TrainReport]:
    """Split, normalize on the training region, window it and train.

    Labels in the training region are ignored.
    """
    train = train_region(ts, cfg.split_fraction)
    normalizer, train_n, _ = fit_apply_normalizer(train)
    if train_n.n < cfg.window:
        raise ConfigurationError(f"training region has {train_n.n} points, fewer than the window length {cfg.window}")
    windows = window_array(train_n.values.astype(np.float32), cfg.window, cfg.stride)
    model, report = joint_train(cfg, windows)
    model.normalizer = normalizer
    return model, report
