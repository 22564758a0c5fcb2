"""``arta`` command line: train, score, eval, corrupt, sweep, stability, masks, synth.

Exit codes: 0 success, 2 usage/config error, 3 numeric failure,
4 metric undefined. Every CSV written starts with ``# seed=<seed>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path

import numpy as np
import torch

from arta import seeding
from arta.corruption import NOISE_KINDS, NoiseSpec, default_grid
from arta.data import TimeSeries, load_csv, save_csv, train_test_split, window_array, write_atomic
from arta.generator import generate_mask
from arta.errors import ArtaError, ConfigurationError, EvaluationError, ParseError
from arta.metrics import DEFAULT_I, DEFAULT_J, DEFAULT_LMAX, METRICS, evaluate
from arta.persistence import load_config, load_model, save_model
from arta.scoring import DEFAULT_STRATEGY, STRATEGIES, score_series
from arta.stability import check_theorem1, estimate_lipschitz
from arta.synthetic import make_fixture
from arta.training import ABLATIONS, TrainConfig, fit

log = logging.getLogger("arta")


def _csv(header: list[str], rows, comments: dict[str, object]) -> str:
    buf = io.StringIO()
    for k, v in comments.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _g(v: float) -> str:
    return f"{v:.9g}"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "seed": args.seed})
    cfg = cfg.with_ablation(args.ablation)
    ts = load_csv(args.data, has_labels=True)
    model, report = fit(cfg, ts)
    save_model(model, args.out)
    report_path = args.report or str(Path(args.out).with_suffix(".report.csv"))
    write_atomic(report_path, report.to_csv(cfg.seed))
    log.info("wrote %s and %s", args.out, report_path)
    return 0


def _read_scores(path: str) -> np.ndarray:
    ts = load_csv(path, has_labels=False)
    if "score" not in ts.sensor_names:
        raise ParseError(f"{path}: no 'score' column")
    return ts.values[:, ts.sensor_names.index("score")]


def cmd_score(args) -> int:
    model = load_model(args.model)
    ts = load_csv(args.data, has_labels=True)
    s = score_series(model, ts, args.strategy).s
    header = ["timestamp", "score"] + (["label"] if ts.labels is not None else [])
    rows = [[t, _g(v)] + ([int(ts.labels[t])] if ts.labels is not None else []) for t, v in enumerate(s)]
    _emit(_csv(header, rows, {"seed": model.config.seed, "strategy": args.strategy}), args.out)
    return 0


def _eval_rows(scores, labels, metrics, I, J, lmax) -> list[list[object]]:
    values = evaluate(scores, labels, metrics, I, J, lmax)
    return [[name, _g(v), I, J, lmax] for name, v in values.items()]


def cmd_eval(args) -> int:
    scores = _read_scores(args.scores)
    labelled = load_csv(args.labels_from, has_labels=True)
    if labelled.labels is None:
        raise ConfigurationError(f"{args.labels_from} has no label column")
    if len(scores) != labelled.n:
        raise ConfigurationError(f"{len(scores)} scores but {labelled.n} labelled rows")
    metrics = args.metric or list(METRICS)
    rows = _eval_rows(scores, labelled.labels, metrics, args.I, args.J, args.lmax)
    text = _csv(["metric", "value", "I", "J", "lmax"], rows, {"seed": args.seed})
    _emit(text, args.out)
    if args.out:
        sys.stdout.write(text)
    return 0


def _noise_spec(kind: str, severity: float, rho: float, seed: int) -> NoiseSpec:
    if kind == "salt_pepper":
        return NoiseSpec(kind, p=severity, seed=seed)
    return NoiseSpec(kind, snr_db=severity, rho=rho, seed=seed)


def cmd_corrupt(args) -> int:
    severity = args.p if args.noise == "salt_pepper" else args.snr
    if severity is None:
        raise ConfigurationError("--p is required for salt_pepper, --snr for gaussian/colored")
    ts = load_csv(args.data, has_labels=True)
    out = _noise_spec(args.noise, severity, args.rho, args.seed).apply(ts)
    save_csv(out, args.out, {"seed": args.seed, "noise": args.noise, "severity": severity})
    return 0


def _parse_grid(text: str | None, kind: str) -> list[float]:
    if not text:
        return list(default_grid(kind))
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"bad --grid {text!r}") from None


def _is_clean(kind: str, severity: float) -> bool:
    return severity == 0.0 if kind == "salt_pepper" else math.isinf(severity) and severity > 0


def sweep(model, ts: TimeSeries, kind: str, grid: list[float], seed: int, rho: float = 0.5, I=DEFAULT_I, J=DEFAULT_J, lmax=DEFAULT_LMAX):
    """(severity, noise seed, VUS-PR, AUC-ROC) per grid point."""
    rows = []
    for k, severity in enumerate(grid):
        noise_seed = int(seeding.stream(seed, "sweep", k).integers(2**31))
        corrupted = ts if _is_clean(kind, severity) else _noise_spec(kind, severity, rho, noise_seed).apply(ts)
        s = score_series(model, corrupted).s
        m = evaluate(s, ts.labels, ("vus_pr", "auc_roc"), I, J, lmax)
        log.info("sweep %s severity=%g seed=%d vus_pr=%.4f auc_roc=%.4f", kind, severity, noise_seed, m["vus_pr"], m["auc_roc"])
        rows.append((severity, noise_seed, m["vus_pr"], m["auc_roc"]))
    return rows


def cmd_sweep(args) -> int:
    model = load_model(args.model)
    ts = load_csv(args.data, has_labels=True)
    if ts.labels is None:
        raise ConfigurationError(f"{args.data} has no label column")
    rows = sweep(model, ts, args.noise, _parse_grid(args.grid, args.noise), args.seed, args.rho, args.I, args.J, args.lmax)
    text = _csv(
        ["severity", "noise_seed", "vus_pr", "auc_roc"],
        [[_g(sv), ns, _g(v), _g(a)] for sv, ns, v, a in rows],
        {"seed": args.seed, "noise": args.noise},
    )
    _emit(text, args.out)
    return 0


def cmd_stability(args) -> int:
    model = load_model(args.model)
    if model.generator is None:
        raise ConfigurationError("stability report needs a model trained with a generator")
    ts = load_csv(args.data, has_labels=False)
    if model.normalizer is not None:
        ts = model.normalizer.apply(ts)
    windows = window_array(ts.values, model.config.window, model.config.window // 2 or 1)
    L_hat = estimate_lipschitz(model.detector, windows, max(100, args.trials), args.eps, args.seed + 1).L_hat
    report = check_theorem1(model.detector, model.generator, windows, args.eps, args.trials, args.seed, L_hat, zero_delta_every=args.zero_every)
    _emit(report.to_csv(args.seed), args.out)
    return 0


def cmd_masks(args) -> int:
    model = load_model(args.model)
    if model.generator is None:
        raise ConfigurationError("mask export needs a model trained with a generator")
    ts = load_csv(args.data, has_labels=False)
    if model.normalizer is not None:
        ts = model.normalizer.apply(ts)
    T = model.config.window
    stride = args.stride or T
    windows = window_array(ts.values.astype(np.float32), T, stride)
    with torch.no_grad():
        masks = generate_mask(model.generator, torch.from_numpy(np.array(windows))).double().numpy()
    header = ["window_start", "timestamp", "mask"] + (["hard"] if args.threshold is not None else [])
    rows = []
    for k, m in enumerate(masks):
        start = k * stride
        for t, v in enumerate(m):
            row = [start, start + t, _g(v)]
            if args.threshold is not None:
                row.append(int(v >= args.threshold))
            rows.append(row)
    _emit(_csv(header, rows, {"seed": model.config.seed}), args.out)
    return 0


def cmd_synth(args) -> int:
    ts, anomalies = make_fixture(n=args.n, n_sensors=args.sensors, n_anomalies=args.anomalies, seed=args.seed, window=args.window)
    save_csv(ts, args.out, {"seed": args.seed, "anomalies": ";".join(f"{a.kind}@{a.start}+{a.length}" for a in anomalies)})
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _metric_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--I", type=int, default=DEFAULT_I, help="number of threshold steps")
    p.add_argument("--J", type=int, default=DEFAULT_J, help="number of tolerance steps")
    p.add_argument("--lmax", type=int, default=DEFAULT_LMAX, help="largest tolerance (timestamps)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arta", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on the leading split of a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="training report CSV (default: <out>.report.csv)")
    p.add_argument("--ablation", choices=ABLATIONS)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score every timestamp of a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, default=DEFAULT_STRATEGY)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="threshold-sweep metrics for a score CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels-from", required=True)
    p.add_argument("--metric", action="append", choices=METRICS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _metric_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("corrupt", help="write a noisy copy of a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--noise", choices=NOISE_KINDS, required=True)
    p.add_argument("--snr", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("sweep", help="metrics across a grid of noise severities")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--noise", choices=NOISE_KINDS, required=True)
    p.add_argument("--grid", help="comma-separated p values or SNRs in dB (inf = clean)")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _metric_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stability", help="empirical masking-stability report")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--zero-every", type=int, default=0, help="use delta=0 on every k-th trial")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("masks", help="export generator masks per window")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--stride", type=int, help="window stride (default: window length)")
    p.add_argument("--threshold", type=float, help="also emit a hard mask (mask >= threshold)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_masks)

    p = sub.add_parser("synth", help="write the synthetic labelled fixture")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--sensors", type=int, default=5)
    p.add_argument("--anomalies", type=int, default=20)
    p.add_argument("--window", type=int, default=100, help="spacing unit for anomalies; match the model window")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ArtaError as e:
        print(f"arta {args.command}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"arta {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
