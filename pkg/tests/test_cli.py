import numpy as np
import pytest

from arta.cli import main, sweep
from arta.data import load_csv, save_csv
from arta.persistence import load_model
from helpers import TOY, toy_series


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    save_csv(toy_series(), d / "data.csv", {"seed": 0})
    (d / "toy.cfg").write_text("".join(f"{k}={v}\n" for k, v in TOY.items()) + "grad_check=false\n")
    assert main(["train", "--data", str(d / "data.csv"), "--config", str(d / "toy.cfg"), "--out", str(d / "m.bin")]) == 0
    return d


def test_train_writes_model_and_report(workdir):
    assert (workdir / "m.bin").exists()
    report = (workdir / "m.report.csv").read_text()
    assert report.startswith("# seed=0\n")
    assert load_model(workdir / "m.bin").config.window == 20


def test_score_and_eval(workdir, capsys):
    assert main(["score", "--model", str(workdir / "m.bin"), "--data", str(workdir / "data.csv"), "--out", str(workdir / "s.csv")]) == 0
    lines = (workdir / "s.csv").read_text().splitlines()
    assert lines[0].startswith("# seed=") and "timestamp,score,label" in lines
    assert main(["eval", "--scores", str(workdir / "s.csv"), "--labels-from", str(workdir / "data.csv"), "--metric", "vus_pr", "--metric", "auc_roc"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# seed=0\n") and "metric,value,I,J,lmax" in out
    assert "vus_pr," in out and "auc_roc," in out


def test_mask_strategy(workdir):
    assert main(["score", "--model", str(workdir / "m.bin"), "--data", str(workdir / "data.csv"), "--strategy", "sensitivity_gap", "--out", str(workdir / "g.csv")]) == 0


def test_corrupt(workdir):
    out = workdir / "noisy.csv"
    assert main(["corrupt", "--data", str(workdir / "data.csv"), "--noise", "colored", "--snr", "10", "--seed", "3", "--out", str(out)]) == 0
    a, b = load_csv(workdir / "data.csv"), load_csv(out)
    assert a.values.shape == b.values.shape and not np.array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert main(["corrupt", "--data", str(workdir / "data.csv"), "--noise", "salt_pepper", "--out", str(out)]) == 2


def test_sweep(workdir):
    assert main(["sweep", "--model", str(workdir / "m.bin"), "--data", str(workdir / "data.csv"), "--noise", "gaussian", "--grid", "inf,20,10", "--out", str(workdir / "sw.csv")]) == 0
    text = (workdir / "sw.csv").read_text().splitlines()
    assert text[0] == "# seed=0" and text[2] == "severity,noise_seed,vus_pr,auc_roc" and len(text) == 6


def test_sweep_seeds_are_fresh_per_point(workdir):
    model, ts = load_model(workdir / "m.bin"), load_csv(workdir / "data.csv")
    rows = sweep(model, ts, "salt_pepper", [0.0, 0.1, 0.1], seed=1)
    assert len({r[1] for r in rows}) == 3


def test_stability(workdir):
    assert main(["stability", "--model", str(workdir / "m.bin"), "--data", str(workdir / "data.csv"), "--trials", "50", "--zero-every", "10", "--out", str(workdir / "st.csv")]) == 0
    text = (workdir / "st.csv").read_text()
    assert text.startswith("# seed=0\n") and "violation_rate" in text


def test_synth(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "f.csv")]) == 0
    ts = load_csv(tmp_path / "f.csv")
    assert ts.values.shape == (5000, 5) and ts.labels.sum() > 0
    assert ts.labels[:2500].sum() == 0
    assert main(["synth", "--out", str(tmp_path / "g.csv"), "--n", "600"]) == 2
    assert main(["synth", "--out", str(tmp_path / "h.csv"), "--n", "600", "--anomalies", "4", "--window", "20"]) == 0
    assert load_csv(tmp_path / "h.csv").labels.sum() == 2 * (1 + 20)


def test_error_exit_codes(workdir, tmp_path, capsys):
    assert main(["score", "--model", str(tmp_path / "none.bin"), "--data", str(workdir / "data.csv")]) == 2
    (tmp_path / "bad.csv").write_text("a,b\n1,x\n")
    assert main(["corrupt", "--data", str(tmp_path / "bad.csv"), "--noise", "gaussian", "--snr", "10", "--out", str(tmp_path / "o.csv")]) == 2
    assert "bad.csv:2" in capsys.readouterr().err
    flat = tmp_path / "flat.csv"
    flat.write_text("score\n" + "0.5\n" * 10)
    lab = tmp_path / "lab.csv"
    lab.write_text("a,label\n" + "1,0\n" * 10)
    assert main(["eval", "--scores", str(flat), "--labels-from", str(lab)]) == 4
    with pytest.raises(SystemExit):
        main(["train"])


DATA = __import__("pathlib").Path(__file__).parent / "data"


def test_eval_matches_oracle_on_bundled_fixture(tmp_path, capsys):
    from test_metrics import oracle_vus

    path = DATA / "scores_200.csv"
    ts = load_csv(path)
    assert main(["eval", "--scores", str(path), "--labels-from", str(path), "--metric", "vus_pr", "--metric", "vus_roc", "--I", "20", "--J", "4", "--lmax", "20", "--out", str(tmp_path / "e.csv")]) == 0
    rows = {r.split(",")[0]: float(r.split(",")[1]) for r in (tmp_path / "e.csv").read_text().splitlines()[2:]}
    s, y = list(ts.values[:, 0]), list(ts.labels)
    assert rows["vus_pr"] == pytest.approx(oracle_vus(s, y, "pr", 20, 4, 20)[1], abs=1e-8)
    assert rows["vus_roc"] == pytest.approx(oracle_vus(s, y, "roc", 20, 4, 20)[1], abs=1e-8)


def test_eval_perfect_scores(tmp_path, capsys):
    y = np.zeros(100, dtype=int)
    y[40:45] = 1
    p = tmp_path / "p.csv"
    p.write_text("score,label\n" + "".join(f"{v},{v}\n" for v in y))
    assert main(["eval", "--scores", str(p), "--labels-from", str(p), "--metric", "vus_pr", "--out", str(tmp_path / "o.csv")]) == 0
    row = [r for r in (tmp_path / "o.csv").read_text().splitlines() if r.startswith("vus_pr,")][0]
    assert float(row.split(",")[1]) >= 1 - 1 / 50


def test_no_generator_report_and_strategy_mismatch(workdir, tmp_path):
    out = tmp_path / "ng.bin"
    assert main(["train", "--data", str(workdir / "data.csv"), "--config", str(workdir / "toy.cfg"), "--ablation", "no_generator", "--out", str(out)]) == 0
    rows = (tmp_path / "ng.report.csv").read_text().splitlines()
    header = next(i for i, r in enumerate(rows) if r.startswith("epoch,"))
    assert all(r.split(",")[3] == "" for r in rows[header + 1 :])
    assert main(["score", "--model", str(out), "--data", str(workdir / "data.csv"), "--strategy", "mask_weighted"]) == 2
    assert main(["masks", "--model", str(out), "--data", str(workdir / "data.csv")]) == 2


def test_bad_config_key_names_key(workdir, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("windw=20\n")
    assert main(["train", "--data", str(workdir / "data.csv"), "--config", str(cfg), "--out", str(tmp_path / "m.bin")]) == 2
    assert "windw" in capsys.readouterr().err
    assert main(["train", "--data", str(tmp_path / "nothing.csv"), "--out", str(tmp_path / "m.bin")]) == 2


def test_training_series_scores_lower_than_noisy_copy(workdir):
    from arta.corruption import add_colored
    from arta.scoring import score_series

    model, ts = load_model(workdir / "m.bin"), load_csv(workdir / "data.csv")
    train = ts.slice(0, ts.n // 2)
    assert score_series(model, train).s.mean() < score_series(model, add_colored(train, 10.0, seed=1)).s.mean()


def test_sweep_clean_point_equals_eval_and_row_count(workdir):
    from arta.metrics import evaluate
    from arta.scoring import score_series

    model, ts = load_model(workdir / "m.bin"), load_csv(workdir / "data.csv")
    rows = sweep(model, ts, "salt_pepper", [0.0, 0.01, 0.05, 0.1, 0.2], seed=0)
    assert len(rows) == 5
    clean = evaluate(score_series(model, ts).s, ts.labels, ("vus_pr", "auc_roc"))
    assert rows[0][2] == clean["vus_pr"] and rows[0][3] == clean["auc_roc"]


def test_stability_zero_trials_and_zero_delta(workdir):
    assert main(["stability", "--model", str(workdir / "m.bin"), "--data", str(workdir / "data.csv"), "--trials", "0", "--out", str(workdir / "s0.csv")]) == 0
    lines = [l for l in (workdir / "s0.csv").read_text().splitlines() if not l.startswith("#")]
    assert lines == ["trial,deviation,bound,ratio,violation_rate"]
    assert main(["stability", "--model", str(workdir / "m.bin"), "--data", str(workdir / "data.csv"), "--trials", "1000", "--zero-every", "100", "--out", str(workdir / "s1.csv")]) == 0
    rows = [l.split(",") for l in (workdir / "s1.csv").read_text().splitlines() if l[:1].isdigit()]
    assert all(float(r[1]) == 0.0 for r in rows[::100])
    assert float(rows[0][4]) <= 0.01


def test_masks_export(workdir):
    out = workdir / "masks.csv"
    assert main(["masks", "--model", str(workdir / "m.bin"), "--data", str(workdir / "data.csv"), "--threshold", "0.5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# seed=") and lines[1] == "window_start,timestamp,mask,hard"
    rows = [l.split(",") for l in lines[2:]]
    assert len(rows) == (400 // 20) * 20
    assert all(0 < float(r[2]) < 1 and r[3] == str(int(float(r[2]) >= 0.5)) for r in rows)


def test_default_config_round_trip_on_sine(tmp_path):
    from arta.data import TimeSeries

    t = np.arange(500)[:, None]
    save_csv(TimeSeries(np.sin(2 * np.pi * t / np.array([40.0, 70.0]))), tmp_path / "sine.csv")
    cfg = tmp_path / "short.cfg"
    cfg.write_text("warmup_epochs=1\njoint_epochs=1\n")  # default architecture and window, fewer epochs
    assert main(["train", "--data", str(tmp_path / "sine.csv"), "--config", str(cfg), "--out", str(tmp_path / "m.bin")]) == 0
    raw = (tmp_path / "m.bin").read_bytes()
    from arta.persistence import encode_model

    assert encode_model(load_model(tmp_path / "m.bin")) == raw

