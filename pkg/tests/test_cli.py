import csv
import hashlib
import json

import pytest

from qtrack.cli import main
from qtrack.config import shipped_config_path

PAPER = shipped_config_path("paper_example")
SIGNED = shipped_config_path("signed_box")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_config(tmp_path, **changes):
    raw = json.loads(PAPER.read_text())
    raw.update(changes)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(raw))
    return p


def test_simulate_rows(tmp_path):
    assert main(["simulate", str(PAPER), "--horizon", "100", "-o", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "trial.csv")
    assert rows[0] == ["k", "u", "y", "S", "S_bar", "theta1_hat", "theta2_hat", "err_sq", "track_sq"]
    assert len(rows) == 101
    assert rows[1][1] == "0.2"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_sha256"] == hashlib.sha256(PAPER.read_bytes()).hexdigest()
    assert manifest["status"] == "done"


def test_simulate_bad_thresholds(tmp_path, capsys):
    cfg = write_config(tmp_path, quantizer={"thresholds": [0, 0], "weights": [1, 0, -1]})
    assert main(["simulate", str(cfg), "-o", str(tmp_path / "o")]) == 3
    assert "NonAscendingThresholds" in capsys.readouterr().err


def test_missing_and_malformed(tmp_path):
    assert main(["simulate", str(tmp_path / "nope.json"), "-o", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["check", str(bad)]) == 2
    missing = tmp_path / "missing.json"
    missing.write_text(json.dumps({"theta": [4, 1]}))
    assert main(["check", str(missing)]) == 2


def test_quantizer_preset(tmp_path):
    raw = json.loads(PAPER.read_text())
    raw.pop("quantizer")
    p = tmp_path / "noq.json"
    p.write_text(json.dumps(raw))
    assert main(["check", str(p)]) == 2
    assert main(["simulate", str(p), "--quantizer-preset", "paper", "--horizon", "10",
                 "-o", str(tmp_path / "o")]) == 0


def test_simulate_divergence_exit(tmp_path):
    cfg = write_config(tmp_path, divergence_limit=1.0)
    assert main(["simulate", str(cfg), "--horizon", "50", "-o", str(tmp_path / "o")]) == 4


def test_montecarlo_outputs(tmp_path):
    out = tmp_path / "mc"
    assert main(["montecarlo", str(PAPER), "--horizon", "1000", "--trials", "10", "-o", str(out)]) == 0
    mse = read_csv(out / "mse_curve.csv")
    assert mse[0] == ["k", "mse", "mse_se", "k_times_mse"]
    assert read_csv(out / "tracking_curve.csv")[0] == ["k", "track", "track_se"]
    summary = read_csv(out / "summary.csv")
    assert summary[0] == ["slope", "slope_se", "tail_tracking_mean", "tail_tracking_se", "rate_class",
                          "zeta", "empirical_K0", "delta_y_hat"]
    assert len(summary) == 2
    assert summary[1][4] == "not_certified"


def test_montecarlo_synthetic(tmp_path):
    assert main(["montecarlo", str(PAPER), "--synthetic-power", "1", "-o", str(tmp_path)]) == 0
    slope = float(read_csv(tmp_path / "summary.csv")[1][0])
    assert slope == pytest.approx(-1.0, abs=1e-12)


def test_montecarlo_divergence_exit(tmp_path):
    cfg = write_config(tmp_path, divergence_limit=1.0, horizon=50, trials=4)
    assert main(["montecarlo", str(cfg), "-o", str(tmp_path / "o")]) == 5


def test_check_paper(capsys):
    assert main(["check", str(PAPER)]) == 0
    out = capsys.readouterr().out
    assert "margin = 3" in out
    assert "contains theta1=0" in out


def test_check_signed_box(capsys):
    assert main(["check", str(SIGNED)]) == 0
    out = capsys.readouterr().out
    assert "fail" not in out and "not-certifiable" not in out
    assert "2.96985" in out


def test_check_short_window(tmp_path, capsys):
    cfg = write_config(tmp_path, h=2)
    assert main(["check", str(cfg)]) == 3
    assert "WindowTooShort" in capsys.readouterr().err


def test_check_hard_failure(tmp_path):
    cfg = write_config(tmp_path, theta=[1.0, 0.9])
    assert main(["check", str(cfg)]) == 3


def test_seed_override_changes_output(tmp_path):
    a, b, c = (tmp_path / n for n in "abc")
    main(["simulate", str(PAPER), "--horizon", "50", "-o", str(a)])
    main(["simulate", str(PAPER), "--horizon", "50", "-o", str(b)])
    main(["simulate", str(PAPER), "--horizon", "50", "--seed", "1", "-o", str(c)])
    assert (a / "trial.csv").read_bytes() == (b / "trial.csv").read_bytes()
    assert (a / "trial.csv").read_bytes() != (c / "trial.csv").read_bytes()
