import json

import numpy as np
import pytest

from vibesep.cli import main
from vibesep.cs2 import gamma_threshold

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")

SMALL_PARAMS = {
    "pss": {"depth": 2, "kernel_size": 16, "lag": 30, "max_epochs": 40, "patience": 5},
    "n_filter": 51,
    "K": 10,
}


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_threshold_table(capsys):
    assert main(["threshold"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 6
    assert out[4].split()[0] == "20"
    assert float(out[1].split()[1]) == pytest.approx(5.60396, abs=1e-5)


def test_threshold_single(capsys):
    assert main(["threshold", "--k", "20", "--p", "0.001"]) == 0
    assert float(capsys.readouterr().out.splitlines()[1].split()[1]) == pytest.approx(gamma_threshold(20, 0.001), abs=1e-5)


def test_threshold_bad_p(capsys):
    assert main(["threshold", "--k", "3", "--p", "1.5"]) != 0
    assert "[threshold]" in capsys.readouterr().err


def test_simulate_then_analyze(tmp_path, capsys):
    cfg = write_json(tmp_path / "sim.json", {"N": 6000, "fs": 6000.0, "seed": 4, "tf_len": 101})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "sim")]) == 0
    for name in ("config.json", "signal.csv", "signal.wav"):
        assert (tmp_path / "sim" / name).exists()
    params = write_json(tmp_path / "params.json", SMALL_PARAMS)
    args = ["analyze", "--in", str(tmp_path / "sim" / "signal.wav"), "--params", params]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    a.pop("timings"), b.pop("timings")
    assert json.dumps(a) == json.dumps(b)
    assert "CS2 component" in capsys.readouterr().out


def test_analyze_csv_input(tmp_path):
    rng = np.random.default_rng(0)
    t = np.arange(6000) / 6000
    x = np.cos(2 * np.pi * 150 * t) + rng.standard_normal(6000)
    np.savetxt(tmp_path / "rec.csv", np.column_stack([t, x]), delimiter=",")
    params = write_json(tmp_path / "params.json", SMALL_PARAMS)
    assert main(["analyze", "--in", str(tmp_path / "rec.csv"), "--params", params, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "report.json").exists()


def test_analyze_missing_input(tmp_path, capsys):
    assert main(["analyze", "--in", str(tmp_path / "none.wav"), "--out", str(tmp_path)]) == 1
    assert "[load]" in capsys.readouterr().err


def test_analyze_too_short_reports_stage(tmp_path, capsys):
    np.savetxt(tmp_path / "short.csv", np.random.default_rng(0).standard_normal(3000))
    rc = main(["analyze", "--in", str(tmp_path / "short.csv"), "--fs", "24000", "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "[pss]" in capsys.readouterr().err


def test_campaign_command(tmp_path, capsys):
    cfg = {
        "snr_grid": [20.0],
        "iterations": 1,
        "targets": ["p"],
        "pss_config": SMALL_PARAMS["pss"],
        "n_filter": 51,
        "tf_len": 101,
        "K": 10,
        "N": 6000,
        "fs": 6000.0,
    }
    path = write_json(tmp_path / "c.json", cfg)
    assert main(["campaign", "--config", path, "--out", str(tmp_path / "r.csv")]) == 0
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 2


def test_bad_config_reports_stage(tmp_path, capsys):
    path = write_json(tmp_path / "c.json", {"bogus": 1})
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "x")]) == 1
    assert "[simulate]" in capsys.readouterr().err
