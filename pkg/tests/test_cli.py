import json
import subprocess
import sys

import pytest

from lmcpf.cli import main
from lmcpf.config import ExperimentConfig, dump_config


@pytest.fixture
def config_file(tmp_path):
    cfg = ExperimentConfig(members=6, cycles=8, spinup_cycles=2, burn_in_steps=100,
                           forecast_lead_cycles=(0, 1, 2))
    path = tmp_path / "exp.json"
    dump_config(cfg, path)
    return path


def last_json(text):
    return json.loads(text.strip().splitlines()[-1])


def test_cycle_then_diag_and_forecast(tmp_path, config_file, capsys):
    out = tmp_path / "run"
    assert main(["cycle", "--config", str(config_file), "--out", str(out), "--filter", "letkf"]) == 0
    summary = last_json(capsys.readouterr().out)
    assert summary["status"] == "ok" and summary["filter"] == "letkf"
    for name in ("cycles.csv", "points.csv", "states.npz", "manifest.json"):
        assert (out / name).exists()

    assert main(["diag", "--states", str(out)]) == 0
    assert last_json(capsys.readouterr().out)["rows"] == 8 * 40

    fc = tmp_path / "fc"
    assert main(["forecast", "--config", str(config_file), "--states", str(out), "--out", str(fc)]) == 0
    rows = (fc / "forecast.csv").read_text().splitlines()
    assert rows[0] == "lead,launches,rmse,bias,crps,spread" and len(rows) == 4


def test_seed_override_changes_output(tmp_path, config_file, capsys):
    main(["cycle", "--config", str(config_file), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["cycle", "--config", str(config_file), "--out", str(tmp_path / "b"), "--seed", "2"])
    capsys.readouterr()
    assert (tmp_path / "a" / "cycles.csv").read_bytes() != (tmp_path / "b" / "cycles.csv").read_bytes()
    man = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man["seed"] == 2


def test_weights_and_simhist(tmp_path, config_file, capsys):
    out = tmp_path / "w"
    assert main(["weights", "--config", str(config_file), "--out", str(out), "--kappa-steps", "5"]) == 0
    lines = (out / "weights_curve.csv").read_text().splitlines()
    assert lines[0] == "kappa,member,exact,approx" and len(lines) == 1 + 5 * 6
    assert main(["weights", "--instance", str(out / "instance.npz"), "--out", str(out), "--kappa-steps", "3"]) == 0

    assert main(["simhist", "--out", str(tmp_path / "s"), "--draws", "2000", "--nu", "1", "--eta", "15"]) == 0
    summary = last_json(capsys.readouterr().out)
    assert summary["fit_nu"] == pytest.approx(1.0) and summary["fit_eta"] == pytest.approx(15.0)


def test_bad_config_gives_error_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"cycles": 0}))
    code = main(["cycle", "--config", str(bad), "--out", str(tmp_path)])
    assert code != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["status"] == "error" and err["error"] == "ConfigError"


def test_blow_up_error_line_has_cycle(tmp_path, capsys):
    path = tmp_path / "boom.json"
    path.write_text(json.dumps({"model": {"dt": 5.0, "steps_per_cycle": 20}, "burn_in_steps": 0,
                                "members": 4, "cycles": 3, "spinup_cycles": 0}))
    assert main(["cycle", "--config", str(path), "--out", str(tmp_path / "o")]) != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "NonFiniteState" and err["cycle"] == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lmcpf", "simhist", "--out", str(tmp_path), "--draws", "100"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "simhist"
    proc = subprocess.run([sys.executable, "-m", "lmcpf", "cycle", "--config", str(tmp_path / "nope.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["error"] == "ConfigError"
