import csv
import json

import numpy as np
import pytest

from resonance_lab import __version__
from resonance_lab.cli import (EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, PRESETS, SCENARIOS, ConfigError,
                               format_float, load_config, main)
from resonance_lab.snapshot import read_snapshot


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_no_arguments_prints_usage(capsys):
    assert main([]) == EXIT_OK
    assert "usage" in capsys.readouterr().out


def test_every_scenario_has_a_valid_preset():
    assert set(PRESETS) == set(SCENARIOS)
    for name in PRESETS:
        assert load_config(preset=name).scenario == name


@pytest.mark.parametrize("raw,path", [
    ({"scenario": "beating", "grid": {"nx": 4}}, "grid.nx"),
    ({"scenario": "beating", "physics": {"gamma": 0.7}}, "physics.gamma"),
    ({"scenario": "nope"}, "scenario"),
    ({"scenario": "nls", "grid": {"n_x": 100}}, "grid"),
    ({"scenario": "beating", "bogus": 1}, "bogus"),
])
def test_config_errors_name_the_field(raw, path):
    with pytest.raises(ConfigError) as info:
        load_config(raw)
    assert path in str(info.value)


def test_cross_field_validation():
    with pytest.raises(ConfigError):
        load_config({"scenario": "beating", "physics": {"p": 0, "q": 3}, "grid": {"P": 2}})
    with pytest.raises(ConfigError):
        load_config({"scenario": "scattering", "time": {"t0": 30.0, "t1": 20.0}})
    with pytest.raises(ConfigError):
        load_config({"scenario": "nls", "physics": {"potential": [1.0, 2.0]}})


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "gamma-scan", "extra": True}))
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "extra" in capsys.readouterr().err
    cfg.write_text("{not json")
    assert main(["--config", str(cfg)]) == EXIT_CONFIG
    assert main(["--preset", "unknown"]) == EXIT_CONFIG


def test_numeric_failure_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "reduced", "amplitude": 50.0,
                               "integrator": {"method": "rk4", "step": 10.0},
                               "time": {"tau_end": 1e6}}))
    out = tmp_path / "o"
    assert main(["--config", str(cfg), "--out", str(out)]) == EXIT_NUMERIC
    diag = json.loads((out / "diagnostic.json").read_text())
    assert diag["error"] == "IntegrationError" and diag["scenario"] == "reduced"


def test_gamma_scan(tmp_path):
    assert main(["--preset", "gamma-scan", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_rows(tmp_path / "gamma_scan.csv")
    assert rows[0] == ["gamma", "T_gamma", "T_over_abs_ln_gamma"]
    assert [float(r[0]) for r in rows[1:]] == [10.0**-k for k in range(1, 7)]
    for g, T, ratio in rows[1:]:
        assert float(ratio) == pytest.approx(float(T) / abs(np.log(float(g))), rel=1e-15)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["version"] == __version__
    assert manifest["config"]["scenario"] == "gamma-scan"
    assert manifest["wall_time_s"] >= 0
    assert "gamma_scan.csv" in manifest["files"]


def test_beating_preset_reaches_exchanged_state(tmp_path):
    assert main(["--preset", "beating", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["K_max"] == pytest.approx(0.9, rel=1e-6)
    assert report["K_min"] == pytest.approx(0.1, rel=1e-6)
    rows = read_rows(tmp_path / "k_curve.csv")
    assert rows[0] == ["t", "K_numeric", "K_planar"]


def test_seeded_runs_are_byte_identical(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "reduced", "grid": {"P": 3}, "time": {"tau_end": 50.0}}))
    for out, seed in ((a, "5"), (b, "5"), (c, "6")):
        assert main(["--config", str(cfg), "--seed", seed, "--out", str(out)]) == EXIT_OK
    assert (a / "invariants.csv").read_bytes() == (b / "invariants.csv").read_bytes()
    assert (a / "invariants.csv").read_bytes() != (c / "invariants.csv").read_bytes()


def test_threads_flag_and_env(tmp_path, monkeypatch):
    monkeypatch.setenv("RESONANCE_LAB_THREADS", "3")
    assert main(["--preset", "resonant-field", "--out", str(tmp_path / "env")]) == EXIT_OK
    m = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert m["config"]["threads"] == 3
    assert main(["--preset", "resonant-field", "--threads", "1", "--out", str(tmp_path / "one")]) == 0
    one = json.loads((tmp_path / "one" / "manifest.json").read_text())
    assert one["config"]["threads"] == 1
    assert ((tmp_path / "env" / "sobolev.csv").read_bytes()
            == (tmp_path / "one" / "sobolev.csv").read_bytes())
    U, V, tau = read_snapshot(tmp_path / "one" / "final.rsfd")
    assert tau == 100.0 and U.representation == "mixed"
    monkeypatch.setenv("RESONANCE_LAB_THREADS", "many")
    assert main(["--preset", "gamma-scan", "--out", str(tmp_path / "bad")]) == EXIT_CONFIG


def test_nls_run_writes_series_and_snapshots(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "nls", "grid": {"L": 64.0, "n_x": 128},
                               "time": {"t_end": 1.0, "dt": 0.05}, "record_every": 5,
                               "snapshot_every": 10}))
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    rows = read_rows(tmp_path / "o" / "series.csv")
    assert rows[0] == ["t", "mass_U", "mass_V", "H1_sum", "H6_sum", "H12_sum",
                       "Linfty_H1y_U", "Linfty_H1y_V"]
    assert float(rows[-1][0]) == 1.0
    snaps = sorted((tmp_path / "o").glob("snapshot_*.rsfd"))
    assert len(snaps) == 3
    assert read_snapshot(snaps[-1])[2] == pytest.approx(1.0)


def test_float_format_round_trips():
    for v in (0.1, 1 / 3, 1e-300, 12345.678, -0.0):
        assert float(format_float(v)) == v
    assert format_float(np.float64(0.1)) == "0.1"


def test_potential_keeps_beating(tmp_path):
    assert main(["--preset", "potential", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["amplitude_free"] > 0.7
    assert report["relative_change"] <= 0.25
