import numpy as np
import pytest
import yaml

from lacsim.cli import ConfigError, main, parse_config, read_config_echo, run

LEVELS_CONFIG = """
subcommand: levels
system:
  kind: single_spin
  v_perturbation: 0.1
levels:
  grid: {start: -1.0, stop: 1.0, count: 101}
"""

TRACE_CONFIG = """
subcommand: trace
system:
  kind: single_spin
  v_perturbation: 1.0
relaxation: {}
drive:
  omega0: 0.0
  omega1: 4.0
  f_mod: 0.01
  n_steps: 4096
trace:
  n_periods: 1
"""

SPECTRUM_CONFIG = """
subcommand: spectrum
system:
  kind: single_spin
  v_perturbation: 0.1
relaxation:
  r1: 1.0e-4
  r2: 0.5
  pump_j: 0.01
drive:
  omega1: 0.1
  f_mod: 0.05
sweep:
  grid: {start: -0.5, stop: 0.5, count: 11}
  convergence: {n_start: 64, n_max: 4096}
"""


def _read_rows(path):
    rows = []
    header = None
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append([float(v) for v in line.split(",")])
    return header, np.array(rows)


def test_parse_minimal_levels_config_resolves_defaults():
    config = parse_config(LEVELS_CONFIG)
    assert config.subcommand == "levels"
    assert config.system.v_perturbation == 0.1
    assert config.levels_grid.shape == (101,)
    assert config.effective["levels"]["grid"]["spacing"] == "linear"


def test_parse_rejects_negative_rate_with_key_name():
    bad = SPECTRUM_CONFIG.replace("r2: 0.5", "r2: -0.5")
    with pytest.raises(ConfigError, match="relaxation.r2"):
        parse_config(bad)


def test_parse_rejects_inconsistent_system_keys():
    text = """
subcommand: levels
system:
  kind: two_spin_dipolar
  a_iso: 0.2
  d_dd: 0.1
  theta_dd: 0.5
levels:
  grid: [0.0, 1.0]
"""
    with pytest.raises(ConfigError, match="system"):
        parse_config(text)


def test_parse_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(LEVELS_CONFIG + "\nbogus: 1\n")
    with pytest.raises(ConfigError, match="system"):
        parse_config(LEVELS_CONFIG.replace("v_perturbation: 0.1", "v_perturbation: 0.1\n  typo_key: 2"))


def test_parse_rejects_swept_fields_in_drive():
    with pytest.raises(ConfigError, match="drive.omega0"):
        parse_config(SPECTRUM_CONFIG.replace("omega1: 0.1", "omega1: 0.1\n  omega0: 0.3"))
    with pytest.raises(ConfigError, match="drive.n_steps"):
        parse_config(SPECTRUM_CONFIG.replace("omega1: 0.1", "omega1: 0.1\n  n_steps: 64"))


def test_parse_subcommand_mismatch():
    with pytest.raises(ConfigError, match="subcommand"):
        parse_config(LEVELS_CONFIG, subcommand="trace")
    config = parse_config(LEVELS_CONFIG, subcommand="levels")
    assert config.subcommand == "levels"
    with pytest.raises(ConfigError, match="subcommand"):
        parse_config(LEVELS_CONFIG.replace("subcommand: levels\n", ""))


def test_parse_grid_forms():
    explicit = parse_config(LEVELS_CONFIG.replace("{start: -1.0, stop: 1.0, count: 101}", "[-1.0, 0.0, 1.0]"))
    assert np.allclose(explicit.levels_grid, [-1.0, 0.0, 1.0])
    with pytest.raises(ConfigError, match="levels.grid"):
        parse_config(LEVELS_CONFIG.replace("{start: -1.0, stop: 1.0, count: 101}", "[1.0, 0.0]"))
    log = SPECTRUM_CONFIG.replace(
        "grid: {start: -0.5, stop: 0.5, count: 11}",
        "grid: {start: 0.01, stop: 1.0, count: 5, spacing: log}",
    )
    config = parse_config(log)
    assert np.allclose(config.sweep_grid, np.geomspace(0.01, 1.0, 5))


def test_levels_run_minimum_gap_equals_v(tmp_path):
    out = tmp_path / "levels.csv"
    config = parse_config(LEVELS_CONFIG)
    status = run(config, output=str(out))
    assert status == 0
    header, rows = _read_rows(out)
    assert header == ["axis_value", "e1", "e2"]
    gaps = rows[:, 2] - rows[:, 1]
    assert abs(gaps.min() - 0.1) < 1e-9


def test_trace_run_reproduces_inversion(tmp_path):
    out = tmp_path / "trace.csv"
    status = run(parse_config(TRACE_CONFIG), output=str(out))
    assert status == 0
    header, rows = _read_rows(out)
    assert header == ["t", "field", "population"]
    t, pop = rows[:, 0], rows[:, 2]
    period = 100.0
    assert pop[0] == 1.0
    assert pop[(t > 0.45 * period) & (t < 0.55 * period)].min() < 0.02
    assert pop[(t > 0.95 * period)].max() > 0.9


def test_spectrum_run_zero_modulation_all_zero(tmp_path):
    out = tmp_path / "spectrum.csv"
    config = parse_config(SPECTRUM_CONFIG.replace("omega1: 0.1", "omega1: 0.0"))
    status = run(config, output=str(out))
    assert status == 0
    header, rows = _read_rows(out)
    assert header == ["omega0", "x", "y", "x_opt", "n_used"]
    assert rows.shape[0] == 11
    assert np.max(np.abs(rows[:, 1])) < 1e-10
    assert np.max(np.abs(rows[:, 2])) < 1e-10


def test_spectrum_header_carries_phi_star(tmp_path):
    out = tmp_path / "spectrum.csv"
    run(parse_config(SPECTRUM_CONFIG), output=str(out))
    text = out.read_text()
    assert any(line.startswith("# phi_star:") for line in text.splitlines())


def test_float_serialization_round_trips(tmp_path):
    out = tmp_path / "spectrum.csv"
    run(parse_config(SPECTRUM_CONFIG), output=str(out))
    _, rows = _read_rows(out)
    # 17 significant digits: re-serializing the parsed value is stable
    for value in rows[:, 1]:
        assert float(format(value, ".17g")) == value


def test_config_echo_round_trip_byte_identical(tmp_path):
    out1 = tmp_path / "first.csv"
    out2 = tmp_path / "second.csv"
    run(parse_config(SPECTRUM_CONFIG), output=str(out1))
    echoed = read_config_echo(out1)
    config2 = parse_config(yaml.safe_dump(echoed))
    run(config2, output=str(out2))
    assert out1.read_bytes() == out2.read_bytes()


def test_run_requires_output_path():
    with pytest.raises(ConfigError, match="output"):
        run(parse_config(LEVELS_CONFIG))


def test_config_output_key_used(tmp_path):
    out = tmp_path / "from_config.csv"
    config = parse_config(LEVELS_CONFIG + f"\noutput: {out}\n")
    assert run(config) == 0
    assert out.exists()


def test_main_end_to_end(tmp_path):
    cfg = tmp_path / "levels.yaml"
    cfg.write_text(LEVELS_CONFIG)
    out = tmp_path / "levels.csv"
    status = main(["levels", "--config", str(cfg), "--output", str(out), "--threads", "1"])
    assert status == 0
    assert out.exists()


def test_main_reports_config_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(LEVELS_CONFIG.replace("single_spin", "bogus_kind"))
    status = main(["levels", "--config", str(cfg), "--output", str(tmp_path / "x.csv")])
    assert status == 2
    assert "system.kind" in capsys.readouterr().err


def test_main_missing_config_file(tmp_path, capsys):
    status = main(["levels", "--config", str(tmp_path / "nope.yaml")])
    assert status == 2
    assert "cannot read config" in capsys.readouterr().err


def test_fmsweep_run_structure(tmp_path):
    text = """
subcommand: fmsweep
system:
  kind: single_spin
  v_perturbation: 0.1
relaxation:
  r1: 1.0e-4
  r2: 0.5
  pump_j: 0.01
drive:
  omega1: 0.1
sweep:
  grid: {start: 0.05, stop: 0.5, count: 3, spacing: log}
  convergence: {n_start: 64, n_max: 1024}
  inner:
    grid: {start: -1.0, stop: 1.0, count: 11}
"""
    out = tmp_path / "fm.csv"
    status = run(parse_config(text), output=str(out), threads=1)
    assert status == 0
    header, rows = _read_rows(out)
    assert header == ["f_mod", "peak_to_peak", "phi_star", "n_used_max"]
    assert rows.shape == (3, 4)
    assert np.all(rows[:, 1] > 0)


def test_trace_mixed_initial_state(tmp_path):
    out = tmp_path / "trace.csv"
    config = parse_config(TRACE_CONFIG.replace("n_periods: 1", "n_periods: 1\n  initial_state: mixed"))
    assert run(config, output=str(out)) == 0
    _, rows = _read_rows(out)
    assert rows[0, 2] == 0.5  # maximally mixed start


def test_threads_resolution(monkeypatch):
    from lacsim.cli import _resolve_threads

    monkeypatch.setenv("LACSIM_THREADS", "3")
    assert _resolve_threads(None) == 3
    assert _resolve_threads(2) == 2  # flag wins over the environment
    monkeypatch.setenv("LACSIM_THREADS", "bogus")
    with pytest.raises(ConfigError):
        _resolve_threads(None)
    monkeypatch.delenv("LACSIM_THREADS")
    assert _resolve_threads(0) >= 1
    with pytest.raises(ConfigError):
        _resolve_threads(-1)


def test_fmsweep_rejects_f_mod_in_drive():
    text = """
subcommand: fmsweep
system: {kind: single_spin}
relaxation: {}
drive: {omega1: 0.1, f_mod: 0.5}
sweep:
  grid: [0.1, 1.0]
"""
    with pytest.raises(ConfigError, match="drive.f_mod"):
        parse_config(text)
