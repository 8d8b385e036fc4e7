"""Command-line front end: YAML run configs, subcommand dispatch, CSV output.

Subcommands map to the four product families: ``levels`` (static energy
levels over a field grid), ``trace`` (stepwise time trace of a modulated
run), ``spectrum`` (lock-in quadratures over a field sweep) and ``fmsweep``
(line amplitude versus modulation frequency).  Every run writes one CSV file
whose leading ``#`` comment block echoes the fully resolved configuration;
re-parsing that echo reproduces the identical run.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .liouville import RelaxationSpec
from .periodic import DriveSpec, Sampling, TimeTrace, bright_state, maximally_mixed, time_trace
from .spinops import SpinSystemSpec, SystemKind, energy_levels
from .sweep import (
    ConvergenceSpec,
    FmCurve,
    Spectrum,
    SweepAxis,
    SweepPlan,
    field_sweep,
    fm_sweep,
)

THREADS_ENV_VAR = "LACSIM_THREADS"
_CONFIG_BEGIN = "# --- config ---"
_CONFIG_END = "# --- end config ---"
_SUBCOMMANDS = ("levels", "trace", "spectrum", "fmsweep")
_MISSING = object()


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


# ---------------------------------------------------------------------------
# Config validation helpers
# ---------------------------------------------------------------------------


def _as_mapping(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(node).__name__}")
    return dict(node)


def _reject_unknown(node: dict, path: str) -> None:
    if node:
        keys = ", ".join(sorted(map(str, node)))
        raise ConfigError(f"{path}: unknown key(s): {keys}")


def _take(node: dict, key: str, path: str, default=_MISSING):
    if key in node:
        return node.pop(key)
    if default is _MISSING:
        raise ConfigError(f"{path}.{key}: required key is missing")
    return default


def _as_float(value, path: str, *, minimum=None, exclusive_minimum=None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value!r}")
    if exclusive_minimum is not None and value <= exclusive_minimum:
        raise ConfigError(f"{path}: must be > {exclusive_minimum}, got {value!r}")
    return value


def _as_int(value, path: str, *, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value!r}")
    return value


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    return value


def _as_choice(value, path: str, choices) -> str:
    if value not in choices:
        raise ConfigError(f"{path}: expected one of {sorted(choices)}, got {value!r}")
    return value


def _parse_grid(node, path: str, *, positive: bool = False):
    """Parse a grid node (explicit list or start/stop/count map).

    Returns ``(values, echo)`` where ``echo`` regenerates the same values.
    """
    if isinstance(node, list):
        if len(node) == 0:
            raise ConfigError(f"{path}: grid list must not be empty")
        values = [
            _as_float(v, f"{path}[{i}]", exclusive_minimum=0.0 if positive else None)
            for i, v in enumerate(node)
        ]
        return np.array(values, dtype=float), [float(v) for v in values]
    spec = _as_mapping(node, path)
    start = _as_float(_take(spec, "start", path), f"{path}.start")
    stop = _as_float(_take(spec, "stop", path), f"{path}.stop")
    count = _as_int(_take(spec, "count", path), f"{path}.count", minimum=1)
    spacing = _as_choice(_take(spec, "spacing", path, "linear"), f"{path}.spacing", ("linear", "log"))
    _reject_unknown(spec, path)
    if spacing == "log":
        if start <= 0.0 or stop <= 0.0:
            raise ConfigError(f"{path}: log spacing requires positive start/stop")
        values = np.geomspace(start, stop, count)
    else:
        values = np.linspace(start, stop, count)
    if positive and np.any(values <= 0.0):
        raise ConfigError(f"{path}: grid values must be positive")
    echo = {"start": start, "stop": stop, "count": count, "spacing": spacing}
    return values, echo


def _parse_system(node, path: str = "system") -> tuple[SpinSystemSpec, dict]:
    section = _as_mapping(node, path)
    kind_name = _as_choice(
        _take(section, "kind", path), f"{path}.kind", tuple(k.value for k in SystemKind)
    )
    kind = SystemKind(kind_name)
    fields = {"v_perturbation": _as_float(_take(section, "v_perturbation", path, 0.0), f"{path}.v_perturbation")}
    for name in ("a_iso", "d_dd", "theta_dd"):
        if name in section:
            fields[name] = _as_float(section.pop(name), f"{path}.{name}")
    _reject_unknown(section, path)
    try:
        system = SpinSystemSpec(kind=kind, **fields)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    echo = {"kind": kind.value, "v_perturbation": system.v_perturbation}
    if kind is SystemKind.TWO_SPIN_ISOTROPIC:
        echo["a_iso"] = system.a_iso
    if kind is SystemKind.TWO_SPIN_DIPOLAR:
        echo["d_dd"] = system.d_dd
        echo["theta_dd"] = system.theta_dd
    return system, echo


def _parse_relaxation(node, path: str = "relaxation") -> tuple[RelaxationSpec, dict]:
    section = _as_mapping(node, path)
    r1 = _as_float(_take(section, "r1", path, 0.0), f"{path}.r1", minimum=0.0)
    r2 = _as_float(_take(section, "r2", path, 0.0), f"{path}.r2", minimum=0.0)
    pump_j = _as_float(_take(section, "pump_j", path, 0.0), f"{path}.pump_j", minimum=0.0)
    damps = _as_bool(_take(section, "pump_damps_coherence", path, True), f"{path}.pump_damps_coherence")
    _reject_unknown(section, path)
    relax = RelaxationSpec(r1=r1, r2=r2, pump_j=pump_j, pump_damps_coherence=damps)
    echo = {"r1": r1, "r2": r2, "pump_j": pump_j, "pump_damps_coherence": damps}
    return relax, echo


def _parse_drive(node, subcommand: str, path: str = "drive") -> tuple[dict, dict]:
    section = _as_mapping(node, path)
    fields: dict = {}
    fields["omega1"] = _as_float(_take(section, "omega1", path, 0.0), f"{path}.omega1")
    sampling = _as_choice(
        _take(section, "sampling", path, Sampling.MIDPOINT.value),
        f"{path}.sampling",
        tuple(s.value for s in Sampling),
    )
    fields["sampling"] = sampling
    if subcommand in ("spectrum", "fmsweep"):
        if "omega0" in section:
            raise ConfigError(f"{path}.omega0: not allowed for {subcommand} (the field is swept)")
        if "n_steps" in section:
            raise ConfigError(f"{path}.n_steps: not allowed for {subcommand} (set by the convergence controller)")
    else:
        fields["omega0"] = _as_float(_take(section, "omega0", path, 0.0), f"{path}.omega0")
        fields["n_steps"] = _as_int(_take(section, "n_steps", path), f"{path}.n_steps", minimum=2)
    if subcommand == "fmsweep":
        if "f_mod" in section:
            raise ConfigError(f"{path}.f_mod: not allowed for fmsweep (the modulation frequency is swept)")
    else:
        fields["f_mod"] = _as_float(_take(section, "f_mod", path), f"{path}.f_mod", exclusive_minimum=0.0)
    _reject_unknown(section, path)
    return fields, dict(fields)


def _parse_convergence(node, path: str) -> tuple[ConvergenceSpec, dict]:
    section = _as_mapping(node, path) if node is not None else {}
    target = _as_float(
        _take(section, "target_rel_change", path, 0.01), f"{path}.target_rel_change", exclusive_minimum=0.0
    )
    n_start = _as_int(_take(section, "n_start", path, 64), f"{path}.n_start", minimum=4)
    n_max = _as_int(_take(section, "n_max", path, 4_194_304), f"{path}.n_max", minimum=n_start)
    _reject_unknown(section, path)
    spec = ConvergenceSpec(target_rel_change=target, n_start=n_start, n_max=n_max)
    echo = {"target_rel_change": target, "n_start": n_start, "n_max": n_max}
    return spec, echo


@dataclass
class RunConfig:
    """Fully validated run description with all defaults resolved.

    ``effective`` is the normalized document echoed into output headers;
    parsing it back yields an equivalent RunConfig.
    """

    subcommand: str
    system: SpinSystemSpec
    relaxation: RelaxationSpec | None
    drive_fields: dict | None
    levels_grid: np.ndarray | None
    trace_n_periods: int | None
    trace_initial_state: str | None
    sweep_grid: np.ndarray | None
    convergence: ConvergenceSpec | None
    inner_grid: np.ndarray | None
    output: str | None
    gamma_for_units: float | None
    effective: dict


def parse_config(text: str, subcommand: str | None = None) -> RunConfig:
    """Parse and validate a YAML run configuration.

    ``subcommand`` (e.g. from the command line) must agree with the config's
    own ``subcommand`` key when both are present; unknown keys anywhere are
    errors.
    """
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    root = _as_mapping(document, "config")

    declared = _take(root, "subcommand", "config", None)
    if declared is not None:
        declared = _as_choice(declared, "subcommand", _SUBCOMMANDS)
    if subcommand is None:
        subcommand = declared
        if subcommand is None:
            raise ConfigError("subcommand: required key is missing")
    elif declared is not None and declared != subcommand:
        raise ConfigError(f"subcommand: config says {declared!r} but {subcommand!r} was requested")

    output = _take(root, "output", "config", None)
    if output is not None and not isinstance(output, str):
        raise ConfigError(f"output: expected a string path, got {output!r}")
    gamma = _take(root, "gamma_for_units", "config", None)
    if gamma is not None:
        gamma = _as_float(gamma, "gamma_for_units", exclusive_minimum=0.0)

    system, system_echo = _parse_system(_take(root, "system", "config"))
    effective: dict = {"subcommand": subcommand, "system": system_echo}
    if output is not None:
        effective["output"] = output
    if gamma is not None:
        effective["gamma_for_units"] = gamma

    relaxation = None
    drive_fields = None
    levels_grid = None
    trace_n_periods = None
    trace_initial_state = None
    sweep_grid = None
    convergence = None
    inner_grid = None

    if subcommand == "levels":
        section = _as_mapping(_take(root, "levels", "config"), "levels")
        levels_grid, grid_echo = _parse_grid(_take(section, "grid", "levels"), "levels.grid")
        if levels_grid.size > 1 and np.any(np.diff(levels_grid) <= 0):
            raise ConfigError("levels.grid: must be strictly ascending")
        _reject_unknown(section, "levels")
        effective["levels"] = {"grid": grid_echo}
    else:
        relaxation, relax_echo = _parse_relaxation(_take(root, "relaxation", "config"))
        drive_fields, drive_echo = _parse_drive(_take(root, "drive", "config"), subcommand)
        effective["relaxation"] = relax_echo
        effective["drive"] = drive_echo

    if subcommand == "trace":
        section = _as_mapping(_take(root, "trace", "config"), "trace")
        trace_n_periods = _as_int(_take(section, "n_periods", "trace", 1), "trace.n_periods", minimum=1)
        trace_initial_state = _as_choice(
            _take(section, "initial_state", "trace", "bright"), "trace.initial_state", ("bright", "mixed")
        )
        _reject_unknown(section, "trace")
        effective["trace"] = {"n_periods": trace_n_periods, "initial_state": trace_initial_state}

    if subcommand in ("spectrum", "fmsweep"):
        section = _as_mapping(_take(root, "sweep", "config"), "sweep")
        sweep_grid, grid_echo = _parse_grid(
            _take(section, "grid", "sweep"), "sweep.grid", positive=subcommand == "fmsweep"
        )
        if sweep_grid.size > 1:
            steps = np.diff(sweep_grid)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                raise ConfigError("sweep.grid: must be strictly monotonic")
        convergence, conv_echo = _parse_convergence(_take(section, "convergence", "sweep", None), "sweep.convergence")
        sweep_echo = {"grid": grid_echo, "convergence": conv_echo}
        if subcommand == "fmsweep" and "inner" in section:
            inner_section = _as_mapping(section.pop("inner"), "sweep.inner")
            inner_grid, inner_echo = _parse_grid(_take(inner_section, "grid", "sweep.inner"), "sweep.inner.grid")
            _reject_unknown(inner_section, "sweep.inner")
            sweep_echo["inner"] = {"grid": inner_echo}
        _reject_unknown(section, "sweep")
        effective["sweep"] = sweep_echo

    _reject_unknown(root, "config")
    return RunConfig(
        subcommand=subcommand,
        system=system,
        relaxation=relaxation,
        drive_fields=drive_fields,
        levels_grid=levels_grid,
        trace_n_periods=trace_n_periods,
        trace_initial_state=trace_initial_state,
        sweep_grid=sweep_grid,
        convergence=convergence,
        inner_grid=inner_grid,
        output=output,
        gamma_for_units=gamma,
        effective=effective,
    )


# ---------------------------------------------------------------------------
# Output writing
# ---------------------------------------------------------------------------


def _write_csv(path: Path, config: RunConfig, columns, rows, extra_comments=()) -> None:
    lines = [f"# lacsim {config.subcommand}"]
    lines.extend(f"# {comment}" for comment in extra_comments)
    lines.append(_CONFIG_BEGIN)
    for echo_line in yaml.safe_dump(config.effective, sort_keys=True, default_flow_style=False).splitlines():
        lines.append(f"# {echo_line}")
    lines.append(_CONFIG_END)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(value) for value in row))
    text = "\n".join(lines) + "\n"
    try:
        path.write_text(text)
    except BaseException:
        path.unlink(missing_ok=True)  # never leave partial output behind
        raise


def read_config_echo(path) -> dict:
    """Recover the effective config echoed into an output file's header."""
    lines = Path(path).read_text().splitlines()
    try:
        begin = lines.index(_CONFIG_BEGIN) + 1
        end = lines.index(_CONFIG_END)
    except ValueError as exc:
        raise ValueError(f"{path}: no config echo block found") from exc
    block = "\n".join(line[2:] for line in lines[begin:end])
    return yaml.safe_load(block)


def _resolve_output(config: RunConfig, output: str | None) -> Path:
    target = output or config.output
    if target is None:
        raise ConfigError("output: no output path given (config key 'output' or --output flag)")
    return Path(target)


def run(config: RunConfig, *, output: str | None = None, threads: int = 1, verbose: bool = False) -> int:
    """Execute a validated run and write its CSV. Returns the exit status.

    The exit status is 0 on success and the number of failed sweep points
    (capped at 120) otherwise.
    """
    out_path = _resolve_output(config, output)
    workers = threads if threads >= 1 else (os.cpu_count() or 1)
    failures = 0

    if config.subcommand == "levels":
        levels = energy_levels(config.system, config.levels_grid)
        columns = ["axis_value"] + [f"e{i + 1}" for i in range(config.system.dim)]
        rows = [[w, *row] for w, row in zip(config.levels_grid, levels)]
        _write_csv(out_path, config, columns, rows)

    elif config.subcommand == "trace":
        drive = DriveSpec(
            omega0=config.drive_fields["omega0"],
            omega1=config.drive_fields["omega1"],
            f_mod=config.drive_fields["f_mod"],
            n_steps=config.drive_fields["n_steps"],
            sampling=Sampling(config.drive_fields["sampling"]),
        )
        rho0 = bright_state(config.system) if config.trace_initial_state == "bright" else maximally_mixed(config.system)
        trace: TimeTrace = time_trace(config.system, config.relaxation, drive, rho0, config.trace_n_periods)
        rows = zip(trace.t, trace.field, trace.population)
        _write_csv(out_path, config, ["t", "field", "population"], rows)

    elif config.subcommand == "spectrum":
        drive = DriveSpec(
            omega0=float(config.sweep_grid[0]),
            omega1=config.drive_fields["omega1"],
            f_mod=config.drive_fields["f_mod"],
            n_steps=config.convergence.n_start,
            sampling=Sampling(config.drive_fields["sampling"]),
        )
        plan = SweepPlan(
            axis=SweepAxis.OMEGA0,
            grid=tuple(float(w) for w in config.sweep_grid),
            system=config.system,
            relax=config.relaxation,
            drive=drive,
            convergence=config.convergence,
        )
        spectrum: Spectrum = field_sweep(plan, workers=workers, progress=verbose)
        failures = len(spectrum.failures)
        comments = []
        if spectrum.phi_star is not None:
            comments.append(f"phi_star: {_fmt(spectrum.phi_star)}")
            comments.append(f"peak_to_peak: {_fmt(spectrum.peak_to_peak)}")
        if failures:
            comments.append(f"failed_points: {failures}")
        rows = zip(spectrum.axis_values, spectrum.x, spectrum.y, spectrum.x_opt, spectrum.n_used)
        _write_csv(out_path, config, ["omega0", "x", "y", "x_opt", "n_used"], rows, comments)
        for index, message in sorted(spectrum.failures.items()):
            print(f"point {index} failed: {message}", file=sys.stderr)

    elif config.subcommand == "fmsweep":
        drive = DriveSpec(
            omega0=0.0,
            omega1=config.drive_fields["omega1"],
            f_mod=float(config.sweep_grid[0]),
            n_steps=config.convergence.n_start,
            sampling=Sampling(config.drive_fields["sampling"]),
        )
        inner = tuple(float(w) for w in config.inner_grid) if config.inner_grid is not None else None
        plan = SweepPlan(
            axis=SweepAxis.F_MOD,
            grid=tuple(float(f) for f in config.sweep_grid),
            system=config.system,
            relax=config.relaxation,
            drive=drive,
            convergence=config.convergence,
            inner_grid=inner,
        )
        curve: FmCurve = fm_sweep(plan, workers=workers, progress=verbose)
        failures = len(curve.failures)
        comments = [f"failed_points: {failures}"] if failures else []
        rows = zip(curve.f_mod, curve.peak_to_peak, curve.phi_star, curve.n_used_max)
        _write_csv(out_path, config, ["f_mod", "peak_to_peak", "phi_star", "n_used_max"], rows, comments)
        for index, message in sorted(curve.failures.items()):
            print(f"point {index} failed: {message}", file=sys.stderr)

    else:  # pragma: no cover - parse_config restricts the subcommand
        raise ConfigError(f"unknown subcommand {config.subcommand!r}")

    return min(failures, 120)


def _resolve_threads(flag_value: int | None) -> int:
    if flag_value is not None:
        value = flag_value
    else:
        env = os.environ.get(THREADS_ENV_VAR)
        if env is None:
            value = 0
        else:
            try:
                value = int(env)
            except ValueError as exc:
                raise ConfigError(f"{THREADS_ENV_VAR}: expected an integer, got {env!r}") from exc
    if value < 0:
        raise ConfigError(f"threads: must be >= 0, got {value}")
    return value if value >= 1 else (os.cpu_count() or 1)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lacsim",
        description="Periodic steady-state simulator of level-anti-crossing spectra under field modulation.",
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name in _SUBCOMMANDS:
        sub = subparsers.add_parser(name, help=f"run the {name} pipeline")
        sub.add_argument("--config", required=True, help="path to the YAML run configuration")
        sub.add_argument("--output", help="output CSV path (overrides the config)")
        sub.add_argument("--threads", type=int, default=None, help="worker processes, 0 = auto")
        sub.add_argument("--verbose", action="store_true", help="progress reporting to stderr")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text, subcommand=args.subcommand)
        threads = _resolve_threads(args.threads)
        return run(config, output=args.output, threads=threads, verbose=args.verbose)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
