"""Sweep orchestration: field sweeps, modulation-frequency sweeps, N control.

Each operating point is independent: the per-point pipeline builds the
one-period propagators, solves the periodic steady state, re-propagates it to
collect the bright-population waveform and demodulates.  The number of
intervals per period is refined by doubling until the quadratures move by
less than the requested relative change, and points are distributed over a
process pool by static partition so the assembled output is identical for
any worker count.
"""

from __future__ import annotations

import enum
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .liouville import RelaxationSpec, rho_to_vec
from .lockin import FlatSpectrum, LockinPoint, demodulate, optimal_phase_amplitude, with_omega0
from .periodic import DriveSpec, SteadyStateError, build_period, period_waveform, periodic_steady_state
from .spinops import SpinSystemSpec

_ZERO_SIGNAL_FLOOR = 1e-12


class SweepAxis(enum.Enum):
    OMEGA0 = "omega0"
    F_MOD = "f_mod"


@dataclass(frozen=True)
class ConvergenceSpec:
    """Stopping rule for the interval-count doubling refinement."""

    target_rel_change: float = 0.01
    n_start: int = 64
    n_max: int = 4_194_304

    def __post_init__(self) -> None:
        if not (math.isfinite(self.target_rel_change) and self.target_rel_change > 0.0):
            raise ValueError(f"target_rel_change must be positive, got {self.target_rel_change!r}")
        if self.n_start < 4:
            raise ValueError(f"n_start must be >= 4, got {self.n_start}")
        if self.n_max < self.n_start:
            raise ValueError(f"n_max ({self.n_max}) must be >= n_start ({self.n_start})")


@dataclass(frozen=True)
class SweepPlan:
    """A sweep axis plus everything held fixed along it.

    ``drive`` provides the parameters not being swept (its value on the swept
    axis is replaced point by point, and ``n_steps`` is controlled by the
    convergence loop).  ``inner_grid`` applies only to ``F_MOD`` sweeps: the
    field grid of the inner sweep each line amplitude is measured on.
    """

    axis: SweepAxis
    grid: tuple[float, ...]
    system: SpinSystemSpec
    relax: RelaxationSpec
    drive: DriveSpec
    convergence: ConvergenceSpec = ConvergenceSpec()
    inner_grid: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("grid must be a non-empty 1-d sequence")
        steps = np.diff(grid)
        if grid.size > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("grid must be strictly monotonic")
        if self.axis is SweepAxis.F_MOD and np.any(grid <= 0):
            raise ValueError("f_mod grid values must be positive")


@dataclass(frozen=True)
class ConvergedPoint:
    """Quadratures at one operating point after N refinement."""

    point: LockinPoint
    n_used: int
    converged: bool
    trace_err: float


def default_inner_grid(system: SpinSystemSpec, points: int = 101, span_factor: float = 10.0) -> tuple[float, ...]:
    """Field grid spanning the zero-field line and its wings.

    Symmetric around the crossing, extending ``span_factor`` times the
    largest coupling of the system (1.0 if all couplings vanish).
    """
    scale = max(abs(system.v_perturbation), abs(system.a_iso), abs(system.d_dd)) or 1.0
    return tuple(np.linspace(-span_factor * scale, span_factor * scale, points))


def lockin_once(
    system: SpinSystemSpec, relax: RelaxationSpec, drive: DriveSpec
) -> tuple[LockinPoint, float]:
    """Steady-state quadratures at one operating point and fixed ``n_steps``.

    Returns the lock-in point and the trace drift observed while collecting
    the waveform.  Raises :class:`SteadyStateError` if re-propagating the
    steady state over the period does not return it within tolerance.
    """
    cache = build_period(system, relax, drive)
    rho0 = periodic_steady_state(cache)
    wave, rho_final, trace_err = period_waveform(cache, rho0)
    closure = np.max(np.abs(rho_final - rho_to_vec(rho0)))
    if closure >= 1e-8:
        raise SteadyStateError(f"steady state not periodic: |rho(T) - rho(0)| = {closure:.3e}")
    point = with_omega0(demodulate(wave, drive.f_mod), drive.omega0)
    return point, trace_err


def converge_n(
    system: SpinSystemSpec,
    relax: RelaxationSpec,
    drive: DriveSpec,
    convergence: ConvergenceSpec = ConvergenceSpec(),
) -> ConvergedPoint:
    """Refine the per-period interval count until the quadratures settle.

    Starting from ``n_start`` intervals, the count is doubled until the
    quadrature vector moves by less than ``target_rel_change`` (relative to
    its magnitude, floored to guard the zero-signal case).  Reported are the
    values and interval count of the first grid whose refinement no longer
    changed the result; if ``n_max`` is reached first, the last values are
    returned flagged as unconverged.
    """
    n = convergence.n_start
    prev_point, prev_err = lockin_once(system, relax, drive=replace(drive, n_steps=n))
    while 2 * n <= convergence.n_max:
        cur_point, cur_err = lockin_once(system, relax, drive=replace(drive, n_steps=2 * n))
        delta = math.hypot(cur_point.x - prev_point.x, cur_point.y - prev_point.y)
        scale = max(cur_point.magnitude, _ZERO_SIGNAL_FLOOR)
        if delta / scale < convergence.target_rel_change:
            return ConvergedPoint(point=prev_point, n_used=n, converged=True, trace_err=prev_err)
        prev_point, prev_err = cur_point, cur_err
        n *= 2
    return ConvergedPoint(point=prev_point, n_used=n, converged=False, trace_err=prev_err)


@dataclass
class Spectrum:
    """Field sweep result: one row per grid point plus phase metadata.

    Failed points keep their row with NaN quadratures and an entry in
    ``failures``; ``x_opt`` is the in-phase component at the common optimal
    phase ``phi_star`` and ``peak_to_peak`` its amplitude over the sweep.
    """

    plan: SweepPlan
    axis_values: np.ndarray
    x: np.ndarray
    y: np.ndarray
    x_opt: np.ndarray
    n_used: np.ndarray
    converged: np.ndarray
    trace_err: np.ndarray
    phi_star: float | None
    peak_to_peak: float
    failures: dict[int, str]


@dataclass
class FmCurve:
    """Line amplitude versus modulation frequency."""

    plan: SweepPlan
    f_mod: np.ndarray
    peak_to_peak: np.ndarray
    phi_star: np.ndarray
    n_used_max: np.ndarray
    failures: dict[int, str]


def _sweep_point_worker(payload):
    system, relax, drive, convergence = payload
    try:
        result = converge_n(system, relax, drive, convergence)
    except Exception as exc:  # isolate per-point failures; the sweep continues
        return ("error", f"{type(exc).__name__}: {exc}")
    return ("ok", result.point.x, result.point.y, result.n_used, result.converged, result.trace_err)


def _run_points(payloads, workers: int, progress: bool):
    total = len(payloads)
    if workers <= 1:
        iterator = map(_sweep_point_worker, payloads)
    else:
        executor = ProcessPoolExecutor(max_workers=workers)
        # Static contiguous partition: deterministic assignment, ordered results.
        chunksize = max(1, math.ceil(total / workers))
        iterator = executor.map(_sweep_point_worker, payloads, chunksize=chunksize)
    results = []
    try:
        for i, result in enumerate(iterator):
            results.append(result)
            if progress:
                print(f"point {i + 1}/{total}", file=sys.stderr, flush=True)
    finally:
        if workers > 1:
            executor.shutdown()
    return results


def field_sweep(plan: SweepPlan, workers: int = 1, progress: bool = False) -> Spectrum:
    """Sweep the static field and extract quadratures plus the optimal phase."""
    if plan.axis is not SweepAxis.OMEGA0:
        raise ValueError(f"field_sweep requires axis OMEGA0, got {plan.axis}")
    grid = np.asarray(plan.grid, dtype=float)
    payloads = [
        (plan.system, plan.relax, replace(plan.drive, omega0=float(w)), plan.convergence) for w in grid
    ]
    results = _run_points(payloads, workers, progress)

    n_pts = grid.size
    x = np.full(n_pts, np.nan)
    y = np.full(n_pts, np.nan)
    n_used = np.zeros(n_pts, dtype=int)
    converged = np.zeros(n_pts, dtype=bool)
    trace_err = np.full(n_pts, np.nan)
    failures: dict[int, str] = {}
    for i, result in enumerate(results):
        if result[0] == "error":
            failures[i] = result[1]
            continue
        _, x[i], y[i], n_used[i], converged[i], trace_err[i] = result

    ok = ~np.isnan(x)
    phi_star: float | None = None
    amplitude = 0.0
    x_opt = np.full(n_pts, np.nan)
    if np.any(ok):
        points = [LockinPoint(x=float(a), y=float(b)) for a, b in zip(x[ok], y[ok])]
        try:
            phi_star, amplitude = optimal_phase_amplitude(points)
        except FlatSpectrum:
            phi_star, amplitude = 0.0, float(np.max(x[ok]) - np.min(x[ok]))
        x_opt[ok] = x[ok] * math.cos(phi_star) + y[ok] * math.sin(phi_star)
    return Spectrum(
        plan=plan,
        axis_values=grid,
        x=x,
        y=y,
        x_opt=x_opt,
        n_used=n_used,
        converged=converged,
        trace_err=trace_err,
        phi_star=phi_star,
        peak_to_peak=amplitude,
        failures=failures,
    )


def fm_sweep(plan: SweepPlan, workers: int = 1, progress: bool = False) -> FmCurve:
    """Sweep the modulation frequency; each point is an inner field sweep."""
    if plan.axis is not SweepAxis.F_MOD:
        raise ValueError(f"fm_sweep requires axis F_MOD, got {plan.axis}")
    inner = plan.inner_grid if plan.inner_grid is not None else default_inner_grid(plan.system)
    grid = np.asarray(plan.grid, dtype=float)
    amplitude = np.full(grid.size, np.nan)
    phi_star = np.full(grid.size, np.nan)
    n_used_max = np.zeros(grid.size, dtype=int)
    failures: dict[int, str] = {}
    for i, fm in enumerate(grid):
        inner_plan = replace(
            plan,
            axis=SweepAxis.OMEGA0,
            grid=tuple(inner),
            drive=replace(plan.drive, f_mod=float(fm)),
            inner_grid=None,
        )
        spectrum = field_sweep(inner_plan, workers=workers, progress=False)
        if spectrum.failures:
            failed = ", ".join(f"{k}: {v}" for k, v in sorted(spectrum.failures.items()))
            failures[i] = f"{len(spectrum.failures)} inner point(s) failed ({failed})"
        if spectrum.phi_star is not None:
            amplitude[i] = spectrum.peak_to_peak
            phi_star[i] = spectrum.phi_star
        ok = spectrum.n_used > 0
        n_used_max[i] = int(spectrum.n_used[ok].max()) if np.any(ok) else 0
        if progress:
            print(f"point {i + 1}/{grid.size}", file=sys.stderr, flush=True)
    return FmCurve(
        plan=plan,
        f_mod=grid,
        peak_to_peak=amplitude,
        phi_star=phi_star,
        n_used_max=n_used_max,
        failures=failures,
    )
