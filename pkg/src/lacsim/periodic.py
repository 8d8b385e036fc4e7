"""Propagation over one modulation period and the periodic steady state.

One modulation period ``T = 1/f_mod`` is split into ``n_steps`` equal
intervals; within each interval the generator is frozen at a sampling point
(interval midpoint by default, left endpoint as the literal first-order
alternative) and exponentiated.  The ordered product of the step propagators
is the one-period evolution superoperator whose fixed point, normalized to
unit trace, is the periodic steady state.

The cosine drive takes each field value twice per period, and the sampling
grids here are built to mirror exactly in floating point, so only the
distinct field values are exponentiated.  The distinct step propagators are
kept in memory when they fit a configurable budget and recomputed in chunks
otherwise; either way results are bitwise identical.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .liouville import (
    RelaxationSpec,
    coherent_liouvillian,
    expm_stack,
    liouvillian,
    ordered_product,
    relaxation_superoperator,
    rho_to_vec,
    vec_to_rho,
)
from .spinops import SpinSystemSpec, hamiltonian_at

# Memory budget for cached step propagators; above it they are streamed.
DEFAULT_PROPAGATOR_CACHE_BYTES = 1 << 30
# Steps per chunk when building/streaming propagator stacks.
_STEP_CHUNK = 4096

_FIXED_POINT_TOL = 1e-8
_NULL_SPACE_TOL = 1e-8


class SteadyStateError(RuntimeError):
    """Steady-state solve failed to meet the fixed-point tolerance."""


class NoUniqueSteadyState(SteadyStateError):
    """The one-period fixed point is degenerate (or not trace-normalizable)."""


class Sampling(enum.Enum):
    """Where within each interval the generator is evaluated."""

    MIDPOINT = "midpoint"
    LEFT_ENDPOINT = "left_endpoint"


@dataclass(frozen=True)
class DriveSpec:
    """Static field, cosine modulation and the per-period time grid.

    The instantaneous Zeeman frequency is
    ``omega(t) = omega0 + omega1*cos(2*pi*f_mod*t)`` with period
    ``T = 1/f_mod`` split into ``n_steps`` equal intervals.
    """

    omega0: float
    omega1: float
    f_mod: float
    n_steps: int
    sampling: Sampling = Sampling.MIDPOINT

    def __post_init__(self) -> None:
        for name in ("omega0", "omega1", "f_mod"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.f_mod <= 0.0:
            raise ValueError(f"f_mod must be positive, got {self.f_mod!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")
        if not isinstance(self.sampling, Sampling):
            raise ValueError(f"sampling must be a Sampling value, got {self.sampling!r}")

    @property
    def period(self) -> float:
        return 1.0 / self.f_mod

    @property
    def dt(self) -> float:
        return self.period / self.n_steps

    def omega_at(self, t) -> np.ndarray:
        """Instantaneous Zeeman frequency at time(s) ``t``."""
        return self.omega0 + self.omega1 * np.cos(2.0 * math.pi * self.f_mod * np.asarray(t))

    def step_cosines(self) -> np.ndarray:
        """Modulation cosine at each interval's sampling point.

        Built half-period-first and mirrored so that time-reversed pairs are
        bitwise equal; the per-period propagator cache keys on these values.
        """
        n = self.n_steps
        if self.sampling is Sampling.MIDPOINT:
            half = np.cos(2.0 * np.pi * (np.arange(n // 2) + 0.5) / n)
            if n % 2:
                return np.concatenate([half, [-1.0], half[::-1]])
            return np.concatenate([half, half[::-1]])
        rising = np.cos(2.0 * np.pi * np.arange(1, (n - 1) // 2 + 1) / n)
        middle = [] if n % 2 else [-1.0]
        return np.concatenate([[1.0], rising, middle, rising[::-1]])

    def step_omegas(self) -> np.ndarray:
        """Instantaneous Zeeman frequency at each interval's sampling point."""
        return self.omega0 + self.omega1 * self.step_cosines()


@dataclass
class PeriodCache:
    """Step propagators for one modulation period and their ordered product.

    ``monodromy`` is ``U_{N-1} @ ... @ U_0``; ``step_propagator(k)`` returns
    ``U_k``.  Distinct propagators are stored deduplicated by field value
    (``distinct_propagators[step_to_distinct[k]]``); when they exceeded the
    memory budget at build time they are recomputed on demand instead.
    Immutable after :func:`build_period` returns.
    """

    system: SpinSystemSpec
    relax: RelaxationSpec
    drive: DriveSpec
    l_static: np.ndarray
    l_zeeman: np.ndarray
    step_omegas: np.ndarray
    distinct_omegas: np.ndarray
    step_to_distinct: np.ndarray
    distinct_propagators: np.ndarray | None
    monodromy: np.ndarray = field(init=False)

    @property
    def dim(self) -> int:
        return self.system.dim

    @property
    def n_steps(self) -> int:
        return self.drive.n_steps

    def step_propagator(self, k: int) -> np.ndarray:
        """Propagator of interval ``k`` (0-based, time order)."""
        if not 0 <= k < self.n_steps:
            raise IndexError(f"step index {k} out of range [0, {self.n_steps})")
        if self.distinct_propagators is not None:
            return self.distinct_propagators[self.step_to_distinct[k]]
        gen = self.l_static + self.step_omegas[k] * self.l_zeeman
        return expm_stack(gen * self.drive.dt)

    def _iter_step_stacks(self, chunk: int = _STEP_CHUNK):
        """Yield consecutive ``(m, dim**2, dim**2)`` step-propagator stacks."""
        dt = self.drive.dt
        for k0 in range(0, self.n_steps, chunk):
            k1 = min(k0 + chunk, self.n_steps)
            if self.distinct_propagators is not None:
                yield self.distinct_propagators[self.step_to_distinct[k0:k1]]
            else:
                gens = self.l_static + self.step_omegas[k0:k1, None, None] * self.l_zeeman
                yield expm_stack(gens * dt)


def build_period(
    system: SpinSystemSpec,
    relax: RelaxationSpec,
    drive: DriveSpec,
    *,
    cache_bytes: int = DEFAULT_PROPAGATOR_CACHE_BYTES,
) -> PeriodCache:
    """Exponentiate one period's step generators and form the monodromy."""
    dim = system.dim
    d2 = dim * dim
    relaxation = relaxation_superoperator(relax, system)
    h0 = hamiltonian_at(system, 0.0)
    h_unit = hamiltonian_at(system, 1.0)
    l_static = coherent_liouvillian(h0) + relaxation
    l_zeeman = coherent_liouvillian(h_unit - h0)  # Zeeman term enters linearly

    omegas = drive.step_omegas()
    distinct, inverse = np.unique(omegas, return_inverse=True)
    store = distinct.size * d2 * d2 * 16 <= cache_bytes
    if store:
        u_distinct = np.empty((distinct.size, d2, d2), dtype=complex)
        for i0 in range(0, distinct.size, _STEP_CHUNK):
            i1 = min(i0 + _STEP_CHUNK, distinct.size)
            gens = l_static + distinct[i0:i1, None, None] * l_zeeman
            u_distinct[i0:i1] = expm_stack(gens * drive.dt)
        if not np.all(np.isfinite(u_distinct)):
            raise RuntimeError("step propagator exponential produced non-finite entries")
    else:
        u_distinct = None

    cache = PeriodCache(
        system=system,
        relax=relax,
        drive=drive,
        l_static=l_static,
        l_zeeman=l_zeeman,
        step_omegas=omegas,
        distinct_omegas=distinct,
        step_to_distinct=inverse,
        distinct_propagators=u_distinct,
    )
    mono = np.eye(d2, dtype=complex)
    for stack in cache._iter_step_stacks():
        mono = ordered_product(stack) @ mono
    cache.monodromy = mono
    return cache


def _trace_indices(dim: int) -> np.ndarray:
    return np.arange(dim) * (dim + 1)


def bright_population(rho: np.ndarray, system: SpinSystemSpec) -> float:
    """Bright-state population: electron-alpha population, nuclear-summed."""
    rho = np.asarray(rho)
    if system.dim == 2:
        return float(rho[0, 0].real)
    return float((rho[0, 0] + rho[1, 1]).real)


def bright_state(system: SpinSystemSpec) -> np.ndarray:
    """Unit-trace density matrix fully polarized in the bright electron state."""
    dim = system.dim
    rho = np.zeros((dim, dim), dtype=complex)
    if dim == 2:
        rho[0, 0] = 1.0
    else:
        rho[0, 0] = rho[1, 1] = 0.5
    return rho


def maximally_mixed(system: SpinSystemSpec) -> np.ndarray:
    """Identity/dim density matrix."""
    dim = system.dim
    return np.eye(dim, dtype=complex) / dim


def validate_density_matrix(rho: np.ndarray, dim: int, *, tol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dim, dim):
        raise ValueError(f"density matrix must have shape ({dim}, {dim}), got {rho.shape}")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"density matrix trace deviates from 1 by {abs(np.trace(rho) - 1.0):.3e}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian within tolerance")
    return rho


def _solve_null_vector(m: np.ndarray, dim: int, pivot_row: int) -> np.ndarray:
    """Unit-trace null vector of ``m`` via trace-row replacement, SVD fallback.

    The null-space dimension is checked first (the matrices here are at most
    16x16, so a full SVD is cheap); a degenerate null space cannot be
    resolved by the trace constraint alone and raises
    :class:`NoUniqueSteadyState`.  Otherwise one row of the rank-deficient
    system ``m v = 0`` is replaced by the trace constraint
    ``sum_i v[i*dim+i] = 1`` and the dense system solved; if the residual
    misses the fixed-point tolerance the SVD null vector is used instead.
    """
    d2 = dim * dim
    if not 0 <= pivot_row < d2:
        raise ValueError(f"pivot_row must lie in [0, {d2}), got {pivot_row}")
    tr_idx = _trace_indices(dim)
    _, sing, vh = np.linalg.svd(m)
    null_count = int(np.sum(sing < _NULL_SPACE_TOL))
    if null_count > 1:
        raise NoUniqueSteadyState(
            f"null space of the fixed-point system has dimension {null_count} "
            f"at tolerance {_NULL_SPACE_TOL:g}"
        )
    a = m.copy()
    a[pivot_row, :] = 0.0
    a[pivot_row, tr_idx] = 1.0
    b = np.zeros(d2, dtype=complex)
    b[pivot_row] = 1.0
    try:
        v = np.linalg.solve(a, b)
        residual = np.max(np.abs(m @ v))
    except np.linalg.LinAlgError:
        v, residual = None, np.inf
    if residual >= _FIXED_POINT_TOL:
        v = vh[-1].conj()
        trace = v[tr_idx].sum()
        if abs(trace) < 1e-10:
            raise NoUniqueSteadyState("null vector has (near-)zero trace; cannot normalize")
        v = v / trace
        residual = np.max(np.abs(m @ v))
        if residual >= _FIXED_POINT_TOL:
            raise SteadyStateError(f"fixed-point residual {residual:.3e} exceeds {_FIXED_POINT_TOL:g}")
    return v


def periodic_steady_state(cache: PeriodCache, pivot_row: int | None = None) -> np.ndarray:
    """Density matrix satisfying ``U rho = rho`` with unit trace.

    ``pivot_row`` selects which redundant equation is replaced by the trace
    constraint; by default the last population element.  The result is
    independent of this choice for a non-degenerate fixed point.
    """
    dim = cache.dim
    d2 = dim * dim
    if pivot_row is None:
        pivot_row = d2 - 1
    m = cache.monodromy - np.eye(d2, dtype=complex)
    v = _solve_null_vector(m, dim, pivot_row)
    rho = vec_to_rho(v, dim)
    rho = 0.5 * (rho + rho.conj().T)  # solver noise only; fixed point is Hermitian
    rho /= np.trace(rho).real
    residual = np.max(np.abs(m @ rho_to_vec(rho)))
    if residual >= _FIXED_POINT_TOL:
        raise SteadyStateError(f"fixed-point residual {residual:.3e} exceeds {_FIXED_POINT_TOL:g}")
    return rho


def static_steady_state(system: SpinSystemSpec, relax: RelaxationSpec, omega0: float) -> np.ndarray:
    """Steady state of the time-independent generator at fixed field."""
    dim = system.dim
    l_total = liouvillian(system, relax, omega0)
    v = _solve_null_vector(l_total, dim, dim * dim - 1)
    rho = vec_to_rho(v, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    return rho


def period_waveform(cache: PeriodCache, rho0: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Propagate ``rho0`` through one period, sampling the bright population.

    Returns ``(bright, rho_final_vec, trace_err)`` where ``bright[k]`` is the
    bright-state population at ``t_k = k*dt`` (``k = 0 .. n_steps-1``),
    ``rho_final_vec`` is the vectorized state after the full period, and
    ``trace_err`` is the largest observed deviation of the trace from 1
    (sampled along the trajectory, every step for short periods).
    """
    n = cache.n_steps
    dim = cache.dim
    v = rho_to_vec(rho0).copy() if np.asarray(rho0).ndim == 2 else np.asarray(rho0, dtype=complex).copy()
    bright = np.empty(n)
    tr_idx = _trace_indices(dim)
    stride = 1 if n <= 65536 else 61
    single = dim == 2
    trace_err = abs(v[tr_idx].sum() - 1.0)
    k = 0
    for stack in cache._iter_step_stacks():
        for u in stack:
            bright[k] = v[0].real if single else (v[0] + v[dim + 1]).real
            v = u @ v
            k += 1
            if k % stride == 0:
                err = abs(v[tr_idx].sum() - 1.0)
                if err > trace_err:
                    trace_err = err
    err = abs(v[tr_idx].sum() - 1.0)
    trace_err = max(trace_err, err)
    return bright, v, float(trace_err)


@dataclass
class TimeTrace:
    """Stepwise record of a multi-period propagation."""

    t: np.ndarray
    field: np.ndarray
    population: np.ndarray


def time_trace(
    system: SpinSystemSpec,
    relax: RelaxationSpec,
    drive: DriveSpec,
    rho0: np.ndarray,
    n_periods: int,
) -> TimeTrace:
    """Propagate ``rho0`` over ``n_periods`` periods, recording every step.

    Rows are emitted at ``t = 0`` and after every step, i.e.
    ``n_periods*n_steps + 1`` samples of (time, instantaneous field,
    bright population).
    """
    if n_periods < 1:
        raise ValueError(f"n_periods must be >= 1, got {n_periods}")
    dim = system.dim
    rho0 = validate_density_matrix(rho0, dim)
    cache = build_period(system, relax, drive)
    n = drive.n_steps
    total = n_periods * n
    pops = np.empty(total + 1)
    v = rho_to_vec(rho0).copy()
    single = dim == 2
    pops[0] = v[0].real if single else (v[0] + v[dim + 1]).real
    k = 0
    for _ in range(n_periods):
        for stack in cache._iter_step_stacks():
            for u in stack:
                v = u @ v
                k += 1
                pops[k] = v[0].real if single else (v[0] + v[dim + 1]).real
    t = np.arange(total + 1) * drive.dt
    return TimeTrace(t=t, field=drive.omega_at(t), population=pops)
