"""Periodic steady-state simulation of level-anti-crossing spectra.

The package propagates the density matrix of small spin systems through a
periodically modulated Liouville-von Neumann equation with phenomenological
relaxation and optical pumping, solves for the periodic steady state via the
one-period evolution superoperator, and extracts lock-in quadratures to build
field-sweep spectra and modulation-frequency dependences.
"""

from .liouville import (
    RelaxationSpec,
    coherent_liouvillian,
    liouvillian,
    ordered_product,
    propagator,
    relaxation_superoperator,
    rho_to_vec,
    vec_to_rho,
)
from .lockin import FlatSpectrum, LockinPoint, demodulate, optimal_phase_amplitude, rotate_phase
from .periodic import (
    DriveSpec,
    NoUniqueSteadyState,
    PeriodCache,
    Sampling,
    SteadyStateError,
    TimeTrace,
    bright_population,
    bright_state,
    build_period,
    maximally_mixed,
    period_waveform,
    periodic_steady_state,
    static_steady_state,
    time_trace,
)
from .spinops import SpinSystemSpec, SystemKind, energy_levels, hamiltonian_at, spin_half_operators
from .sweep import (
    ConvergedPoint,
    ConvergenceSpec,
    FmCurve,
    Spectrum,
    SweepAxis,
    SweepPlan,
    converge_n,
    default_inner_grid,
    field_sweep,
    fm_sweep,
    lockin_once,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergedPoint",
    "ConvergenceSpec",
    "DriveSpec",
    "FlatSpectrum",
    "FmCurve",
    "LockinPoint",
    "NoUniqueSteadyState",
    "PeriodCache",
    "RelaxationSpec",
    "Sampling",
    "Spectrum",
    "SpinSystemSpec",
    "SteadyStateError",
    "SweepAxis",
    "SweepPlan",
    "SystemKind",
    "TimeTrace",
    "bright_population",
    "bright_state",
    "build_period",
    "coherent_liouvillian",
    "converge_n",
    "default_inner_grid",
    "demodulate",
    "energy_levels",
    "field_sweep",
    "fm_sweep",
    "hamiltonian_at",
    "liouvillian",
    "lockin_once",
    "maximally_mixed",
    "optimal_phase_amplitude",
    "ordered_product",
    "period_waveform",
    "periodic_steady_state",
    "propagator",
    "relaxation_superoperator",
    "rho_to_vec",
    "rotate_phase",
    "spin_half_operators",
    "static_steady_state",
    "time_trace",
    "vec_to_rho",
]
