"""Spin operators, model Hamiltonians and static energy levels.

The simulator covers three model systems: a single electron spin 1/2, and an
electron coupled to one nuclear spin 1/2 either by an isotropic scalar
coupling or by a point-dipolar coupling.  All coupling strengths, fields and
rates are angular frequencies in a common dimensionless unit system; the only
place a 2*pi appears is in the time argument of the field modulation.

Basis conventions (fixed throughout the package):
  dim 2:  |alpha>, |beta>           (electron Sz = +1/2 is the bright state)
  dim 4:  |alpha,up>, |alpha,down>, |beta,up>, |beta,down>
          (electron factor first, nucleus second)
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class SystemKind(enum.Enum):
    """Which model spin system to build."""

    SINGLE_SPIN = "single_spin"
    TWO_SPIN_ISOTROPIC = "two_spin_isotropic"
    TWO_SPIN_DIPOLAR = "two_spin_dipolar"


@dataclass(frozen=True)
class SpinSystemSpec:
    """Spin system and its coupling parameters.

    Parameters irrelevant to ``kind`` must stay at zero: ``a_iso`` applies to
    the isotropic two-spin system only, ``d_dd``/``theta_dd`` to the dipolar
    one.  ``v_perturbation`` (a transverse Sx term) is accepted for every
    kind.  ``theta_dd`` is the polar angle, in radians, between the
    inter-spin unit vector and the z axis; the azimuth is fixed to the x-z
    plane, which at zero transverse static field is a pure gauge choice.
    """

    kind: SystemKind
    v_perturbation: float = 0.0
    a_iso: float = 0.0
    d_dd: float = 0.0
    theta_dd: float = 0.0

    def __post_init__(self) -> None:
        for name in ("v_perturbation", "a_iso", "d_dd", "theta_dd"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.kind is not SystemKind.TWO_SPIN_ISOTROPIC and self.a_iso != 0.0:
            raise ValueError(f"a_iso is only meaningful for {SystemKind.TWO_SPIN_ISOTROPIC.value}")
        if self.kind is not SystemKind.TWO_SPIN_DIPOLAR:
            if self.d_dd != 0.0 or self.theta_dd != 0.0:
                raise ValueError(f"d_dd/theta_dd are only meaningful for {SystemKind.TWO_SPIN_DIPOLAR.value}")
        elif not 0.0 <= self.theta_dd <= math.pi:
            raise ValueError(f"theta_dd must lie in [0, pi], got {self.theta_dd!r}")

    @property
    def dim(self) -> int:
        """Hilbert-space dimension (2 for the single spin, 4 otherwise)."""
        return 2 if self.kind is SystemKind.SINGLE_SPIN else 4


def spin_half_operators() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the 2x2 spin-1/2 operators (Sx, Sy, Sz), i.e. halved Paulis."""
    sx = 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    sy = 0.5 * np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
    sz = 0.5 * np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    return sx, sy, sz


def _two_spin_operators() -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Electron and nuclear vector operators on the 4-dim product space."""
    ident = np.eye(2, dtype=complex)
    single = spin_half_operators()
    s_ops = [np.kron(op, ident) for op in single]
    i_ops = [np.kron(ident, op) for op in single]
    return s_ops, i_ops


def hamiltonian_at(system: SpinSystemSpec, omega_inst: float) -> np.ndarray:
    """Hamiltonian at one instantaneous Zeeman frequency.

    ``omega_inst`` is the instantaneous electron Zeeman angular frequency,
    e.g. ``omega0 + omega1*cos(2*pi*f_mod*t)`` for the modulated field; this
    function itself is time-agnostic.  The nuclear Zeeman interaction is
    neglected.  Returns a dense Hermitian ``(dim, dim)`` complex matrix.
    """
    if not math.isfinite(omega_inst):
        raise ValueError(f"omega_inst must be finite, got {omega_inst!r}")
    v = system.v_perturbation
    if system.kind is SystemKind.SINGLE_SPIN:
        sx, _, sz = spin_half_operators()
        return omega_inst * sz + v * sx

    s_ops, i_ops = _two_spin_operators()
    h = omega_inst * s_ops[2] + v * s_ops[0]
    if system.kind is SystemKind.TWO_SPIN_ISOTROPIC:
        scalar = sum(s @ i for s, i in zip(s_ops, i_ops))
        return h + system.a_iso * scalar
    # Dipolar: D * (3 (S.n)(I.n) - S.I) with n = (sin theta, 0, cos theta).
    n = (math.sin(system.theta_dd), 0.0, math.cos(system.theta_dd))
    s_n = sum(c * op for c, op in zip(n, s_ops))
    i_n = sum(c * op for c, op in zip(n, i_ops))
    scalar = sum(s @ i for s, i in zip(s_ops, i_ops))
    return h + system.d_dd * (3.0 * (s_n @ i_n) - scalar)


def energy_levels(system: SpinSystemSpec, omega0_grid) -> np.ndarray:
    """Sorted eigenvalues of the static Hamiltonian over a field grid.

    Returns an array of shape ``(len(grid), dim)`` with eigenvalues sorted
    ascending per grid point.  No continuity of level indices along the grid
    is implied; consumers must treat each row independently.
    """
    grid = np.asarray(omega0_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("omega0_grid must be a non-empty 1-d sequence")
    if np.any(np.diff(grid) < 0):
        raise ValueError("omega0_grid must be sorted ascending")
    levels = np.empty((grid.size, system.dim), dtype=float)
    for i, omega in enumerate(grid):
        levels[i] = np.linalg.eigvalsh(hamiltonian_at(system, omega))
    return levels
