"""Liouville-space generators (coherent + relaxation + pumping) and propagators.

Vectorization convention, fixed and relied upon by every superoperator in
this package: the density matrix element ``rho[i, j]`` maps to component
``i*dim + j`` of the column vector (row-major stacking), so
``vec(rho) == rho.reshape(-1)``.  A superoperator is a dense complex
``(dim**2, dim**2)`` matrix acting on such vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .spinops import SpinSystemSpec, hamiltonian_at

# Chunk size (in matrices) for batched matrix exponentials; bounds temporaries.
_EXPM_CHUNK = 4096


@dataclass(frozen=True)
class RelaxationSpec:
    """Phenomenological relaxation and optical-pumping rates.

    ``r1`` equalizes the electron populations within each nuclear manifold,
    ``r2`` damps every coherence whose electron (bra/ket) indices differ, and
    ``pump_j`` moves population from the dark to the bright electron state
    while preserving the nuclear state.  ``pump_damps_coherence`` adds the
    kinetically consistent ``pump_j/2`` decay to electron coherences; purely
    nuclear coherences are never damped.
    """

    r1: float = 0.0
    r2: float = 0.0
    pump_j: float = 0.0
    pump_damps_coherence: bool = True

    def __post_init__(self) -> None:
        for name in ("r1", "r2", "pump_j"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")


def rho_to_vec(rho: np.ndarray) -> np.ndarray:
    """Column-stack a density matrix (row-major convention)."""
    return np.asarray(rho, dtype=complex).reshape(-1)


def vec_to_rho(vec: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`rho_to_vec`."""
    return np.asarray(vec, dtype=complex).reshape(dim, dim)


def coherent_liouvillian(h: np.ndarray) -> np.ndarray:
    """Superoperator of ``-i[H, rho]`` for a Hermitian ``H``."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"Hamiltonian must be square, got shape {h.shape}")
    if np.max(np.abs(h - h.conj().T)) > 1e-9:
        raise ValueError("Hamiltonian is not Hermitian")
    ident = np.eye(h.shape[0], dtype=complex)
    return -1j * (np.kron(h, ident) - np.kron(ident, h.T))


def _electron_index(state: int, dim: int) -> int:
    # 0 = alpha (bright), 1 = beta; the nuclear factor is the fast index.
    return state if dim == 2 else state // 2


def relaxation_superoperator(relax: RelaxationSpec, system: SpinSystemSpec) -> np.ndarray:
    """Relaxation/pumping superoperator for the given system.

    Per nuclear manifold: population equalization at ``r1`` and dark->bright
    pumping at ``pump_j``; every electron-flip coherence decays at
    ``r2`` (+ ``pump_j/2`` when ``pump_damps_coherence``).  Nuclear spin
    relaxation is neglected, so same-electron nuclear coherences stay
    undamped.
    """
    dim = system.dim
    r = np.zeros((dim * dim, dim * dim), dtype=complex)
    manifolds = [(0, 1)] if dim == 2 else [(0, 2), (1, 3)]
    for a, b in manifolds:  # a = bright state, b = dark state of the manifold
        ia, ib = a * dim + a, b * dim + b
        half_r1 = 0.5 * relax.r1
        r[ia, ia] -= half_r1
        r[ia, ib] += half_r1
        r[ib, ib] -= half_r1
        r[ib, ia] += half_r1
        r[ia, ib] += relax.pump_j
        r[ib, ib] -= relax.pump_j
    decay = relax.r2 + (0.5 * relax.pump_j if relax.pump_damps_coherence else 0.0)
    for i in range(dim):
        for j in range(dim):
            if _electron_index(i, dim) != _electron_index(j, dim):
                k = i * dim + j
                r[k, k] -= decay
    return r


def liouvillian(system: SpinSystemSpec, relax: RelaxationSpec, omega_inst: float) -> np.ndarray:
    """Full generator at one instantaneous field: coherent part + relaxation."""
    return coherent_liouvillian(hamiltonian_at(system, omega_inst)) + relaxation_superoperator(relax, system)


def expm_stack(mats: np.ndarray) -> np.ndarray:
    """Matrix exponential of a stack of small dense matrices.

    Thin chunked wrapper around :func:`scipy.linalg.expm` (scaling and
    squaring with Pade approximants), accurate to machine-level relative
    tolerance for the small, well-scaled generators that occur here.
    """
    mats = np.asarray(mats, dtype=complex)
    if mats.ndim == 2:
        return scipy.linalg.expm(mats)
    out = np.empty_like(mats)
    for start in range(0, mats.shape[0], _EXPM_CHUNK):
        stop = start + _EXPM_CHUNK
        out[start:stop] = scipy.linalg.expm(mats[start:stop])
    return out


def propagator(l_total: np.ndarray, dt: float) -> np.ndarray:
    """Step propagator ``exp(L*dt)`` as a dense superoperator."""
    l_total = np.asarray(l_total, dtype=complex)
    if l_total.ndim != 2 or l_total.shape[0] != l_total.shape[1]:
        raise ValueError(f"superoperator must be square, got shape {l_total.shape}")
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValueError(f"dt must be finite and positive, got {dt!r}")
    u = scipy.linalg.expm(l_total * dt)
    if not np.all(np.isfinite(u)):
        raise RuntimeError("matrix exponential produced non-finite entries")
    return u


def ordered_product(mats: np.ndarray) -> np.ndarray:
    """Time-ordered product ``mats[-1] @ ... @ mats[0]`` of a stack.

    Uses a pairwise tree fold: adjacent factors are multiplied in parallel,
    which keeps the ordering exact while replacing a long Python loop with a
    few batched matmuls.
    """
    cur = np.asarray(mats)
    if cur.ndim == 2:
        return cur
    if cur.shape[0] == 0:
        return np.eye(cur.shape[-1], dtype=complex)
    while cur.shape[0] > 1:
        if cur.shape[0] % 2:
            tail = cur[-1:]
            cur = np.concatenate([cur[1:-1:2] @ cur[0:-1:2], tail])
        else:
            cur = cur[1::2] @ cur[0::2]
    return cur[0]
