"""Lock-in quadrature extraction, phase rotation and line amplitudes.

Quadratures follow the 1/T normalization: a pure cosine waveform of
amplitude ``a`` demodulates to ``X = a/2``.  The quadrature rule is the
uniform-grid Riemann sum tied to the propagation grid, which for a smooth
periodic waveform converges spectrally, so no higher-order scheme is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


class FlatSpectrum(ValueError):
    """Phase optimization over a spectrum with no signal at any phase."""


@dataclass(frozen=True)
class LockinPoint:
    """Cosine/sine quadratures at one operating point."""

    x: float
    y: float
    omega0: float | None = None
    f_mod: float | None = None

    @property
    def magnitude(self) -> float:
        return math.hypot(self.x, self.y)


def demodulate(population_waveform, f_mod: float | None = None) -> LockinPoint:
    """Quadratures of a one-period waveform sampled on the propagation grid.

    ``population_waveform[k]`` must be the signal at ``t_k = k*T/N``
    (``k = 0 .. N-1``) for one full period.  ``f_mod`` is attached to the
    result as metadata; the quadrature itself only depends on the N samples.
    """
    wave = np.asarray(population_waveform, dtype=float)
    if wave.ndim != 1 or wave.size < 4:
        raise ValueError(f"waveform must be 1-d with at least 4 samples, got shape {wave.shape}")
    phase = 2.0 * np.pi * np.arange(wave.size) / wave.size
    x = float(np.mean(wave * np.cos(phase)))
    y = float(np.mean(wave * np.sin(phase)))
    return LockinPoint(x=x, y=y, f_mod=f_mod)


def rotate_phase(point: LockinPoint, phi: float) -> float:
    """In-phase component after rotating the detection phase by ``phi``."""
    if not math.isfinite(phi):
        raise ValueError(f"phi must be finite, got {phi!r}")
    return point.x * math.cos(phi) + point.y * math.sin(phi)


def with_omega0(point: LockinPoint, omega0: float) -> LockinPoint:
    """Attach the operating field to a lock-in point."""
    return replace(point, omega0=omega0)


def _peak_to_peak(xs: np.ndarray, ys: np.ndarray, phi) -> np.ndarray:
    rotated = np.multiply.outer(np.cos(phi), xs) + np.multiply.outer(np.sin(phi), ys)
    return rotated.max(axis=-1) - rotated.min(axis=-1)


def optimal_phase_amplitude(spectrum) -> tuple[float, float]:
    """Detection phase maximizing the peak-to-peak amplitude of a spectrum.

    ``spectrum`` is a sequence of :class:`LockinPoint` over the sweep axis.
    The peak-to-peak amplitude ``max X' - min X'`` is pi-periodic in the
    phase; a 360-point coarse scan over ``[0, pi)`` brackets the maximum and
    golden-section search refines it to 1e-6 rad.  Raises
    :class:`FlatSpectrum` when no phase yields an amplitude above 1e-14.
    """
    points = list(spectrum)
    xs = np.array([p.x for p in points], dtype=float)
    ys = np.array([p.y for p in points], dtype=float)
    if xs.size == 0:
        raise FlatSpectrum("empty spectrum")

    n_coarse = 360
    coarse = np.arange(n_coarse) * (math.pi / n_coarse)
    amps = _peak_to_peak(xs, ys, coarse)
    best = int(np.argmax(amps))
    if amps[best] < 1e-14:
        raise FlatSpectrum(f"peak-to-peak amplitude below 1e-14 at all phases (max {amps[best]:.3e})")

    lo = coarse[best] - math.pi / n_coarse
    hi = coarse[best] + math.pi / n_coarse
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _peak_to_peak(xs, ys, c)
    fd = _peak_to_peak(xs, ys, d)
    while b - a > 1e-6:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _peak_to_peak(xs, ys, c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _peak_to_peak(xs, ys, d)
    phi_star = 0.5 * (a + b) % math.pi
    return float(phi_star), float(_peak_to_peak(xs, ys, phi_star))
