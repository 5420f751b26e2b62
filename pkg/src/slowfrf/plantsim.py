"""Discrete-time LTI plant and noise simulation.

Stands in for a physical rig: a rational plant ``G`` runs at the fast rate,
its output is decimated, and coloured noise ``H e`` is added at the slow
rate.  ``true_frf`` is the exact frequency response used as an oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .spectra import downsample

__all__ = [
    "PlantModel",
    "NoiseModel",
    "simulate_lti",
    "simulate_steady_state",
    "steady_state_periods",
    "true_frf",
    "slow_sample",
    "add_noise",
]


def _normalize(num, den):
    num = np.atleast_1d(np.asarray(num, dtype=float))
    den = np.atleast_1d(np.asarray(den, dtype=float))
    if num.ndim != 1 or den.ndim != 1 or num.size == 0 or den.size == 0:
        raise ValueError("coefficients must be non-empty 1-D sequences")
    if den[0] == 0:
        raise ValueError("leading denominator coefficient must be nonzero")
    return num / den[0], den / den[0]


def _poles(den) -> np.ndarray:
    # den is in powers of z^-1; poles are roots of z^n + a1 z^(n-1) + ...
    den = np.trim_zeros(den, "b")
    return np.roots(den) if den.size > 1 else np.empty(0, dtype=complex)


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Rational transfer function ``num(z^-1) / den(z^-1)`` at the fast rate."""

    num: np.ndarray
    den: np.ndarray
    Tsh: float = 1.0

    def __post_init__(self):
        num, den = _normalize(self.num, self.den)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "Tsh", float(self.Tsh))

    @classmethod
    def resonant(cls, fs: float, freqs_hz, dampings, dc_gain: float = 1.0,
                 delay: int = 1) -> "PlantModel":
        """Cascade of lightly or heavily damped second-order resonances.

        Each pair of poles is ``exp(s*Tsh)`` with ``s = -zeta*wn +/- j*wn*sqrt(1-zeta^2)``.
        The numerator is a pure ``delay``-sample delay scaled to ``dc_gain``.
        """
        Tsh = 1.0 / fs
        den = np.array([1.0])
        for fn, zeta in zip(freqs_hz, dampings):
            if not 0 < zeta < 1:
                raise ValueError(f"damping must lie in (0, 1), got {zeta}")
            wn = 2 * np.pi * fn
            p = np.exp((-zeta * wn + 1j * wn * np.sqrt(1 - zeta**2)) * Tsh)
            den = np.convolve(den, [1.0, -2 * p.real, abs(p) ** 2])
        num = np.zeros(delay + 1)
        num[delay] = dc_gain * den.sum()
        return cls(num, den, Tsh)

    @property
    def poles(self) -> np.ndarray:
        return _poles(self.den)

    @property
    def max_pole_radius(self) -> float:
        p = self.poles
        return float(np.max(np.abs(p))) if p.size else 0.0

    def is_stable(self) -> bool:
        return self.max_pole_radius < 1.0


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Noise filter ``H`` at the slow rate driven by white Gaussian noise.

    Either ``sigma`` (std of the white driving noise) is given directly, or
    it is left at zero for noise-free simulations.
    """

    num: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    den: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        num, den = _normalize(self.num, self.den)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        if self.sigma < 0:
            raise ValueError("noise standard deviation must be non-negative")

    def is_stable(self) -> bool:
        p = _poles(self.den)
        return bool(p.size == 0 or np.max(np.abs(p)) < 1.0)


def simulate_lti(model: PlantModel, u, initial_state=None) -> np.ndarray:
    """Run the difference equation ``den * y = num * u``.

    ``initial_state`` follows :func:`scipy.signal.lfilter`'s ``zi`` layout
    (length ``max(len(num), len(den)) - 1``); ``None`` means zero state.
    """
    u = np.asarray(u)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("input must be a non-empty 1-D record")
    if initial_state is None:
        return signal.lfilter(model.num, model.den, u)
    y, _ = signal.lfilter(model.num, model.den, u, zi=np.asarray(initial_state))
    return y


def steady_state_periods(model: PlantModel, period: int, level: float = 1e-12) -> int:
    """Number of leading periods to discard so the transient decays below ``level``."""
    rho = model.max_pole_radius
    if rho >= 1.0:
        raise ValueError(f"steady state needs a stable model (max pole radius {rho:.6g})")
    if rho == 0.0:
        return 1
    return max(1, math.ceil(math.log(level) / math.log(rho) / period))


def simulate_steady_state(model: PlantModel, u_period) -> np.ndarray:
    """One period of the periodic steady-state response to a periodic input."""
    u_period = np.asarray(u_period)
    n = u_period.size
    P = steady_state_periods(model, n)
    y = simulate_lti(model, np.tile(u_period, P + 1))
    return y[P * n:]


def true_frf(model: PlantModel, omega) -> np.ndarray:
    """Exact response ``G(exp(j*omega*Tsh))`` of the rational model."""
    omega = np.asarray(omega, dtype=float)
    zinv = np.exp(-1j * omega * model.Tsh)
    num = np.polyval(model.num[::-1], zinv)
    den = np.polyval(model.den[::-1], zinv)
    scale = np.sum(np.abs(model.den))
    hit = np.abs(den) <= 1e-14 * scale
    if np.any(hit):
        where = np.atleast_1d(omega)[np.atleast_1d(hit)]
        raise ZeroDivisionError(f"frequency response evaluated on a pole at omega={where[:5]} rad/s")
    return num / den


def slow_sample(y_h, F: int) -> np.ndarray:
    """Slow sensor: same contract as :func:`slowfrf.spectra.downsample`."""
    return downsample(y_h, F)


def add_noise(y_l, noise: NoiseModel):
    """Add ``H e`` (zero initial state, ``e ~ N(0, sigma^2)`` i.i.d.) to a slow record.

    Returns
    -------
    noisy : ndarray
    v : ndarray
        The realization that was added.
    """
    y_l = np.asarray(y_l, dtype=float)
    if noise.sigma == 0:
        return y_l.copy(), np.zeros_like(y_l)
    e = np.random.default_rng(noise.seed).standard_normal(y_l.size) * noise.sigma
    v = signal.lfilter(noise.num, noise.den, e)
    return y_l + v, v
