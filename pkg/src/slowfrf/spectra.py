"""DFT machinery, frequency grids, decimation and aliasing.

Conventions used throughout the package:

* the forward DFT is unscaled, ``X[k] = sum_n x[n] exp(-2j*pi*k*n/L)``;
* the inverse carries the ``1/L`` factor;
* spectra are indexed circularly, bin ``k`` means ``k mod L``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FrequencyGrid",
    "Spectrum",
    "dft",
    "idft",
    "frequency_grid_values",
    "downsample",
    "alias_spectrum",
    "gather_window",
]


@dataclass(frozen=True)
class FrequencyGrid:
    """Fast/slow sampling grid of one identification experiment.

    Parameters
    ----------
    M : int
        Number of slow-rate samples in the record.
    F : int
        Downsampling factor, ``Tsl = F * Tsh``.
    Tsh : float
        Fast sampling time in seconds.
    """

    M: int
    F: int
    Tsh: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        if int(self.F) != self.F or self.F < 1:
            raise ValueError(f"F must be a positive integer, got {self.F!r}")
        if not self.Tsh > 0:
            raise ValueError(f"Tsh must be positive, got {self.Tsh!r}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "F", int(self.F))
        object.__setattr__(self, "Tsh", float(self.Tsh))

    @classmethod
    def from_rates(cls, fs_fast: float, F: int, duration: float) -> "FrequencyGrid":
        """Build a grid from the fast rate (Hz), factor and record length (s)."""
        n = fs_fast * duration
        N = int(round(n))
        if abs(n - N) > 1e-9 * max(1.0, abs(n)):
            raise ValueError(f"fs_fast * duration = {n} is not an integer")
        if N % F:
            raise ValueError(f"F={F} does not divide N={N}")
        return cls(M=N // F, F=F, Tsh=1.0 / fs_fast)

    @property
    def N(self) -> int:
        return self.M * self.F

    @property
    def Tsl(self) -> float:
        return self.F * self.Tsh

    @property
    def fs_fast(self) -> float:
        return 1.0 / self.Tsh

    @property
    def fs_slow(self) -> float:
        return 1.0 / self.Tsl

    @property
    def resolution_hz(self) -> float:
        return 1.0 / (self.N * self.Tsh)

    def omega(self, k) -> np.ndarray:
        """Frequency in rad/s of (possibly non-integer) bin ``k``."""
        return 2 * np.pi * np.asarray(k, dtype=float) / (self.N * self.Tsh)

    def hz(self, k) -> np.ndarray:
        return np.asarray(k, dtype=float) / (self.N * self.Tsh)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """DFT coefficients of a finite record, tagged with their rate.

    Indexing with :meth:`at` is circular.  The object also behaves as an
    array through ``np.asarray(spectrum)``.
    """

    values: np.ndarray
    rate: str = "fast"

    def __post_init__(self):
        if self.rate not in ("fast", "slow"):
            raise ValueError(f"rate must be 'fast' or 'slow', got {self.rate!r}")
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("spectrum values must be a non-empty 1-D sequence")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def at(self, k):
        """Coefficient(s) at bin(s) ``k`` taken modulo the record length."""
        return self.values[np.mod(k, self.values.size)]


def _as_1d(x, name="signal") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if x.size == 0:
        raise ValueError(f"{name} must not be empty")
    return x


def dft(signal, rate: str = "fast") -> Spectrum:
    """Unscaled DFT of a finite record (any length, including non powers of two)."""
    x = _as_1d(signal)
    return Spectrum(np.fft.fft(x), rate=rate)


def idft(spectrum) -> np.ndarray:
    """Inverse of :func:`dft`, including the ``1/L`` scaling. Returns complex samples."""
    X = _as_1d(np.asarray(spectrum), "spectrum")
    return np.fft.ifft(X)


def frequency_grid_values(grid: FrequencyGrid, hz: bool = False) -> np.ndarray:
    """Frequencies of bins ``0..N-1``; rad/s by default, Hz with ``hz=True``."""
    k = np.arange(grid.N)
    return grid.hz(k) if hz else grid.omega(k)


def _check_factor(n: int, F: int) -> int:
    if int(F) != F or F < 1:
        raise ValueError(f"downsampling factor must be a positive integer, got {F!r}")
    if n % F:
        raise ValueError(f"F={F} does not divide the record length {n}")
    return n // int(F)


def downsample(signal, F: int) -> np.ndarray:
    """Keep every ``F``-th sample, starting with the first: ``out[m] = x[m*F]``."""
    x = _as_1d(signal)
    _check_factor(x.size, F)
    return x[:: int(F)].copy()


def alias_spectrum(fast, F: int) -> Spectrum:
    """Slow-rate spectrum of a decimated record, computed in the frequency domain.

    ``out[k] = (1/F) * sum_f fast[k + M*f]`` for ``k = 0..M-1``, which equals
    ``dft(downsample(x, F))`` when ``fast = dft(x)``.
    """
    X = _as_1d(np.asarray(fast), "spectrum").astype(complex)
    M = _check_factor(X.size, F)
    return Spectrum(X.reshape(int(F), M).sum(axis=0) / F, rate="slow")


def gather_window(spectrum, k: int, nw: int) -> np.ndarray:
    """Values at bins ``k-nw .. k+nw`` with circular wrap-around."""
    X = _as_1d(np.asarray(spectrum), "spectrum")
    if nw < 0:
        raise ValueError("window half-width must be non-negative")
    if 2 * nw + 1 > X.size:
        raise ValueError(f"window of {2 * nw + 1} bins exceeds record length {X.size}")
    return X[np.mod(np.arange(k - nw, k + nw + 1), X.size)]
