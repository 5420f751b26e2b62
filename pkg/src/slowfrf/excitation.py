"""Multisine excitation design.

Full-spectrum random-phase multisines drive the multiband local polynomial
estimator; sparse multisines place one excited line per slow-rate bin so that
the aliasing sum collapses to a single term.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .spectra import FrequencyGrid, Spectrum, dft

__all__ = [
    "RNG_ALGORITHM",
    "ExcitationSpec",
    "RoughnessReport",
    "full_spectrum_bins",
    "sparse_multisine_bins",
    "positive_representatives",
    "sparse_excitation",
    "full_excitation",
    "random_phase_multisine",
    "check_roughness",
]

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"


@dataclass(frozen=True)
class ExcitationSpec:
    """What to synthesize: which bins, how loud, which seed.

    ``excited_bins`` are non-negative frequency bins in ``[0, N/2]``; the
    negative-frequency half follows from conjugate symmetry.
    """

    grid: FrequencyGrid
    excited_bins: tuple
    rms: float
    seed: int
    kind: str = "full-spectrum"

    def __post_init__(self):
        bins = tuple(sorted({int(b) for b in self.excited_bins}))
        if not bins:
            raise ValueError("excitation set is empty")
        half = self.grid.N // 2
        bad = [b for b in bins if b < 0 or b > half]
        if bad:
            raise ValueError(f"excited bins outside [0, {half}]: {bad[:10]}")
        if self.kind not in ("full-spectrum", "sparse"):
            raise ValueError(f"unknown excitation kind {self.kind!r}")
        if not self.rms > 0:
            raise ValueError("target rms must be positive")
        object.__setattr__(self, "excited_bins", bins)


@dataclass(frozen=True)
class RoughnessReport:
    ok: bool
    margin: float
    worst_band: int
    worst_pair: tuple


def full_spectrum_bins(grid: FrequencyGrid, include_dc: bool = False,
                       include_nyquist: bool = False) -> tuple:
    """Every bin strictly between DC and the fast Nyquist, optionally with both ends."""
    N = grid.N
    top = (N - 1) // 2
    bins = list(range(1, top + 1))
    if include_dc:
        bins.insert(0, 0)
    if include_nyquist and N % 2 == 0:
        bins.append(N // 2)
    return tuple(bins)


def sparse_multisine_bins(grid: FrequencyGrid) -> tuple:
    """Sparse set ``{j + i(M+1)}`` with ``i in 0..F-1`` and ``j in {0, F, ..., M/2}``.

    Bins are reduced modulo ``N`` and returned sorted.  Every bin of the set
    maps to a different slow-rate bin.
    """
    M, F, N = grid.M, grid.F, grid.N
    if M % 2:
        raise ValueError(f"sparse multisine needs an even slow record length, got M={M}")
    if M // 2 + F - 1 >= M:
        raise ValueError(f"sparse multisine needs M >= 2F, got M={M}, F={F}")
    js = range(0, M // 2 + 1, F)
    bins = sorted({(j + i * (M + 1)) % N for i in range(F) for j in js})
    residues = Counter(b % M for b in bins)
    clash = [b for b in bins if residues[b % M] > 1]
    if clash or len(bins) != F * len(js):
        raise RuntimeError(f"sparse set collides modulo M at bins {clash[:10]}")
    return tuple(bins)


def positive_representatives(bins, N: int) -> tuple:
    """Map bins in ``[0, N)`` to their non-negative frequency twin ``min(k, N-k)``."""
    return tuple(sorted({min(int(b) % N, (N - int(b)) % N) for b in bins}))


def sparse_excitation(grid: FrequencyGrid, rms: float, seed: int) -> ExcitationSpec:
    bins = positive_representatives(sparse_multisine_bins(grid), grid.N)
    return ExcitationSpec(grid, bins, rms, seed, kind="sparse")


def full_excitation(grid: FrequencyGrid, rms: float, seed: int,
                    include_dc: bool = False, include_nyquist: bool = False) -> ExcitationSpec:
    bins = full_spectrum_bins(grid, include_dc, include_nyquist)
    return ExcitationSpec(grid, bins, rms, seed, kind="full-spectrum")


def random_phase_multisine(spec: ExcitationSpec):
    """Synthesize a real flat-amplitude random-phase multisine.

    Phases are drawn uniform on ``[0, 2*pi)``, one per excited bin in
    ascending bin order.  DC and the fast Nyquist line are real, so they get
    amplitude ``+1`` or ``-1`` depending on the sign of ``cos(phase)``.  The
    record is finally scaled to ``spec.rms``.

    Returns
    -------
    x : ndarray
        Real time record of length ``N``.
    X : Spectrum
        Its DFT.
    """
    N = spec.grid.N
    bins = np.asarray(spec.excited_bins, dtype=int)
    if bins.size == 0:
        raise ValueError("excitation set is empty")
    rng = np.random.default_rng(spec.seed)
    phase = rng.uniform(0.0, 2 * np.pi, size=bins.size)
    lines = np.exp(1j * phase)
    real_line = (bins == 0) | (2 * bins == N)
    lines[real_line] = np.where(np.cos(phase[real_line]) >= 0, 1.0, -1.0)

    X = np.zeros(N, dtype=complex)
    X[bins] = lines
    X[(N - bins) % N] = np.conj(lines)
    x = np.fft.ifft(X)
    assert np.max(np.abs(x.imag)) <= 1e-12 * max(1.0, np.max(np.abs(x.real)))
    x = x.real
    x = x * (spec.rms / np.sqrt(np.mean(x * x)))
    return x, dft(x)


def check_roughness(U, grid: FrequencyGrid, nw: int, k: int,
                    floor: float = 1e-12) -> RoughnessReport:
    """Check that input lines differ pairwise inside every aliased window.

    For each band ``i`` the window ``k+r+i*M``, ``r in [-nw, nw]``, is
    inspected; the smallest ``|U(a) - U(b)|`` over distinct bins is the margin.
    """
    U = np.asarray(U)
    N, M = grid.N, grid.M
    r = np.arange(-nw, nw + 1)
    margin, worst_band, worst_pair = np.inf, 0, (0, 0)
    if r.size < 2:
        return RoughnessReport(True, np.inf, 0, (0, 0))
    off = ~np.eye(r.size, dtype=bool)
    for i in range(grid.F):
        w = U[np.mod(k + r + i * M, N)]
        d = np.abs(w[:, None] - w[None, :])
        d = np.where(off, d, np.inf)
        a, b = np.unravel_index(np.argmin(d), d.shape)
        if d[a, b] < margin:
            margin, worst_band, worst_pair = float(d[a, b]), i, (int(r[a]), int(r[b]))
    return RoughnessReport(bool(margin > floor), margin, worst_band, worst_pair)
