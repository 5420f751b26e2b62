"""FRF estimators for fast-sampled inputs and slow-sampled outputs.

Three estimators share the same input convention (fast input spectrum of
length ``N``, slow output spectrum of length ``M = N / F``):

* :func:`estimate_sparse` -- ratio estimate at the lines of a sparse multisine,
  where every slow bin sees exactly one excited fast bin;
* :func:`estimate_frf_lpm` -- multiband local polynomial method, which fits
  ``F`` local polynomial FRF models plus one transient polynomial to each
  window of slow-rate data and so disentangles the aliased bands;
* :func:`etfe_baseline` -- the naive ratio ``Y_l(k mod M) / U_h(k)``.

The local least-squares problems are solved through an SVD of the
transposed regressor instead of the explicit normal equations.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .spectra import FrequencyGrid

__all__ = [
    "LpmConfig",
    "LocalEstimate",
    "FrfEstimate",
    "PointEstimate",
    "RankDeficientError",
    "AliasingWarning",
    "estimate_sparse",
    "build_regression",
    "solve_local",
    "estimate_variance",
    "MultibandLPM",
    "estimate_frf_lpm",
    "classical_lpm",
    "etfe_baseline",
]


class RankDeficientError(np.linalg.LinAlgError):
    """Local regressor is not of full row rank; the input is not rough enough."""


class AliasingWarning(UserWarning):
    """More than one excited fast bin folds onto the same slow bin."""


@dataclass(frozen=True)
class LpmConfig:
    """Settings of the multiband local polynomial method.

    Parameters
    ----------
    R : int
        Polynomial order of the local FRF and transient models.
    nw : int
        Window half-width; each local fit uses ``2*nw + 1`` slow bins.
    F : int
        Downsampling factor (number of aliased bands).
    rank_tol : float
        A window is rejected when its smallest singular value is below
        ``rank_tol`` times the largest one.
    normalize : bool
        Use powers of ``r/nw`` instead of ``r`` in the polynomial basis.
        Changes only the polynomial coefficients, never the FRF, transient,
        residuals or variance.
    """

    R: int = 2
    nw: int = 150
    F: int = 4
    rank_tol: float = 1e-10
    normalize: bool = True

    @property
    def n_params(self) -> int:
        return (self.R + 1) * (self.F + 1)

    @property
    def window(self) -> int:
        return 2 * self.nw + 1

    @property
    def dof(self) -> int:
        return self.window - self.n_params

    @property
    def transient_index(self) -> int:
        return (self.R + 1) * self.F

    def errors(self, M: int | None = None) -> list:
        errs = []
        for name in ("R", "nw", "F"):
            v = getattr(self, name)
            if int(v) != v:
                errs.append(f"{name}={v} must be an integer")
        if self.R < 0:
            errs.append(f"polynomial order R={self.R} must be >= 0")
        if self.nw < 0:
            errs.append(f"window half-width nw={self.nw} must be >= 0")
        if self.F < 1:
            errs.append(f"downsampling factor F={self.F} must be >= 1")
        if self.window < self.n_params:
            errs.append(
                f"window too small: 2*nw+1 = {self.window} < (F+1)(R+1) = {self.n_params}"
            )
        if M is not None and not M + 1 > self.window:
            errs.append(f"window too large: 2*nw+1 = {self.window} must be < M+1 = {M + 1}")
        if not self.rank_tol > 0:
            errs.append(f"rank tolerance {self.rank_tol} must be positive")
        return errs

    def check(self, M: int | None = None) -> None:
        errs = self.errors(M)
        if errs:
            raise ValueError("; ".join(errs))

    def basis(self) -> np.ndarray:
        """Polynomial basis, shape ``(R+1, 2*nw+1)``; row ``s`` holds ``r**s``."""
        r = np.arange(-self.nw, self.nw + 1, dtype=float)
        if self.normalize and self.nw > 0:
            r = r / self.nw
        return r[None, :] ** np.arange(self.R + 1)[:, None]


@dataclass(eq=False)
class LocalEstimate:
    """Solution of one local least-squares problem.

    ``theta`` is ordered ``[theta_G | theta_g1 .. theta_gR | T | t1 .. tR]``
    where each ``theta_*`` block has one entry per band.
    """

    k: int
    theta: np.ndarray
    residuals: np.ndarray
    singular_values: np.ndarray
    S: np.ndarray
    F: int
    R: int

    @property
    def G(self) -> complex:
        return self.F * self.theta[0]

    @property
    def T(self) -> complex:
        return self.theta[(self.R + 1) * self.F]

    @property
    def band_values(self) -> np.ndarray:
        """FRF estimates ``G(k + i*M)`` for ``i = 0..F-1`` from this single fit."""
        return self.F * self.theta[: self.F]

    @property
    def cond(self) -> float:
        return float(self.singular_values[0] / self.singular_values[-1])

    @property
    def dof(self) -> int:
        return self.residuals.size - self.theta.size

    @property
    def noise_var(self) -> float:
        if self.dof <= 0:
            raise ValueError("noise variance needs 2*nw+1 > (R+1)(F+1)")
        return float(np.vdot(self.residuals, self.residuals).real / self.dof)

    @property
    def SHS(self) -> float:
        return float(np.vdot(self.S, self.S).real)


@dataclass(eq=False)
class FrfEstimate:
    """Multiband LPM result on the full fast grid.

    ``variance`` uses the ``F``-scaled formula; ``variance_alt`` the
    ``F**2``-scaled one.  Invalid bins hold NaN and ``valid == False``.
    """

    grid: FrequencyGrid
    G: np.ndarray
    T: np.ndarray
    variance: np.ndarray
    variance_alt: np.ndarray
    noise_var: np.ndarray
    SHS: np.ndarray
    cond: np.ndarray
    valid: np.ndarray
    band_G: np.ndarray
    config: LpmConfig
    metadata: dict = field(default_factory=dict)
    method: str = "lpm"

    @property
    def bins(self) -> np.ndarray:
        return np.arange(self.grid.N)

    @property
    def freq_hz(self) -> np.ndarray:
        return self.grid.hz(self.bins)

    def band_consistency(self) -> float:
        """Largest relative gap between band ``i`` at bin ``k`` and band 0 at ``k + i*M``."""
        N, M = self.grid.N, self.grid.M
        k = np.arange(N)
        worst = 0.0
        for i in range(1, self.grid.F):
            other = self.G[(k + i * M) % N]
            ok = self.valid & self.valid[(k + i * M) % N]
            if ok.any():
                gap = np.abs(self.band_G[ok, i] - other[ok]) / np.maximum(np.abs(other[ok]), 1e-300)
                worst = max(worst, float(gap.max()))
        return worst


@dataclass(eq=False)
class PointEstimate:
    """FRF values at selected fast bins (sparse and naive estimators)."""

    grid: FrequencyGrid
    bins: np.ndarray
    G: np.ndarray
    valid: np.ndarray
    method: str
    offending: dict = field(default_factory=dict)

    @property
    def freq_hz(self) -> np.ndarray:
        return self.grid.hz(self.bins)


def _lengths(U_h, Y_l, F):
    U = np.asarray(U_h, dtype=complex)
    Y = np.asarray(Y_l, dtype=complex)
    if U.ndim != 1 or Y.ndim < 1:
        raise ValueError("input spectrum must be 1-D")
    N, M = U.size, Y.shape[-1]
    if M * F != N:
        raise ValueError(f"length mismatch: N={N} must equal F*M = {F}*{M}")
    return U, Y, N, M


def _input_floor(U, floor):
    if floor is None:
        return 1e-10 * float(np.max(np.abs(U))) if U.size else 0.0
    return floor


def estimate_sparse(U_h, Y_l, grid: FrequencyGrid, bins, floor: float | None = None) -> PointEstimate:
    """Ratio estimate ``F * Y_l(k mod M) / U_h(k)`` at the bins of a sparse multisine.

    A bin is invalid when its own input line is below ``floor`` or when any
    other fast bin folding onto the same slow bin carries input above
    ``floor``.  The latter also raises an :class:`AliasingWarning` listing
    the offending bins.  ``floor`` defaults to ``1e-10 * max|U_h|``.
    """
    U, Y, N, M = _lengths(U_h, Y_l, grid.F)
    bins = np.asarray(bins, dtype=int) % N
    floor = _input_floor(U, floor)
    mag = np.abs(U)
    G = np.full(bins.size, np.nan + 0j)
    valid = np.zeros(bins.size, dtype=bool)
    offending = {}
    for n, k in enumerate(bins):
        partners = [(k + f * M) % N for f in range(1, grid.F)]
        others = [int(p) for p in partners if mag[p] > floor]
        if others:
            offending[int(k)] = others
            continue
        if mag[k] <= floor:
            continue
        G[n] = grid.F * Y[k % M] / U[k]
        valid[n] = True
    if offending:
        shown = dict(list(offending.items())[:5])
        warnings.warn(
            f"{len(offending)} sparse bins share their slow bin with another excited line, "
            f"e.g. {shown}", AliasingWarning, stacklevel=2)
    return PointEstimate(grid, bins, G, valid, "sparse", offending)


def _regressors(U, ks, M, cfg: LpmConfig, basis=None):
    """Stacked regressors, shape ``(len(ks), (R+1)(F+1), 2*nw+1)``."""
    N = U.size
    if basis is None:
        basis = cfg.basis()
    r = np.arange(-cfg.nw, cfg.nw + 1)
    bands = np.arange(cfg.F) * M
    idx = (ks[:, None, None] + bands[None, :, None] + r[None, None, :]) % N
    Uw = U[idx]                                            # (B, F, L)
    Ku = basis[None, :, None, :] * Uw[:, None, :, :]       # (B, R+1, F, L)
    Ku = Ku.reshape(ks.size, (cfg.R + 1) * cfg.F, r.size)
    Kt = np.broadcast_to(basis.astype(complex), (ks.size,) + basis.shape)
    return np.concatenate([Ku, Kt], axis=1)


def build_regression(U_h, Y_l, k: int, cfg: LpmConfig):
    """Local output row and regressor at fast bin ``k``.

    Returns
    -------
    Y : ndarray, shape (2*nw+1,)
        ``Y_l`` at slow bins ``k-nw .. k+nw`` (modulo ``M``).
    K : ndarray, shape ((R+1)(F+1), 2*nw+1)
        Column ``r`` is ``[K1(r) kron Ubar(k+r); K1(r)]`` with
        ``Ubar(k+r) = [U_h(k+r), U_h(k+r+M), .., U_h(k+r+(F-1)M)]``.
    """
    U, Y, N, M = _lengths(U_h, Y_l, cfg.F)
    K = _regressors(U, np.array([int(k)]), M, cfg)[0]
    r = np.arange(-cfg.nw, cfg.nw + 1)
    return Y[(int(k) + r) % M], K


def solve_local(Y, K, cfg: LpmConfig, k: int = 0) -> LocalEstimate:
    """Least-squares ``theta = argmin ||Y - theta K||``.

    Raises :class:`RankDeficientError` when ``K`` is not of full row rank
    within ``cfg.rank_tol``.
    """
    Y = np.asarray(Y, dtype=complex)
    K = np.asarray(K, dtype=complex)
    if K.shape[0] > K.shape[1]:
        raise RankDeficientError(f"regressor has more rows ({K.shape[0]}) than columns ({K.shape[1]})")
    Ua, s, Vh = np.linalg.svd(K.T, full_matrices=False)
    if not s[-1] >= cfg.rank_tol * s[0]:
        raise RankDeficientError(
            f"regressor at bin {k} is rank deficient: sigma_min/sigma_max = "
            f"{s[-1] / s[0] if s[0] else 0.0:.3e} < {cfg.rank_tol:.1e}")
    c = Ua.conj().T @ Y
    theta = Vh.conj().T @ (c / s)
    residuals = Y - Ua @ c
    S = Ua.conj() @ (Vh[:, 0].conj() / s)
    return LocalEstimate(int(k), theta, residuals, s, S, cfg.F, cfg.R)


def estimate_variance(local: LocalEstimate, cfg: LpmConfig, scaling: str = "F") -> float:
    """Variance of ``G`` from one local fit: ``c * (S^H S) * C_v``.

    ``C_v`` is the residual power divided by ``2*nw+1 - (R+1)(F+1)`` and
    ``S^H S`` is the first diagonal entry of ``(K K^H)^{-1}``.  ``scaling``
    selects ``c = F`` (``"F"``) or ``c = F**2`` (``"F2"``).
    """
    if cfg.dof <= 0:
        raise ValueError(
            f"no residual degrees of freedom: 2*nw+1 = {cfg.window} <= (R+1)(F+1) = {cfg.n_params}")
    c = {"F": cfg.F, "F2": cfg.F**2}[scaling]
    return float(c * local.SHS * local.noise_var)


class MultibandLPM:
    """Multiband local polynomial estimator bound to one input spectrum.

    All per-bin regressors depend only on the input, so one instance can be
    applied to many output realizations (see :meth:`estimate_many`).

    Parameters
    ----------
    U_h : array_like
        Fast-rate input spectrum, length ``N``.
    grid : FrequencyGrid
    cfg : LpmConfig
    n_jobs : int
        Worker threads for the per-bin loop.  Bins are split in fixed chunks
        regardless of ``n_jobs``, so results are bit-identical for any value.
    chunk : int
        Bins per chunk.
    """

    def __init__(self, U_h, grid: FrequencyGrid, cfg: LpmConfig, n_jobs: int = 1, chunk: int = 128):
        if cfg.F != grid.F:
            raise ValueError(f"config F={cfg.F} does not match grid F={grid.F}")
        cfg.check(grid.M)
        U = np.asarray(U_h, dtype=complex)
        if U.shape != (grid.N,):
            raise ValueError(f"input spectrum must have length N={grid.N}")
        self.U = U
        self.grid = grid
        self.cfg = cfg
        self.n_jobs = max(1, int(n_jobs))
        self.chunk = max(1, int(chunk))
        self._basis = cfg.basis()

    def _chunk(self, ks, Y):
        cfg, M = self.cfg, self.grid.M
        K = _regressors(self.U, ks, M, cfg, self._basis)
        Ua, s, Vh = np.linalg.svd(np.swapaxes(K, 1, 2), full_matrices=False)
        valid = s[:, -1] >= cfg.rank_tol * s[:, 0]
        s_safe = np.where(valid[:, None], s, np.inf)
        r = np.arange(-cfg.nw, cfg.nw + 1)
        yw = Y[:, (ks[:, None] + r[None, :]) % M]            # (n, B, L)
        yw = np.transpose(yw, (1, 2, 0))                      # (B, L, n)
        c = np.matmul(np.swapaxes(Ua, 1, 2).conj(), yw)       # (B, P, n)
        theta = np.matmul(np.swapaxes(Vh, 1, 2).conj(), c / s_safe[:, :, None])
        resid = yw - np.matmul(Ua, c)
        power = np.sum(resid.real**2 + resid.imag**2, axis=1)  # (B, n)
        shs = np.sum(np.abs(Vh[:, :, 0]) ** 2 / s_safe**2, axis=1)
        cond = s[:, 0] / np.where(s[:, -1] > 0, s[:, -1], np.nan)
        return theta, power, shs, cond, valid

    def _run(self, Y):
        N = self.grid.N
        starts = range(0, N, self.chunk)
        parts = [np.arange(a, min(N, a + self.chunk)) for a in starts]
        if self.n_jobs == 1:
            out = [self._chunk(ks, Y) for ks in parts]
        else:
            with ThreadPoolExecutor(max_workers=self.n_jobs) as pool:
                out = list(pool.map(lambda ks: self._chunk(ks, Y), parts))
        theta = np.concatenate([o[0] for o in out], axis=0)   # (N, P, n)
        power = np.concatenate([o[1] for o in out], axis=0)   # (N, n)
        shs = np.concatenate([o[2] for o in out])
        cond = np.concatenate([o[3] for o in out])
        valid = np.concatenate([o[4] for o in out])
        return theta, power, shs, cond, valid

    def _outputs(self, Y_l):
        Y = np.asarray(Y_l, dtype=complex)
        if Y.shape[-1] != self.grid.M:
            raise ValueError(f"output spectrum must have length M={self.grid.M}")
        return Y

    def estimate(self, Y_l) -> FrfEstimate:
        """Estimate ``G``, transient and variance at every fast bin."""
        Y = self._outputs(Y_l)
        if Y.ndim != 1:
            raise ValueError("estimate() takes one output spectrum; use estimate_many()")
        cfg, F = self.cfg, self.cfg.F
        theta, power, shs, cond, valid = self._run(Y[None, :])
        theta, power = theta[..., 0], power[:, 0]
        nan = np.where(valid, 1.0, np.nan)
        G = F * theta[:, 0] * nan
        T = theta[:, cfg.transient_index] * nan
        band_G = F * theta[:, :F] * nan[:, None]
        if cfg.dof > 0:
            noise_var = power / cfg.dof * nan
        else:
            noise_var = np.full(self.grid.N, np.nan)
        shs = shs * nan
        return FrfEstimate(
            grid=self.grid, G=G, T=T,
            variance=F * shs * noise_var,
            variance_alt=F**2 * shs * noise_var,
            noise_var=noise_var, SHS=shs, cond=cond, valid=valid, band_G=band_G,
            config=cfg,
            metadata={"n_invalid": int((~valid).sum()),
                      "cond_max": float(np.nanmax(cond)) if valid.any() else float("nan"),
                      "cond_median": float(np.nanmedian(cond)) if valid.any() else float("nan")},
        )

    def estimate_many(self, Y_batch):
        """Apply the estimator to a stack of output spectra, shape ``(n, M)``.

        Returns a dict with ``G`` and ``noise_var`` of shape ``(n, N)`` and the
        realization-independent ``SHS``, ``cond`` and ``valid`` of shape ``(N,)``.
        """
        Y = self._outputs(Y_batch)
        if Y.ndim != 2:
            raise ValueError("estimate_many() expects a 2-D stack of spectra")
        theta, power, shs, cond, valid = self._run(Y)
        nan = np.where(valid, 1.0, np.nan)
        dof = self.cfg.dof if self.cfg.dof > 0 else np.nan
        return {
            "G": (self.cfg.F * theta[:, 0, :] * nan[:, None]).T,
            "noise_var": (power / dof * nan[:, None]).T,
            "SHS": shs * nan,
            "cond": cond,
            "valid": valid,
        }


def estimate_frf_lpm(U_h, Y_l, grid: FrequencyGrid, cfg: LpmConfig, n_jobs: int = 1) -> FrfEstimate:
    """Multiband LPM over all fast bins ``0..N-1``.

    For every bin the local regression is built, solved, and the FRF is read
    from the first parameter (times ``F``).  Rank-deficient windows are
    flagged, never filled in.
    """
    _lengths(U_h, Y_l, grid.F)
    return MultibandLPM(U_h, grid, cfg, n_jobs=n_jobs).estimate(Y_l)


def classical_lpm(U, Y, R: int, nw: int, rank_tol: float = 1e-10):
    """Single-rate local polynomial method with circular windows.

    Fits ``Y(k+r) = sum_s (G_s U(k+r) + T_s) r**s`` for ``r in [-nw, nw]``
    around each bin with a dense least-squares solver.

    Returns
    -------
    G, T : ndarray
        Complex FRF and transient estimates (NaN where rank deficient).
    """
    U = np.asarray(U, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    if U.shape != Y.shape or U.ndim != 1:
        raise ValueError("input and output spectra must be 1-D and equally long")
    N = U.size
    r = np.arange(-nw, nw + 1)
    powers = np.vander(r.astype(float), R + 1, increasing=True)   # (L, R+1)
    G = np.full(N, np.nan + 0j)
    T = np.full(N, np.nan + 0j)
    for k in range(N):
        idx = (k + r) % N
        A = np.hstack([powers * U[idx][:, None], powers.astype(complex)])
        sol, _, rank, sv = linalg.lstsq(A, Y[idx], cond=rank_tol)
        if rank < A.shape[1]:
            continue
        G[k] = sol[0]
        T[k] = sol[R + 1]
    return G, T


def etfe_baseline(U_h, Y_l, grid: FrequencyGrid, floor: float | None = None) -> PointEstimate:
    """Naive estimate ``Y_l(k mod M) / U_h(k)`` on every fast bin.

    Ignores aliasing on purpose; its result is ``M``-periodic in ``k`` up to
    the input.  Bins with ``|U_h| <= floor`` are invalid (NaN).
    """
    U, Y, N, M = _lengths(U_h, Y_l, grid.F)
    floor = _input_floor(U, floor)
    k = np.arange(N)
    valid = np.abs(U) > floor
    G = np.full(N, np.nan + 0j)
    G[valid] = Y[k[valid] % M] / U[valid]
    return PointEstimate(grid, k, G, valid, "etfe")
