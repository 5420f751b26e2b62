"""Config-driven experiment pipelines.

``run_identify`` goes from excitation design to FRF estimates,
``run_montecarlo`` checks the analytic variance against repeated noise
realizations, and ``compare_methods`` tabulates per-band errors of finished
runs against the simulator's exact FRF.

Each run writes a bundle directory.  Everything in it except ``timing.json``
is a deterministic function of the config file.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import signal

from . import __version__
from .config import ConfigError, ExperimentConfig, validate_config
from .estimators import (MultibandLPM, estimate_sparse, etfe_baseline)
from .excitation import (RNG_ALGORITHM, full_excitation, random_phase_multisine,
                         sparse_excitation, sparse_multisine_bins)
from .io import (read_frf_csv, read_json, read_record_csv, write_frf_csv,
                 write_json, write_record_csv, write_rows_csv)
from .plantsim import (PlantModel, add_noise, simulate_lti, simulate_steady_state,
                       slow_sample, true_frf)
from .spectra import FrequencyGrid, dft

__all__ = [
    "StageError",
    "ExperimentData",
    "IdentifyResult",
    "MonteCarloResult",
    "ComparisonResult",
    "noise_sigma",
    "simulate_experiment",
    "load_experiment",
    "run_identify",
    "run_montecarlo",
    "compare_methods",
    "band_of_bins",
]

MANIFEST_SCHEMA = "slowfrf.bundle/1"


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")


@dataclass(eq=False)
class ExperimentData:
    grid: FrequencyGrid
    u: np.ndarray
    y: np.ndarray
    y_clean: np.ndarray | None
    v: np.ndarray | None
    U: np.ndarray
    Y: np.ndarray
    kind: str
    excitation_seed: int | None = None
    noise_seed: int | None = None
    sigma: float = 0.0


def _check(cfg: ExperimentConfig):
    errs = validate_config(cfg)
    if errs:
        raise ConfigError(errs)


def noise_sigma(cfg: ExperimentConfig, y_clean) -> float:
    """White-noise std from the config: ``sigma`` directly, or from ``snr_db``.

    With ``snr_db`` the std of the filtered noise ``H e`` is set to
    ``rms(y_clean) / 10**(snr_db/20)``.
    """
    if cfg.noise_snr_db is None:
        return float(cfg.noise_sigma)
    target = np.sqrt(np.mean(np.square(y_clean))) / 10 ** (cfg.noise_snr_db / 20)
    impulse = np.zeros(max(len(y_clean), 1))
    impulse[0] = 1.0
    h = signal.lfilter(cfg.noise_num, cfg.noise_den, impulse)
    return float(target / np.sqrt(np.sum(h * h)))


def simulate_experiment(cfg: ExperimentConfig, kind: str = "full",
                        noise_seed: int | None = None) -> ExperimentData:
    """Excite the configured plant, decimate and add noise.

    ``kind`` is ``"full"`` (random-phase multisine on every bin) or
    ``"sparse"`` (sparse multisine).
    """
    grid, plant, seeds = cfg.grid, cfg.plant, cfg.seeds()
    if kind == "full":
        spec = full_excitation(grid, cfg.rms, seeds["excitation"], cfg.include_dc, cfg.include_nyquist)
        steady = cfg.full_steady_state
    elif kind == "sparse":
        spec = sparse_excitation(grid, cfg.sparse_rms, seeds["sparse_excitation"])
        steady = cfg.sparse_steady_state
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    u, U = random_phase_multisine(spec)
    y_h = simulate_steady_state(plant, u) if steady else simulate_lti(plant, u)
    y_clean = slow_sample(y_h, grid.F)
    sigma = noise_sigma(cfg, y_clean)
    nseed = seeds["noise"] if noise_seed is None else int(noise_seed)
    y, v = add_noise(y_clean, cfg.noise(sigma, nseed))
    return ExperimentData(grid, u, y, y_clean, v, np.asarray(U), dft(y, "slow").values,
                          kind, spec.seed, nseed, sigma)


def load_experiment(cfg: ExperimentConfig, input_csv, output_csv) -> ExperimentData:
    """Measured data: fast input record and slow output record from CSV files."""
    u, Ts_u = read_record_csv(input_csv)
    y, Ts_y = read_record_csv(output_csv)
    if u.size != cfg.factor * y.size:
        raise ConfigError([f"input has {u.size} samples, output {y.size}; "
                           f"expected exactly F={cfg.factor} times more input samples"])
    for Ts, expect, name in ((Ts_u, 1 / cfg.fs_fast, "input"), (Ts_y, cfg.factor / cfg.fs_fast, "output")):
        if Ts is not None and abs(Ts - expect) > 1e-6 * expect:
            raise ConfigError([f"{name} sampling time {Ts} s does not match config ({expect} s)"])
    grid = FrequencyGrid(M=y.size, F=cfg.factor, Tsh=1.0 / cfg.fs_fast)
    errs = cfg.lpm.errors(grid.M) if "lpm" in cfg.methods else []
    if errs:
        raise ConfigError(errs)
    return ExperimentData(grid, u, y, None, None, dft(u).values, dft(y, "slow").values, "external")


@dataclass(eq=False)
class IdentifyResult:
    estimates: dict
    data: dict
    manifest: dict
    out_dir: Path | None = None
    errors: dict = field(default_factory=dict)


def _rel_error(G, Gt):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.abs(G - Gt) / np.abs(Gt)


def band_of_bins(bins, grid: FrequencyGrid) -> np.ndarray:
    """Band number 1..F of each bin folded to ``[0, N/2]``; band 1 is below the slow Nyquist."""
    bins = np.asarray(bins, dtype=int) % grid.N
    pos = np.minimum(bins, grid.N - bins)
    band = np.ceil(2 * pos / grid.M).astype(int)
    return np.clip(band, 1, grid.F)


def _above_nyquist(bins, grid):
    bins = np.asarray(bins, dtype=int) % grid.N
    pos = np.minimum(bins, grid.N - bins)
    return 2 * pos > grid.M


def _grid_dict(grid: FrequencyGrid) -> dict:
    return {"N": grid.N, "M": grid.M, "F": grid.F, "Tsh": grid.Tsh, "Tsl": grid.Tsl,
            "fs_fast": grid.fs_fast, "fs_slow": grid.fs_slow}


def _plant_dict(plant: PlantModel) -> dict:
    return {"num": plant.num, "den": plant.den, "Tsh": plant.Tsh,
            "max_pole_radius": plant.max_pole_radius}


def run_identify(cfg: ExperimentConfig, out_dir=None, methods=None, input_csv=None,
                 output_csv=None, n_jobs: int | None = None) -> IdentifyResult:
    """Excite, simulate, transform and identify; optionally write a result bundle.

    Full-spectrum methods (``lpm``, ``etfe``) share one input/output record
    pair; ``sparse`` uses its own sparse-multisine experiment.  With
    ``input_csv``/``output_csv`` the measured pair replaces the simulator and
    no oracle comparison is made.
    """
    if methods is not None:
        cfg = cfg.replace(methods=tuple(methods))
    if n_jobs is not None:
        cfg = cfg.replace(n_jobs=int(n_jobs))
    _check(cfg)
    timing = {}
    external = input_csv is not None or output_csv is not None
    if external and (input_csv is None or output_csv is None):
        raise ConfigError(["external data needs both an input and an output CSV"])

    data = {}
    t0 = time.perf_counter()
    try:
        if external:
            shared = load_experiment(cfg, input_csv, output_csv)
            if any(m in cfg.methods for m in ("lpm", "etfe")):
                data["full"] = shared
            if "sparse" in cfg.methods:
                data["sparse"] = shared
        else:
            if any(m in cfg.methods for m in ("lpm", "etfe")):
                data["full"] = simulate_experiment(cfg, "full")
            if "sparse" in cfg.methods:
                data["sparse"] = simulate_experiment(cfg, "sparse")
    except ConfigError:
        raise
    except Exception as exc:
        raise StageError("simulate" if not external else "load", exc) from exc
    timing["simulate_s"] = time.perf_counter() - t0

    grid = next(iter(data.values())).grid
    estimates, diagnostics = {}, {}
    for method in cfg.methods:
        t0 = time.perf_counter()
        try:
            if method == "lpm":
                d = data["full"]
                est = MultibandLPM(d.U, grid, cfg.lpm, n_jobs=cfg.n_jobs).estimate(d.Y)
                diagnostics["lpm"] = dict(est.metadata, band_consistency=est.band_consistency())
            elif method == "etfe":
                d = data["full"]
                est = etfe_baseline(d.U, d.Y, grid)
                diagnostics["etfe"] = {"n_invalid": int((~est.valid).sum())}
            else:
                d = data["sparse"]
                est = estimate_sparse(d.U, d.Y, grid, sparse_multisine_bins(grid))
                diagnostics["sparse"] = {"n_invalid": int((~est.valid).sum()),
                                         "aliased_bins": sorted(est.offending)}
        except Exception as exc:
            raise StageError(f"identify:{method}", exc) from exc
        estimates[method] = est
        timing[f"identify_{method}_s"] = time.perf_counter() - t0

    errors = {}
    if not external:
        plant = cfg.plant
        for method, est in estimates.items():
            Gt = true_frf(plant, grid.omega(est.bins))
            errors[method] = (est.bins, Gt, _rel_error(est.G, Gt))

    summary = {}
    for method, (bins, _, rel) in errors.items():
        above = _above_nyquist(bins, grid) & np.isfinite(rel)
        below = ~_above_nyquist(bins, grid) & np.isfinite(rel)
        summary[method] = {
            "max_rel_error": float(np.nanmax(rel)) if np.isfinite(rel).any() else None,
            "median_rel_error_below_slow_nyquist": float(np.median(rel[below])) if below.any() else None,
            "median_rel_error_above_slow_nyquist": float(np.median(rel[above])) if above.any() else None,
            "max_rel_error_above_slow_nyquist": float(np.max(rel[above])) if above.any() else None,
        }

    seeds = cfg.seeds()
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "kind": "identify",
        "package_version": __version__,
        "config_sha256": cfg.sha256(),
        "config_file": "config_resolved.ini",
        "data_source": "external" if external else "simulated",
        "grid": _grid_dict(grid),
        "plant": None if external else _plant_dict(cfg.plant),
        "methods": list(cfg.methods),
        "seeds": {"master": cfg.seed, **seeds},
        "rng": RNG_ALGORITHM,
        "noise_sigma": {k: d.sigma for k, d in data.items()},
        "lpm": {"R": cfg.R, "nw": cfg.nw, "rank_tol": cfg.rank_tol,
                "normalize_basis": cfg.normalize_basis, "dof": cfg.lpm.dof},
        "diagnostics": diagnostics,
        "oracle_summary": summary,
        "files": {},
    }
    result = IdentifyResult(estimates, data, manifest, None, errors)
    if out_dir is not None:
        t0 = time.perf_counter()
        _write_identify_bundle(Path(out_dir), cfg, result, external)
        timing["write_s"] = time.perf_counter() - t0
        _write_timing(Path(out_dir), timing)
    return result


def _write_timing(out: Path, timing: dict):
    write_json(out / "timing.json",
               {"finished_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"), **timing})


def _write_identify_bundle(out: Path, cfg, result: IdentifyResult, external: bool):
    out.mkdir(parents=True, exist_ok=True)
    files = result.manifest["files"]
    (out / "config_resolved.ini").write_text(cfg.to_ini())
    for kind, d in result.data.items():
        if external or kind in files:
            continue
        suffix = "" if kind == "full" else "_sparse"
        write_record_csv(out / f"u_fast{suffix}.csv", d.u, d.grid.Tsh)
        write_record_csv(out / f"y_slow{suffix}.csv", d.y, d.grid.Tsl)
        files[kind] = {"input": f"u_fast{suffix}.csv", "output": f"y_slow{suffix}.csv"}
    for method, est in result.estimates.items():
        name = f"frf_{method}.csv"
        variance = est.variance if method == "lpm" else None
        write_frf_csv(out / name, est.freq_hz, est.bins, est.G, variance, est.valid)
        files[f"frf_{method}"] = name
    if "lpm" in result.estimates:
        est = result.estimates["lpm"]
        write_rows_csv(out / "lpm_diagnostics.csv",
                       ("bin", "freq_hz", "transient_re", "transient_im", "noise_var",
                        "variance_F", "variance_F2", "cond", "valid_flag"),
                       zip(est.bins, est.freq_hz, est.T.real, est.T.imag, est.noise_var,
                           est.variance, est.variance_alt, est.cond, est.valid))
        files["lpm_diagnostics"] = "lpm_diagnostics.csv"
    if result.errors:
        rows = []
        for method, (bins, Gt, rel) in result.errors.items():
            grid = result.estimates[method].grid
            for b, g, e in zip(bins, Gt, rel):
                rows.append((method, b, grid.hz(b), g.real, g.imag, e))
        write_rows_csv(out / "error_vs_oracle.csv",
                       ("method", "bin", "freq_hz", "true_re", "true_im", "rel_error"), rows)
        files["error_vs_oracle"] = "error_vs_oracle.csv"
    write_json(out / "manifest.json", result.manifest)


@dataclass(eq=False)
class MonteCarloResult:
    grid: FrequencyGrid
    G: np.ndarray
    empirical_var: np.ndarray
    analytic_F: np.ndarray
    analytic_F2: np.ndarray
    noise_var: np.ndarray
    valid: np.ndarray
    summary: dict
    out_dir: Path | None = None


def _periodicity(x, grid: FrequencyGrid) -> dict:
    """Largest relative change of ``x`` under ``k -> k+M``, ``k -> M-k`` and ``k -> N-k``."""
    k = np.arange(grid.N)
    scale = np.nanmax(np.abs(x))

    def dev(j):
        d = np.abs(x[j % grid.N] - x)
        return float(np.nanmax(d) / scale) if scale > 0 else 0.0

    return {"shift_M": dev(k + grid.M), "mirror_M": dev(grid.M - k), "mirror_N": dev(grid.N - k)}


def run_montecarlo(cfg: ExperimentConfig, n_runs: int | None = None, out_dir=None,
                   n_jobs: int | None = None, block: int = 50) -> MonteCarloResult:
    """Repeat the full-spectrum experiment with independent noise realizations.

    Excitation and plant stay fixed.  Realization ``i`` uses the noise seed
    ``SeedSequence(seeds['montecarlo']).spawn(n_runs)[i]`` (first 32-bit word).
    The empirical variance of ``G`` per bin is compared with the mean of the
    ``F``- and ``F**2``-scaled analytic estimates.
    """
    if n_runs is not None:
        cfg = cfg.replace(runs=int(n_runs))
    if n_jobs is not None:
        cfg = cfg.replace(n_jobs=int(n_jobs))
    _check(cfg)
    if not cfg.has_noise:
        raise ConfigError(["Monte Carlo study needs noise: set [noise] sigma > 0 or snr_db"])
    timing = {}
    t0 = time.perf_counter()
    base = simulate_experiment(cfg, "full")
    grid, runs = base.grid, cfg.runs
    if base.sigma <= 0:
        raise ConfigError(["Monte Carlo study needs a positive noise level"])
    children = np.random.SeedSequence(cfg.seeds()["montecarlo"]).spawn(runs)
    run_seeds = [int(c.generate_state(1, np.uint32)[0]) for c in children]
    noise = [cfg.noise(base.sigma, s) for s in run_seeds]
    est = MultibandLPM(base.U, grid, cfg.lpm, n_jobs=cfg.n_jobs)

    G = np.empty((runs, grid.N), dtype=complex)
    cv = np.empty((runs, grid.N))
    for a in range(0, runs, block):
        idx = range(a, min(runs, a + block))
        Y = np.stack([dft(add_noise(base.y_clean, noise[i])[0], "slow").values for i in idx])
        out = est.estimate_many(Y)
        G[a:a + len(idx)] = out["G"]
        cv[a:a + len(idx)] = out["noise_var"]
    SHS, valid = out["SHS"], out["valid"]
    timing["montecarlo_s"] = time.perf_counter() - t0

    F = grid.F
    emp = np.var(G, axis=0, ddof=1)
    cv_mean = cv.mean(axis=0)
    an_F = F * SHS * cv_mean
    an_F2 = F**2 * SHS * cv_mean
    ok = valid & (emp > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_F = an_F / emp
        ratio_F2 = an_F2 / emp
    med = {"F": float(np.median(ratio_F[ok])), "F2": float(np.median(ratio_F2[ok]))}
    inside = [s for s, m in med.items() if 0.5 <= m <= 2.0]
    winner = inside[0] if len(inside) == 1 else ("none" if not inside else "ambiguous")

    var_one = F * SHS * cv[0]
    summary = {
        "schema": MANIFEST_SCHEMA,
        "kind": "montecarlo",
        "package_version": __version__,
        "config_sha256": cfg.sha256(),
        "grid": _grid_dict(grid),
        "plant": _plant_dict(cfg.plant),
        "runs": runs,
        "noise_sigma": base.sigma,
        "seeds": {"master": cfg.seed, **cfg.seeds(), "first_run_seeds": run_seeds[:5]},
        "seed_rule": "SeedSequence(seeds.montecarlo).spawn(runs)[i].generate_state(1, uint32)[0]",
        "rng": RNG_ALGORITHM,
        "n_valid_bins": int(ok.sum()),
        "median_ratio": med,
        "quartiles_ratio": {
            "F": [float(q) for q in np.percentile(ratio_F[ok], [25, 75])],
            "F2": [float(q) for q in np.percentile(ratio_F2[ok], [25, 75])],
        },
        "winning_scaling": winner,
        "periodicity": {
            "noise_var_single_run": _periodicity(cv[0], grid),
            "variance_F_single_run": _periodicity(var_one, grid),
        },
    }
    res = MonteCarloResult(grid, G, emp, an_F, an_F2, cv_mean, valid, summary)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config_resolved.ini").write_text(cfg.to_ini())
        k = np.arange(grid.N)
        write_rows_csv(out / "montecarlo_bins.csv",
                       ("bin", "freq_hz", "empirical_var", "analytic_var_F", "analytic_var_F2",
                        "ratio_F", "ratio_F2", "noise_var_mean", "valid_flag"),
                       zip(k, grid.hz(k), emp, an_F, an_F2, ratio_F, ratio_F2, cv_mean, ok))
        summary["files"] = {"bins": "montecarlo_bins.csv", "config": "config_resolved.ini"}
        write_json(out / "manifest.json", summary)
        _write_timing(out, timing)
        res.out_dir = out
    return res


@dataclass(eq=False)
class ComparisonResult:
    rows: list
    text: str
    resolution: dict


_COMPARE_COLUMNS = ("method", "band", "f_lo_hz", "f_hi_hz", "n_bins", "median_rel_error",
                    "p90_rel_error", "max_rel_error")


def _bundle_estimates(path: Path):
    man = read_json(path / "manifest.json")
    if man.get("kind") != "identify":
        raise ValueError(f"{path} is not an identification bundle")
    g = man["grid"]
    grid = FrequencyGrid(M=g["M"], F=g["F"], Tsh=g["Tsh"])
    found = {}
    for method in man["methods"]:
        frf = read_frf_csv(path / f"frf_{method}.csv")
        found[method] = frf
    return man, grid, found


def compare_methods(bundles, out_dir=None) -> ComparisonResult:
    """Per-band error statistics of every method in the given bundles.

    ``bundles`` are bundle directories (or :class:`IdentifyResult` objects
    already written to disk).  All must share grid and plant.  Band 1 is
    ``[0, fs_slow/2]``; band ``b`` covers ``((b-1) fs_slow/2, b fs_slow/2]``.
    """
    paths = [Path(b.out_dir if isinstance(b, IdentifyResult) else b) for b in bundles]
    if not paths:
        raise ValueError("nothing to compare")
    ref_grid, ref_plant, estimates = None, None, {}
    for p in paths:
        man, grid, found = _bundle_estimates(p)
        if man.get("plant") is None:
            raise ValueError(f"{p}: bundle has no simulated plant to compare against")
        if ref_grid is None:
            ref_grid, ref_plant = grid, man["plant"]
        elif grid != ref_grid:
            raise ValueError(f"{p}: grid {grid} differs from {ref_grid}")
        elif man["plant"]["num"] != ref_plant["num"] or man["plant"]["den"] != ref_plant["den"]:
            raise ValueError(f"{p}: plant differs from the first bundle")
        for method, frf in found.items():
            label = method if method not in estimates else f"{method}@{p.name}"
            estimates[label] = frf
    grid = ref_grid
    plant = PlantModel(np.array(ref_plant["num"]), np.array(ref_plant["den"]), ref_plant["Tsh"])

    rows, resolution = [], {}
    half = grid.fs_slow / 2
    for label, frf in estimates.items():
        bins = frf["bin"]
        Gt = true_frf(plant, grid.omega(bins))
        rel = _rel_error(frf["G"], Gt)
        pos = np.minimum(bins % grid.N, grid.N - bins % grid.N)
        # full-grid estimates: keep the non-negative half only
        keep = frf["valid"] & np.isfinite(rel)
        if bins.size == grid.N:
            keep &= bins <= grid.N // 2
        band = band_of_bins(bins, grid)
        resolution[label] = {}
        for b in range(1, grid.F + 1):
            sel = keep & (band == b)
            resolution[label][b] = int(np.unique(pos[sel]).size)
            e = rel[sel]
            rows.append((label, b, (b - 1) * half, b * half, int(sel.sum()),
                         float(np.median(e)) if e.size else float("nan"),
                         float(np.percentile(e, 90)) if e.size else float("nan"),
                         float(np.max(e)) if e.size else float("nan")))

    lines = [f"FRF comparison, fast rate {grid.fs_fast:g} Hz, F = {grid.F}, "
             f"slow Nyquist {half:g} Hz, {grid.N} fast bins", ""]
    header = f"{'method':<16}" + "".join(f"  band {b} median" for b in range(1, grid.F + 1))
    lines.append(header)
    for label in estimates:
        meds = [r[5] for r in rows if r[0] == label]
        lines.append(f"{label:<16}" + "".join(f"  {m:>13.3e}" for m in meds))
    lines.append("")
    above = {label: np.nanmedian([r[5] for r in rows if r[0] == label and r[1] > 1])
             for label in estimates}
    ranking = sorted(above, key=lambda k: (np.isnan(above[k]), above[k]))
    lines.append("ranking above the slow Nyquist (median of band medians): " + " > ".join(ranking))
    lines.append("bins per band: " + "; ".join(
        f"{label}: {[resolution[label][b] for b in range(1, grid.F + 1)]}" for label in estimates))
    text = "\n".join(lines) + "\n"
    if out_dir is not None:
        out = Path(out_dir)
        write_rows_csv(out / "comparison.csv", _COMPARE_COLUMNS, rows)
        (out / "comparison.txt").write_text(text)
    return ComparisonResult(rows, text, resolution)
