"""Experiment configuration: INI files, defaults and validation.

A config file has the sections ``[grid]``, ``[plant]``, ``[noise]``,
``[excitation]``, ``[lpm]``, ``[simulation]`` and ``[experiment]``; every key
is optional and falls back to the defaults below (fast rate 120 Hz, F = 4,
120 s record, nw = 150, R = 2).  Lists are comma separated.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimators import LpmConfig
from .plantsim import NoiseModel, PlantModel
from .spectra import FrequencyGrid

__all__ = ["ConfigError", "ExperimentConfig", "validate_config", "load_config", "METHODS"]

METHODS = ("lpm", "sparse", "etfe")


class ConfigError(ValueError):
    """One or more configuration constraints are violated."""

    def __init__(self, errors):
        self.errors = list(errors) if not isinstance(errors, str) else [errors]
        super().__init__("; ".join(self.errors))


# (section, key, attribute, kind)
_SCHEMA = [
    ("grid", "fs_fast", "fs_fast", float),
    ("grid", "factor", "factor", int),
    ("grid", "measurement_time", "measurement_time", float),
    ("plant", "num", "plant_num", "floats?"),
    ("plant", "den", "plant_den", "floats?"),
    ("plant", "resonances_hz", "plant_resonances_hz", "floats"),
    ("plant", "damping", "plant_damping", "floats"),
    ("plant", "dc_gain", "plant_dc_gain", float),
    ("plant", "delay", "plant_delay", int),
    ("noise", "num", "noise_num", "floats"),
    ("noise", "den", "noise_den", "floats"),
    ("noise", "sigma", "noise_sigma", float),
    ("noise", "snr_db", "noise_snr_db", "float?"),
    ("excitation", "rms", "rms", float),
    ("excitation", "sparse_rms", "sparse_rms", float),
    ("excitation", "include_dc", "include_dc", bool),
    ("excitation", "include_nyquist", "include_nyquist", bool),
    ("lpm", "order", "R", int),
    ("lpm", "half_width", "nw", int),
    ("lpm", "rank_tol", "rank_tol", float),
    ("lpm", "normalize_basis", "normalize_basis", bool),
    ("simulation", "full_steady_state", "full_steady_state", bool),
    ("simulation", "sparse_steady_state", "sparse_steady_state", bool),
    ("experiment", "methods", "methods", "words"),
    ("experiment", "seed", "seed", int),
    ("experiment", "runs", "runs", int),
    ("experiment", "n_jobs", "n_jobs", int),
    ("experiment", "out_dir", "out_dir", str),
]

# how a run is executed, not what it computes; left out of the resolved file and hash
_EXECUTION_ONLY = {"n_jobs", "out_dir"}


@dataclass(frozen=True)
class ExperimentConfig:
    fs_fast: float = 120.0
    factor: int = 4
    measurement_time: float = 120.0
    plant_num: tuple | None = None
    plant_den: tuple | None = None
    plant_resonances_hz: tuple = (10.0, 40.0)
    plant_damping: tuple = (0.35, 0.15)
    plant_dc_gain: float = 1.0
    plant_delay: int = 1
    noise_num: tuple = (1.0,)
    noise_den: tuple = (1.0,)
    noise_sigma: float = 0.0
    noise_snr_db: float | None = None
    rms: float = 8.3e-3
    sparse_rms: float = 9.6e-3
    include_dc: bool = False
    include_nyquist: bool = False
    R: int = 2
    nw: int = 150
    rank_tol: float = 1e-10
    normalize_basis: bool = True
    full_steady_state: bool = False
    sparse_steady_state: bool = True
    methods: tuple = ("lpm", "etfe")
    seed: int = 1
    runs: int = 500
    n_jobs: int = 1
    out_dir: str = "results"

    # -- derived objects ---------------------------------------------------
    @property
    def N(self) -> int:
        return int(round(self.fs_fast * self.measurement_time))

    @property
    def M(self) -> int:
        return self.N // self.factor

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid.from_rates(self.fs_fast, self.factor, self.measurement_time)

    @property
    def lpm(self) -> LpmConfig:
        return LpmConfig(self.R, self.nw, self.factor, self.rank_tol, self.normalize_basis)

    @property
    def plant(self) -> PlantModel:
        if self.plant_num is not None:
            return PlantModel(np.array(self.plant_num), np.array(self.plant_den), 1.0 / self.fs_fast)
        return PlantModel.resonant(self.fs_fast, self.plant_resonances_hz, self.plant_damping,
                                   self.plant_dc_gain, self.plant_delay)

    def noise(self, sigma: float, seed: int) -> NoiseModel:
        return NoiseModel(np.array(self.noise_num), np.array(self.noise_den), sigma, seed)

    @property
    def has_noise(self) -> bool:
        return self.noise_sigma > 0 or self.noise_snr_db is not None

    def seeds(self) -> dict:
        """Integer seeds of every random stage, split from the master seed.

        Stage ``i`` of ``(excitation, noise, sparse_excitation, montecarlo)``
        gets ``SeedSequence(seed).spawn(4)[i].generate_state(1, uint32)[0]``.
        """
        names = ("excitation", "noise", "sparse_excitation", "montecarlo")
        children = np.random.SeedSequence(self.seed).spawn(len(names))
        return {n: int(c.generate_state(1, np.uint32)[0]) for n, c in zip(names, children)}

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- INI round trip ----------------------------------------------------
    @classmethod
    def from_ini(cls, text: str, source: str = "<string>") -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError([f"{source}: {exc}"]) from None
        known = {(s, k): (a, kind) for s, k, a, kind in _SCHEMA}
        values, errors = {}, []
        for section in parser.sections():
            for key, raw in parser.items(section):
                if (section, key) not in known:
                    errors.append(f"unknown key [{section}] {key}")
                    continue
                attr, kind = known[(section, key)]
                try:
                    values[attr] = _parse(raw, kind)
                except ValueError as exc:
                    errors.append(f"[{section}] {key} = {raw!r}: {exc}")
        if errors:
            raise ConfigError(errors)
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError([f"cannot read config {path}: {exc}"]) from None
        return cls.from_ini(text, source=str(path))

    def to_ini(self) -> str:
        """Fully resolved config without execution-only keys (``n_jobs``, ``out_dir``)."""
        parser = configparser.ConfigParser(interpolation=None)
        for section, key, attr, kind in _SCHEMA:
            v = getattr(self, attr)
            if v is None or attr in _EXECUTION_ONLY:
                continue
            if not parser.has_section(section):
                parser.add_section(section)
            parser.set(section, key, _format(v))
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def sha256(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()


def _parse(raw: str, kind):
    raw = raw.strip()
    if kind is float:
        return float(raw)
    if kind is int:
        return int(raw)
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if kind is str:
        return raw
    if kind == "float?":
        return None if raw.lower() in ("", "none") else float(raw)
    if kind in ("floats", "floats?"):
        if kind == "floats?" and raw.lower() in ("", "none"):
            return None
        return tuple(float(p) for p in raw.split(",") if p.strip())
    if kind == "words":
        return tuple(p.strip().lower() for p in raw.split(",") if p.strip())
    raise AssertionError(kind)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    return str(v)


def validate_config(cfg: ExperimentConfig) -> list:
    """Every violated constraint as a message with the numbers involved (empty if valid)."""
    errs = []
    if not cfg.fs_fast > 0:
        errs.append(f"fs_fast={cfg.fs_fast} must be positive")
    if cfg.factor < 1:
        errs.append(f"factor F={cfg.factor} must be >= 1")
    if not cfg.measurement_time > 0:
        errs.append(f"measurement_time={cfg.measurement_time} must be positive")
    grid_ok = False
    if not errs:
        n = cfg.fs_fast * cfg.measurement_time
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            errs.append(f"N = fs_fast*measurement_time = {n} is not an integer")
        elif cfg.N % cfg.factor:
            errs.append(f"F={cfg.factor} does not divide N={cfg.N}")
        else:
            grid_ok = True
    M = cfg.M if grid_ok else None
    errs += LpmConfig(cfg.R, cfg.nw, max(cfg.factor, 1), cfg.rank_tol, cfg.normalize_basis).errors(M)

    if (cfg.plant_num is None) != (cfg.plant_den is None):
        errs.append("plant needs both num and den, or neither")
    elif cfg.plant_num is not None:
        if not cfg.plant_den or cfg.plant_den[0] == 0:
            errs.append("plant den must start with a nonzero coefficient")
        if not cfg.plant_num:
            errs.append("plant num must not be empty")
    else:
        if len(cfg.plant_resonances_hz) != len(cfg.plant_damping):
            errs.append(f"{len(cfg.plant_resonances_hz)} resonances but "
                        f"{len(cfg.plant_damping)} damping values")
        for z in cfg.plant_damping:
            if not 0 < z < 1:
                errs.append(f"damping {z} must lie in (0, 1)")
        for f in cfg.plant_resonances_hz:
            if cfg.fs_fast > 0 and not 0 < f < cfg.fs_fast / 2:
                errs.append(f"resonance {f} Hz must lie in (0, fs_fast/2 = {cfg.fs_fast / 2})")
        if cfg.plant_delay < 0:
            errs.append(f"plant delay {cfg.plant_delay} must be >= 0")
    if not cfg.noise_den or cfg.noise_den[0] == 0:
        errs.append("noise den must start with a nonzero coefficient")
    if not cfg.noise_num:
        errs.append("noise num must not be empty")
    if cfg.noise_sigma < 0:
        errs.append(f"noise sigma {cfg.noise_sigma} must be >= 0")
    if cfg.noise_snr_db is not None and cfg.noise_sigma > 0:
        errs.append("give either noise sigma or snr_db, not both")
    if not cfg.rms > 0:
        errs.append(f"excitation rms {cfg.rms} must be positive")
    if not cfg.sparse_rms > 0:
        errs.append(f"sparse excitation rms {cfg.sparse_rms} must be positive")
    bad = [m for m in cfg.methods if m not in METHODS]
    if bad:
        errs.append(f"unknown methods {bad}; choose from {list(METHODS)}")
    if not cfg.methods:
        errs.append("no identification method selected")
    if "sparse" in cfg.methods and grid_ok and cfg.M % 2:
        errs.append(f"sparse multisine needs an even slow record length, got M={cfg.M}")
    if cfg.runs < 2:
        errs.append(f"runs={cfg.runs} must be >= 2")
    if cfg.n_jobs < 1:
        errs.append(f"n_jobs={cfg.n_jobs} must be >= 1")
    return errs


def load_config(path) -> ExperimentConfig:
    """Read and validate a config file; raises :class:`ConfigError`."""
    cfg = ExperimentConfig.from_file(path)
    errs = validate_config(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg
