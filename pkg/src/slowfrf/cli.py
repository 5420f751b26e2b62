"""Command line entry point: ``slowfrf <subcommand> ...``.

Exit codes: 0 success, 1 configuration error, 2 runtime or numerical error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import METHODS, ConfigError, ExperimentConfig, validate_config
from .excitation import full_excitation, random_phase_multisine, sparse_excitation
from .harness import compare_methods, run_identify, run_montecarlo, simulate_experiment
from .io import write_json, write_record_csv

log = logging.getLogger("slowfrf")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _methods(text: str):
    methods = tuple(m.strip().lower() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown methods {bad}; choose from {list(METHODS)}")
    return methods


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        changes["runs"] = args.runs
    if getattr(args, "methods", None) is not None:
        changes["methods"] = args.methods
    if getattr(args, "jobs", None) is not None:
        changes["n_jobs"] = args.jobs
    cfg = cfg.replace(**changes)
    errs = validate_config(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def _out(args, cfg) -> Path:
    return Path(args.out) if args.out else Path(cfg.out_dir)


def cmd_validate(args) -> int:
    cfg = _load(args)
    g = cfg.grid
    print(f"config OK: N={g.N}, M={g.M}, F={g.F}, fs_fast={g.fs_fast:g} Hz, fs_slow={g.fs_slow:g} Hz, "
          f"window 2nw+1={cfg.lpm.window}, parameters (F+1)(R+1)={cfg.lpm.n_params}")
    return EXIT_OK


def cmd_excite(args) -> int:
    cfg = _load(args)
    seeds = cfg.seeds()
    if args.kind == "sparse":
        spec = sparse_excitation(cfg.grid, cfg.sparse_rms, seeds["sparse_excitation"])
    else:
        spec = full_excitation(cfg.grid, cfg.rms, seeds["excitation"], cfg.include_dc, cfg.include_nyquist)
    x, _ = random_phase_multisine(spec)
    out = _out(args, cfg)
    path = write_record_csv(out / f"excitation_{args.kind}.csv", x, cfg.grid.Tsh)
    (out / "config_resolved.ini").write_text(cfg.to_ini())
    print(path)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    files = {}
    for kind in args.kinds:
        d = simulate_experiment(cfg, kind)
        suffix = "" if kind == "full" else "_sparse"
        write_record_csv(out / f"u_fast{suffix}.csv", d.u, d.grid.Tsh)
        write_record_csv(out / f"y_slow{suffix}.csv", d.y, d.grid.Tsl)
        files[kind] = {"input": f"u_fast{suffix}.csv", "output": f"y_slow{suffix}.csv",
                       "noise_sigma": d.sigma, "excitation_seed": d.excitation_seed,
                       "noise_seed": d.noise_seed}
    (out / "config_resolved.ini").write_text(cfg.to_ini())
    write_json(out / "simulate.json", {"config_sha256": cfg.sha256(), "records": files})
    print(out)
    return EXIT_OK


def cmd_identify(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    res = run_identify(cfg, out_dir=out, input_csv=args.input_csv, output_csv=args.output_csv)
    for method, s in res.manifest["oracle_summary"].items():
        print(f"{method:>6}: median rel. error above slow Nyquist "
              f"{s['median_rel_error_above_slow_nyquist']}, max {s['max_rel_error']}")
    print(out)
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    res = run_montecarlo(cfg, out_dir=out)
    s = res.summary
    print(f"{s['runs']} runs, median analytic/empirical variance ratio: "
          f"F-scaled {s['median_ratio']['F']:.3f}, F^2-scaled {s['median_ratio']['F2']:.3f}; "
          f"matching scaling: {s['winning_scaling']}")
    print(out)
    return EXIT_OK


def cmd_compare(args) -> int:
    out = Path(args.out) if args.out else Path(args.bundles[0])
    res = compare_methods(args.bundles, out_dir=out)
    sys.stdout.write(res.text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slowfrf", description=(
        "Identify fast-rate frequency response functions from slow-sampled outputs."))
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True, seed=True):
        sp.add_argument("--config", type=Path, help="INI config file (defaults if omitted)")
        if out:
            sp.add_argument("--out", type=Path, help="output directory (default: [experiment] out_dir)")
        if seed:
            sp.add_argument("--seed", type=int, help="override the master seed")

    sp = sub.add_parser("validate", help="check a config and print derived sizes")
    common(sp, out=False, seed=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("excite", help="write an excitation record to CSV")
    common(sp)
    sp.add_argument("--kind", choices=("full", "sparse"), default="full")
    sp.set_defaults(func=cmd_excite)

    sp = sub.add_parser("simulate", help="simulate and write input/output records")
    common(sp)
    sp.add_argument("--kinds", type=lambda s: tuple(s.split(",")), default=("full",),
                    help="comma list of experiments: full,sparse")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("identify", help="run the identification pipeline")
    common(sp)
    sp.add_argument("--methods", type=_methods, help="comma list from lpm,sparse,etfe")
    sp.add_argument("--jobs", type=int, help="worker threads for the per-bin loop")
    sp.add_argument("--input-csv", type=Path, help="measured fast input record")
    sp.add_argument("--output-csv", type=Path, help="measured slow output record")
    sp.set_defaults(func=cmd_identify)

    sp = sub.add_parser("montecarlo", help="variance study over noise realizations")
    common(sp)
    sp.add_argument("--runs", type=int, help="number of realizations")
    sp.add_argument("--jobs", type=int, help="worker threads for the per-bin loop")
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("compare", help="per-band error table of identification bundles")
    sp.add_argument("bundles", nargs="+", type=Path)
    sp.add_argument("--out", type=Path, help="where to write comparison.csv/.txt")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # stage-tagged where the harness knows the stage
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
