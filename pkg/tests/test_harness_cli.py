import csv
import json

import numpy as np
import pytest

from slowfrf import cli
from slowfrf.config import ConfigError, ExperimentConfig
from slowfrf.harness import band_of_bins, compare_methods, run_identify, run_montecarlo, simulate_experiment
from slowfrf.io import read_frf_csv, read_json, read_record_csv, write_frf_csv, write_record_csv
from slowfrf.spectra import FrequencyGrid

SMALL = """
[grid]
measurement_time = 10
[lpm]
half_width = 20
[experiment]
methods = {methods}
seed = 4
runs = 8
"""


def small_cfg(methods="lpm, etfe", **changes):
    return ExperimentConfig.from_ini(SMALL.format(methods=methods)).replace(**changes)


def write_cfg(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- file formats -------------------------------------------------------

def test_record_csv_round_trip(tmp_path, rng):
    x = rng.standard_normal(37)
    p = write_record_csv(tmp_path / "r.csv", x, 0.25)
    y, Ts = read_record_csv(p)
    assert y.tobytes() == x.tobytes() and Ts == pytest.approx(0.25)
    assert p.read_text().splitlines()[0] == "sample_index,time_s,value"


def test_record_csv_rejects_bad_files(tmp_path):
    (tmp_path / "a.csv").write_text("sample_index,value\n0,1\n")
    (tmp_path / "b.csv").write_text("sample_index,time_s,value\n0,0,1\n2,1,1\n")
    (tmp_path / "c.csv").write_text("sample_index,time_s,value\n")
    for name in "abc":
        with pytest.raises(ValueError):
            read_record_csv(tmp_path / f"{name}.csv")


def test_frf_csv_round_trip(tmp_path):
    G = np.array([1 + 1j, np.nan + 0j, -2.0 + 0j])
    p = write_frf_csv(tmp_path / "f.csv", [0.0, 1.0, 2.0], [0, 1, 2], G, [0.1, np.nan, 0.3],
                      [True, False, True])
    rows = read_csv(p)
    assert list(rows[0]) == ["bin", "freq_hz", "re", "im", "mag_db", "phase_rad", "variance", "valid_flag"]
    assert float(rows[0]["mag_db"]) == pytest.approx(20 * np.log10(np.sqrt(2)))
    assert float(rows[2]["phase_rad"]) == pytest.approx(np.pi)
    back = read_frf_csv(p)
    assert back["valid"].tolist() == [True, False, True]
    np.testing.assert_array_equal(back["G"][[0, 2]], G[[0, 2]])
    assert np.isnan(back["variance"][1])


def test_band_of_bins():
    grid = FrequencyGrid(M=8, F=4, Tsh=1.0)
    # positive frequencies 0..16 -> bands of width M/2 = 4 bins
    assert band_of_bins([0, 4, 5, 8, 9, 12, 13, 16, 31], grid).tolist() == [1, 1, 2, 2, 3, 3, 4, 4, 1]


# -- pipeline -------------------------------------------------------------

def test_identify_bundle_contents(tmp_path):
    res = run_identify(small_cfg(), out_dir=tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"frf_lpm.csv", "frf_etfe.csv", "u_fast.csv", "y_slow.csv", "manifest.json",
            "config_resolved.ini", "error_vs_oracle.csv", "lpm_diagnostics.csv",
            "timing.json"} == names
    man = read_json(tmp_path / "manifest.json")
    assert man["schema"] == "slowfrf.bundle/1" and man["methods"] == ["lpm", "etfe"]
    assert man["config_sha256"] == small_cfg().sha256()
    assert man["files"]["full"] == {"input": "u_fast.csv", "output": "y_slow.csv"}
    assert man["seeds"]["master"] == 4
    cfg_back = ExperimentConfig.from_ini((tmp_path / "config_resolved.ini").read_text())
    assert cfg_back.sha256() == man["config_sha256"]
    u, _ = read_record_csv(tmp_path / "u_fast.csv")
    y, _ = read_record_csv(tmp_path / "y_slow.csv")
    assert u.size == 1200 and y.size == 300
    assert len(read_frf_csv(tmp_path / "frf_lpm.csv")["bin"]) == 1200
    assert res.manifest["oracle_summary"]["lpm"]["median_rel_error_above_slow_nyquist"] < 0.05


def test_identify_is_byte_identical_on_rerun(tmp_path):
    cfg = small_cfg("lpm, etfe, sparse", noise_snr_db=30.0)
    with pytest.warns(Warning):
        run_identify(cfg, out_dir=tmp_path / "a")
    with pytest.warns(Warning):
        run_identify(cfg, out_dir=tmp_path / "b", n_jobs=3)
    for p in sorted((tmp_path / "a").iterdir()):
        if p.name != "timing.json":
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes(), p.name


def test_external_csv_path_matches_simulation(tmp_path):
    cfg = small_cfg("lpm", noise_snr_db=30.0)
    d = simulate_experiment(cfg)
    write_record_csv(tmp_path / "u.csv", d.u, d.grid.Tsh)
    write_record_csv(tmp_path / "y.csv", d.y, d.grid.Tsl)
    sim = run_identify(cfg)
    ext = run_identify(cfg, out_dir=tmp_path / "out", input_csv=tmp_path / "u.csv",
                       output_csv=tmp_path / "y.csv")
    np.testing.assert_array_equal(ext.estimates["lpm"].G, sim.estimates["lpm"].G)
    names = {p.name for p in (tmp_path / "out").iterdir()}
    assert "error_vs_oracle.csv" not in names and "u_fast.csv" not in names
    man = read_json(tmp_path / "out" / "manifest.json")
    assert man["data_source"] == "external" and man["plant"] is None


def test_external_csv_length_mismatch(tmp_path):
    cfg = small_cfg("lpm")
    write_record_csv(tmp_path / "u.csv", np.zeros(1200), 1 / 120)
    write_record_csv(tmp_path / "y.csv", np.zeros(299), 1 / 30)
    with pytest.raises(ConfigError):
        run_identify(cfg, input_csv=tmp_path / "u.csv", output_csv=tmp_path / "y.csv")
    with pytest.raises(ConfigError):
        run_identify(cfg, input_csv=tmp_path / "u.csv")


def test_montecarlo_reproducible_and_quadratic_in_sigma(tmp_path):
    cfg = small_cfg("lpm", noise_sigma=1e-3)
    a = run_montecarlo(cfg, out_dir=tmp_path / "a")
    b = run_montecarlo(cfg, out_dir=tmp_path / "b", n_jobs=2)
    for name in ("montecarlo_bins.csv", "manifest.json", "config_resolved.ini"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    c = run_montecarlo(cfg.replace(noise_sigma=2e-3))
    ok = a.valid
    np.testing.assert_allclose(c.empirical_var[ok] / a.empirical_var[ok], 4.0, rtol=1e-6)
    assert a.summary["runs"] == 8 and set(a.summary["median_ratio"]) == {"F", "F2"}


def test_montecarlo_rejects_noise_free(tmp_path):
    with pytest.raises(ConfigError):
        run_montecarlo(small_cfg("lpm"))
    with pytest.raises(ConfigError):
        run_montecarlo(small_cfg("lpm", noise_sigma=1e-3), n_runs=1)


def test_compare_single_and_multiple_methods(tmp_path):
    run_identify(small_cfg("lpm"), out_dir=tmp_path / "one")
    res = compare_methods([tmp_path / "one"], out_dir=tmp_path)
    assert {r[0] for r in res.rows} == {"lpm"} and len(res.rows) == 4
    with pytest.warns(Warning):
        run_identify(small_cfg("lpm, etfe, sparse"), out_dir=tmp_path / "all")
    res = compare_methods([tmp_path / "all"], out_dir=tmp_path / "all")
    med = {(r[0], r[1]): r[5] for r in res.rows}
    for band in (2, 3, 4):
        assert med[("etfe", band)] >= 10 * med[("lpm", band)]
    for band in range(1, 5):
        ratio = res.resolution["lpm"][band] / res.resolution["sparse"][band]
        assert 3.8 <= ratio <= 4.2
    rows = read_csv(tmp_path / "all" / "comparison.csv")
    assert len(rows) == 12 and "ranking" in (tmp_path / "all" / "comparison.txt").read_text()


def test_compare_rejects_mismatched_grids(tmp_path):
    run_identify(small_cfg("etfe"), out_dir=tmp_path / "a")
    run_identify(small_cfg("etfe", measurement_time=20.0), out_dir=tmp_path / "b")
    with pytest.raises(ValueError):
        compare_methods([tmp_path / "a", tmp_path / "b"])


# -- command line -------------------------------------------------------

def test_cli_validate_exit_codes(tmp_path, capsys):
    good = write_cfg(tmp_path, SMALL.format(methods="lpm"))
    assert cli.main(["validate", "--config", str(good)]) == 0
    assert "N=1200" in capsys.readouterr().out
    bad = write_cfg(tmp_path, "[lpm]\nhalf_width = 6\n[excitation]\nrms = -1\n", "bad.ini")
    assert cli.main(["validate", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert err.count("config error") == 2


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    good = write_cfg(tmp_path, SMALL.format(methods="lpm"))
    code = cli.main(["identify", "--config", str(good), "--out", str(tmp_path / "o"),
                     "--input-csv", str(tmp_path / "missing_u.csv"),
                     "--output-csv", str(tmp_path / "missing_y.csv")])
    assert code == 2 and "error" in capsys.readouterr().err
    assert cli.main(["compare", str(tmp_path)]) == 2


def test_cli_identify_compare_and_overrides(tmp_path, capsys):
    cfgp = write_cfg(tmp_path, SMALL.format(methods="lpm, etfe"))
    out = tmp_path / "run"
    assert cli.main(["identify", "--config", str(cfgp), "--out", str(out), "--seed", "9",
                     "--methods", "etfe", "--jobs", "2"]) == 0
    man = read_json(out / "manifest.json")
    assert man["methods"] == ["etfe"] and man["seeds"]["master"] == 9
    assert "n_jobs" not in (out / "config_resolved.ini").read_text()
    assert cli.main(["compare", str(out)]) == 0
    assert "etfe" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        cli.main(["identify", "--methods", "magic"])


def test_cli_excite_simulate_montecarlo(tmp_path):
    cfgp = write_cfg(tmp_path, SMALL.format(methods="lpm"))
    assert cli.main(["excite", "--config", str(cfgp), "--out", str(tmp_path / "e"), "--kind", "sparse"]) == 0
    x, Ts = read_record_csv(tmp_path / "e" / "excitation_sparse.csv")
    assert x.size == 1200 and Ts == pytest.approx(1 / 120)
    assert cli.main(["simulate", "--config", str(cfgp), "--out", str(tmp_path / "s"),
                     "--kinds", "full,sparse"]) == 0
    info = json.loads((tmp_path / "s" / "simulate.json").read_text())
    assert set(info["records"]) == {"full", "sparse"}
    assert cli.main(["montecarlo", "--config", str(cfgp), "--out", str(tmp_path / "m")]) == 1
    noisy = write_cfg(tmp_path, SMALL.format(methods="lpm") + "[noise]\nsigma = 0.001\n", "n.ini")
    assert cli.main(["montecarlo", "--config", str(noisy), "--out", str(tmp_path / "m"),
                     "--runs", "4"]) == 0
    assert read_json(tmp_path / "m" / "manifest.json")["runs"] == 4
