# %% [markdown]
# # Identifying from measured CSV records
#
# A measured setup provides a fast input record and a slow output record.
# Here they are produced by the simulator, written to CSV, and read back
# through the same entry point the command line uses.

# %%
import tempfile
from pathlib import Path

from slowfrf import ExperimentConfig, run_identify, simulate_experiment
from slowfrf.io import read_frf_csv, read_json, write_record_csv

cfg = ExperimentConfig(measurement_time=20.0, nw=30, noise_snr_db=30.0, methods=("lpm",))
work = Path(tempfile.mkdtemp())
d = simulate_experiment(cfg)
write_record_csv(work / "u.csv", d.u, d.grid.Tsh)
write_record_csv(work / "y.csv", d.y, d.grid.Tsl)

# %%
run_identify(cfg, out_dir=work / "bundle", input_csv=work / "u.csv", output_csv=work / "y.csv")
print(sorted(p.name for p in (work / "bundle").iterdir()))
man = read_json(work / "bundle" / "manifest.json")
print("data source:", man["data_source"], "| invalid bins:", man["diagnostics"]["lpm"]["n_invalid"])

# %%
frf = read_frf_csv(work / "bundle" / "frf_lpm.csv")
for b in (100, 500, 900, 1100):
    print(f"{frf['freq_hz'][b]:6.2f} Hz  |G| = {abs(frf['G'][b]):.4f}  var = {frf['variance'][b]:.2e}")
print("\nsame through the CLI:")
print(f"  slowfrf identify --config my.ini --input-csv {work / 'u.csv'} --output-csv {work / 'y.csv'} --out out/")
