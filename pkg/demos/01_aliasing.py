# %% [markdown]
# # What a slow sensor sees
#
# Sampling a fast record every F-th sample folds F fast bins onto each slow
# bin.  This script checks that folding rule numerically and shows why a
# per-bin ratio of output over input cannot undo it.

# %%
import numpy as np

from slowfrf import FrequencyGrid, alias_spectrum, dft, downsample

rng = np.random.default_rng(0)
grid = FrequencyGrid(M=16, F=4, Tsh=1 / 120)
print(f"fast bins N={grid.N}, slow bins M={grid.M}, slow Nyquist {grid.fs_slow / 2} Hz")

# %%
x = rng.standard_normal(grid.N)
slow = dft(downsample(x, grid.F)).values
folded = alias_spectrum(dft(x), grid.F).values
print("max |DFT(decimated) - folded fast DFT| =", np.max(np.abs(slow - folded)))

# %% [markdown]
# A single line at fast bin 21 lands on slow bin 21 mod 16 = 5, scaled by 1/F.

# %%
X = np.zeros(grid.N, complex)
X[21] = 8.0
print("slow spectrum:", np.round(alias_spectrum(X, grid.F).values, 3))
