"""Fast-rate FRF identification from slow-sampled outputs.

The fast-rate frequency response of an LTI system is recovered beyond the
Nyquist frequency of a slow sensor by fitting local polynomial models of
the FRF in every aliased band at once.
"""
__version__ = "0.1.0"

from .spectra import (FrequencyGrid, Spectrum, alias_spectrum, dft, downsample,
                      frequency_grid_values, gather_window, idft)
from .excitation import (ExcitationSpec, check_roughness, full_excitation,
                         full_spectrum_bins, random_phase_multisine, sparse_excitation,
                         sparse_multisine_bins)
from .plantsim import (NoiseModel, PlantModel, add_noise, simulate_lti,
                       simulate_steady_state, slow_sample, true_frf)
from .estimators import (FrfEstimate, LocalEstimate, LpmConfig, MultibandLPM,
                         PointEstimate, RankDeficientError, build_regression,
                         classical_lpm, estimate_frf_lpm, estimate_sparse,
                         estimate_variance, etfe_baseline, solve_local)
from .config import ConfigError, ExperimentConfig, load_config, validate_config
from .harness import compare_methods, run_identify, run_montecarlo, simulate_experiment
