import numpy as np
import pytest

from slowfrf.plantsim import (NoiseModel, PlantModel, add_noise, simulate_lti,
                              simulate_steady_state, slow_sample, steady_state_periods, true_frf)
from slowfrf.spectra import FrequencyGrid, alias_spectrum, dft

from conftest import reference_plant


def test_passthrough_and_unit_delay(rng):
    u = rng.standard_normal(50)
    np.testing.assert_array_equal(simulate_lti(PlantModel([1.0], [1.0]), u), u)
    y = simulate_lti(PlantModel([0.0, 1.0], [1.0]), u)
    assert y[0] == 0.0
    np.testing.assert_array_equal(y[1:], u[:-1])


def test_initial_state_is_used():
    y = simulate_lti(PlantModel([1.0], [1.0, -0.5]), np.zeros(3), initial_state=[2.0])
    np.testing.assert_allclose(y, [2.0, 1.0, 0.5])


def test_simulate_rejects_empty():
    with pytest.raises(ValueError):
        simulate_lti(PlantModel([1.0], [1.0]), [])


def test_plant_normalization_and_validation():
    p = PlantModel([2.0, 4.0], [2.0, -1.0])
    np.testing.assert_allclose(p.num, [1.0, 2.0])
    np.testing.assert_allclose(p.den, [1.0, -0.5])
    assert p.is_stable() and p.max_pole_radius == pytest.approx(0.5)
    assert not PlantModel([1.0], [1.0, -1.5]).is_stable()
    with pytest.raises(ValueError):
        PlantModel([1.0], [0.0, 1.0])


def test_reference_plant_shape():
    p = reference_plant()
    assert p.den.size == 5 and p.is_stable()
    assert abs(true_frf(p, np.array([0.0]))[0]) == pytest.approx(1.0, rel=1e-12)
    f = np.linspace(0.01, 59.9, 5000)
    mag = np.abs(true_frf(p, 2 * np.pi * f))
    inner = (mag[1:-1] > mag[:-2]) & (mag[1:-1] > mag[2:])
    peaks = f[1:-1][inner]
    assert len(peaks) == 2 and peaks[0] < 15.0 < peaks[1]    # second resonance beyond 15 Hz


def test_true_frf_known_values():
    assert true_frf(PlantModel([1.0], [1.0]), np.array([0.3]))[0] == pytest.approx(1.0)
    p = PlantModel([0.0, 1.0], [1.0], Tsh=1.0)
    assert true_frf(p, np.array([np.pi / 2]))[0] == pytest.approx(-1j, abs=1e-15)
    p = PlantModel([0.5, 0.25], [1.0, -0.5, 0.2])
    assert true_frf(p, np.array([0.0]))[0] == pytest.approx(0.75 / 0.7, rel=1e-14)


def test_true_frf_on_pole_raises():
    with pytest.raises(ZeroDivisionError):
        true_frf(PlantModel([1.0], [1.0, -1.0]), np.array([0.0, 1.0]))


def test_steady_state_matches_frf(rng):
    p = PlantModel([0.2, 0.1], [1.0, -1.2, 0.5], Tsh=1.0)
    N = 256
    u = rng.standard_normal(N)
    y = simulate_steady_state(p, u)
    U, Y = dft(u).values, dft(y).values
    k = np.arange(1, N // 2)
    G = true_frf(p, 2 * np.pi * k / N)
    ratio = Y[k] / U[k]
    assert np.max(np.abs(ratio - G) / np.abs(G)) <= 1e-8


def test_steady_state_periods_formula():
    p = PlantModel([1.0], [1.0, -0.9])
    assert steady_state_periods(p, 10) == int(np.ceil(np.log(1e-12) / np.log(0.9) / 10))
    assert steady_state_periods(PlantModel([1.0], [1.0]), 10) == 1
    with pytest.raises(ValueError):
        steady_state_periods(PlantModel([1.0], [1.0, -1.0]), 10)


def test_resonant_constructor():
    p = PlantModel.resonant(120.0, (20.0,), (0.1,), dc_gain=3.0, delay=2)
    assert true_frf(p, np.array([0.0]))[0] == pytest.approx(3.0, rel=1e-12)
    np.testing.assert_allclose(np.abs(p.poles), np.exp(-0.1 * 2 * np.pi * 20.0 / 120.0))
    assert p.num[0] == 0 and p.num[1] == 0


def test_white_noise_moments():
    n = 1_000_000
    _, v = add_noise(np.zeros(n), NoiseModel(sigma=1.0, seed=42))
    assert abs(v.mean()) <= 4 / np.sqrt(n)
    assert v.std() == pytest.approx(1.0, rel=0.01)


def test_zero_sigma_is_exact_copy(rng):
    y = rng.standard_normal(100)
    noisy, v = add_noise(y, NoiseModel(sigma=0.0, seed=1))
    assert noisy.tobytes() == y.tobytes() and not np.any(v)
    assert noisy is not y


def test_noise_determinism_and_coloring(rng):
    y = np.zeros(4000)
    a, va = add_noise(y, NoiseModel([1.0], [1.0, -0.9], 0.3, seed=5))
    b, _ = add_noise(y, NoiseModel([1.0], [1.0, -0.9], 0.3, seed=5))
    c, _ = add_noise(y, NoiseModel([1.0], [1.0, -0.9], 0.3, seed=6))
    assert a.tobytes() == b.tobytes() and not np.array_equal(a, c)
    lag1 = np.corrcoef(va[:-1], va[1:])[0, 1]
    assert lag1 > 0.8


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(sigma=-1.0)


def test_end_to_end_aliasing(rng):
    grid = FrequencyGrid(M=200, F=4, Tsh=1.0)
    u = rng.standard_normal(grid.N)
    y_h = simulate_steady_state(reference_plant(1.0), u)
    y_l = slow_sample(y_h, grid.F)
    assert y_l.size == grid.M
    lhs = dft(y_l).values
    rhs = alias_spectrum(dft(y_h), grid.F).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(rhs))
