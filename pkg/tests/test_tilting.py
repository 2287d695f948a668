import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrsle.config import equally_spaced
from mrsle.drivers import simulate_dyson
from mrsle.energy import psi
from mrsle.loewner import DriverPath
from mrsle.rng import SeededRng
from mrsle.tilting import (concentration_experiment, importance_sample_nradial, rn_weight, weighted_ks)


@given(st.integers(2, 4), st.floats(0.05, 4.0), st.floats(0.0, 2.0), st.integers(0, 1000))
def test_weight_is_exponential_of_psi(n, kappa, L, seed):
    d = simulate_dyson(equally_spaced(n, 0.4).angles, kappa, 0.05, 1e-2, SeededRng(seed))
    w = rn_weight(d, L, kappa)
    assert w == pytest.approx(math.exp(psi(d, L, kappa) / kappa), rel=1e-10)


def test_weight_trivial_cases():
    d = DriverPath(1e-2, equally_spaced(3).angles[None, :])
    # curves of zero length meet no loops
    assert rn_weight(d, 0.0, 2.0, T=0.0) == 1.0
    d = simulate_dyson(equally_spaced(2).angles, 8 / 3, 0.2, 1e-2, SeededRng(1))
    assert rn_weight(d, 0.0, 8 / 3) == pytest.approx(rn_weight(d, 5.0, 8 / 3), rel=1e-12)
    collided = DriverPath(1e-2, np.array([[0.0, 1.0], [0.5, 0.5]]))
    assert rn_weight(collided, 0.0, 4.0) == 0.0


def test_weighted_ks():
    x = np.array([0.1, 0.2, 0.3])
    assert weighted_ks(x, np.ones(3), x) == 0.0
    assert weighted_ks(x, [1, 0, 0], [0.25]) == 1.0
    # cdfs 1/4, 1/2, 1 against 1/3, 2/3, 1
    assert weighted_ks(x, [1, 1, 2], x) == pytest.approx(1 / 6, abs=1e-15)
    rng = np.random.default_rng(0)
    y = rng.normal(size=4000)
    assert weighted_ks(rng.normal(size=4000), np.ones(4000), y) < 0.05


def test_weighted_ks_against_definition():
    rng = np.random.default_rng(3)
    x, w, y = rng.normal(size=50), rng.uniform(size=50), rng.normal(size=40)
    grid = np.concatenate((x, y))
    fx = np.array([w[x <= g].sum() / w.sum() for g in grid])
    fy = np.array([(y <= g).mean() for g in grid])
    assert weighted_ks(x, w, y) == pytest.approx(np.max(np.abs(fx - fy)), abs=1e-14)


def test_sampler_without_loops_at_zero_charge():
    ens = importance_sample_nradial(8 / 3, 2, T=0.1, dt=5e-3, n_samples=30, rng=4)
    assert ens.weights.size + ens.collided.sum() == 30
    assert np.all(ens.loop_mass == 0.0)
    assert ens.ess > 10 and not ens.inconclusive
    assert np.all(np.isfinite(ens.weights)) and np.all(ens.weights > 0)
    m, se = ens.mean(lambda s: np.mod(s[:, 1] - s[:, 0], 2 * math.pi))
    assert 0 < m < 2 * math.pi and se > 0
    with pytest.raises(ValueError):
        importance_sample_nradial(5.0, 2)


@settings(max_examples=5)
@given(st.integers(0, 100))
def test_sampler_is_deterministic(seed):
    a = importance_sample_nradial(2.0, 2, T=0.05, dt=1e-2, n_samples=4, rng=seed)
    b = importance_sample_nradial(2.0, 2, T=0.05, dt=1e-2, n_samples=4, rng=seed)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.final_states, b.final_states)


def test_concentration_zero_noise_and_order():
    r = concentration_experiment(2, kappa_grid=(0.0,), T=0.2, dt=1e-2, n_samples=3)
    assert r["median"] == [0.0]
    r = concentration_experiment(2, kappa_grid=(1.0, 0.1), T=0.2, dt=1e-2, n_samples=40)
    assert r["strictly_decreasing"]
    assert r["fitted_power"] == pytest.approx(0.5, abs=0.15)


def test_concentration_rotation_invariant():
    th = np.array([0.3, 2.0])
    a = concentration_experiment(2, th, kappa_grid=(0.5,), T=0.2, dt=1e-2, n_samples=20, seed=5)
    b = concentration_experiment(2, th + 1.7, kappa_grid=(0.5,), T=0.2, dt=1e-2, n_samples=20, seed=5)
    assert a["median"][0] == pytest.approx(b["median"][0], abs=1e-9)
