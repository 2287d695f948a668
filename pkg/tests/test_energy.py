import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrsle.config import equally_spaced, log_partition_u
from mrsle.drivers import simulate_dyson, single_radial_driver, zero_energy_driver
from mrsle.energy import (blm_rate_finite_T, dyson_dirichlet_energy, extract_single_driver, independent_energy,
                          psi, single_energy, sle_constants, steady_convergence_diagnostic)
from mrsle.loewner import DriverPath, trace, trace_single
from mrsle.rng import SeededRng


def rotating(n, omega, T, dt):
    t = dt * np.arange(int(round(T / dt)) + 1)
    return DriverPath(dt, equally_spaced(n).angles[None, :] + omega * t[:, None])


def test_constants():
    assert sle_constants(8 / 3, 2).central_charge == pytest.approx(0.0, abs=1e-15)
    assert sle_constants(6.0, 3).central_charge == 0.0
    assert sle_constants(2.0, 5).central_charge == -2.0
    assert sle_constants(4.0, 2).beta_hat == 0.25
    for k in (0.3, 1.0, 4.0, 7.0):
        assert sle_constants(k, 1).beta_hat == 0.0
    with pytest.raises(ValueError):
        sle_constants(0.0, 2)


def test_zero_energy_driver_has_no_energy():
    d = zero_energy_driver([0.0, 0.6, 2.0], 1.0, 1e-3)
    assert dyson_dirichlet_energy(d) < 1e-6
    assert dyson_dirichlet_energy(zero_energy_driver(equally_spaced(3).angles, 1.0, 1e-3)) < 1e-20


def test_rotating_driver_energy():
    for n in (2, 3):
        e = dyson_dirichlet_energy(rotating(n, 0.3, 2.0, 1e-3))
        assert e == pytest.approx(n * 0.3**2 * 2.0 / 2, rel=5e-3)


def test_energy_split_and_rotation():
    d = simulate_dyson(equally_spaced(2).angles, 1.0, 0.4, 1e-3, SeededRng(5))
    whole = dyson_dirichlet_energy(d)
    a = DriverPath(d.dt, d.states[:151])
    b = DriverPath(d.dt, d.states[150:])
    assert abs(dyson_dirichlet_energy(a) + dyson_dirichlet_energy(b) - whole) < 1e-10 * max(1, whole)
    assert abs(dyson_dirichlet_energy(d.rotated(2.7)) - whole) < 1e-10 * max(1, whole)
    prefixes = [dyson_dirichlet_energy(d.truncated(k)) for k in range(0, 401, 50)]
    assert np.all(np.diff(prefixes) >= 0)


def test_extract_straight_segment():
    c = trace(DriverPath.constant([0.7], 0.5, 1e-3))
    ex = extract_single_driver(c.points[:, 0])
    assert np.max(np.abs(ex.theta - 0.7)) < 1e-3
    assert ex.s[-1] == pytest.approx(0.5, abs=5e-3)


def test_extract_brownian_roundtrip():
    th = single_radial_driver(0.0, 1.0, 0.2, 1e-4, SeededRng(6))
    ic = trace_single(th, 1e-4)
    ex = extract_single_driver(ic.points)
    assert ex.retrace_error < 5e-3


def test_extract_rotating_roundtrip_and_energy():
    omega, S, ds = 0.8, 1.0, 1e-3
    th = omega * ds * np.arange(int(S / ds) + 1)
    ic = trace_single(th, ds)
    ex = extract_single_driver(ic.points)
    mid = 0.5 * (th[:-1] + th[1:])
    assert np.max(np.abs(ex.theta - mid)) < 1e-3
    assert single_energy(ex) == pytest.approx(omega**2 * S / 2, rel=1e-2)


def test_independent_energy():
    c = trace(DriverPath.constant(equally_spaced(3).angles, 0.5, 1e-3))
    assert independent_energy(c) < 1e-4
    single = trace(rotating(1, 0.5, 1.0, 1e-3))
    assert independent_energy(single) == pytest.approx(0.5**2 * 1.0 / 2, rel=1e-2)


def test_psi_at_time_zero():
    d = DriverPath(1e-3, np.array([[0.0, 1.0, 3.0]]))
    for kappa in (0.0, 1.0, 4.0):
        assert psi(d, 0.0, kappa) == 0.0


@given(st.floats(0.0, 3.0), st.floats(0.0, 2.0), st.integers(2, 4))
def test_psi_continuous_at_zero(L, T, n):
    rng = np.random.default_rng(n)
    a = np.sort(rng.uniform(0, 2 * math.pi, n))
    b = equally_spaced(n, 0.3).angles
    d = DriverPath(T / 10 if T > 0 else 1e-3, np.linspace(a, b, 11) if T > 0 else a[None, :])
    p0 = psi(d, L, 0.0, T)
    for kappa in (1e-4, 1e-6, 1e-8):
        assert abs(psi(d, L, kappa, T) - p0) < 100 * kappa * (1 + L + T)
    assert p0 <= log_partition_u(a) + 0.5 * (n + 4) * (n - 1) * n * T + 1e-12


def test_blm_rate_record():
    d = zero_energy_driver(equally_spaced(2).angles, 0.5, 1e-3)
    c = trace(d)
    r = blm_rate_finite_T(d, c, 0.1, loop_stderr=0.01)
    assert r.rate_dyson < 1e-6
    assert r.l_hat == pytest.approx(0.1 - 6 * 1 * 2 * 0.5 / 24, abs=1e-15)
    assert r.stderr == pytest.approx(0.12)
    assert r.rate_bm_form == pytest.approx(r.energy_indep - r.psi0)


def test_steady_diagnostic_trivial_families():
    f0 = np.linspace(-20, 20, 41)
    same = steady_convergence_diagnostic({k: f0 for k in (0.1, 0.2, 0.5)}, f0)
    assert all(v["steady"] for v in same["summary"].values())
    shifted = steady_convergence_diagnostic({k: f0 + k for k in (0.1, 0.2, 0.5)}, f0)
    for M, dev in shifted["deviation"].items():
        for k, v in dev.items():
            assert v == pytest.approx(k)
    assert shifted["summary"][(1.0, 0.5)]["kappa_eps"] == 0.2
    assert all(shifted["deviation_monotone"].values())
    with pytest.raises(ValueError):
        steady_convergence_diagnostic({0.1: f0, 0.2: f0}, f0)
