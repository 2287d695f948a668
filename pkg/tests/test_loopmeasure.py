import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrsle.loopmeasure import (LoopBattery, LoopParams, curve_distance, estimate_loop_term, lattice_loop_mass,
                               lattice_loop_oracle, radial_rays)


def ray(angle, r_in, r_out=1.0, m=200):
    return np.linspace(r_out, r_in, m) * np.exp(1j * angle)


def test_single_curve_has_no_mass():
    c = [ray(0.0, 0.3)]
    assert estimate_loop_term(c).mass == 0.0
    assert lattice_loop_oracle(c, 0.05).mass == 0.0


def test_refuses_unresolved_curves():
    a = ray(0.0, 0.5, m=5)
    b = ray(0.05, 0.5, m=5)
    with pytest.raises(ValueError):
        estimate_loop_term([a, b])
    with pytest.raises(ValueError):
        lattice_loop_oracle([ray(0.0, 0.2), ray(math.pi, 0.2)], 0.2)


def test_estimate_fields_and_json():
    est = estimate_loop_term([ray(0.0, 0.3), ray(math.pi, 0.3)], LoopParams(n_samples=2000))
    assert est.mass >= 0 and est.stderr >= 0 and est.n_samples == 2000
    assert est.method == "bridge_mc" and est.t_max == 8.0
    assert est.t_min_cutoff == pytest.approx((curve_distance([ray(0.0, 0.3), ray(math.pi, 0.3)]) / 6) ** 2)
    d = json.loads(est.to_json())
    for key in ("method", "mass", "stderr", "n_samples", "t_min", "t_max", "config_hash"):
        assert key in d


def test_monotone_under_inclusion():
    params = LoopParams(n_samples=4000, t_min=0.002, seed=3)
    bat = LoopBattery.draw(params.t_min, params)
    a = ray(0.0, 0.25)
    short, long = ray(2.0, 0.6), ray(2.0, 0.2)
    v_short = bat.values([a, short])
    v_long = bat.values([a, np.concatenate((short, long[long.size // 2:]))])
    # per loop the count of curves hit can only grow
    assert np.all(v_long >= v_short - 1e-15)
    assert v_long.mean() > v_short.mean()


def test_tiny_far_arcs():
    params = LoopParams(n_samples=4000, seed=5)
    a = 0.95 * np.exp(1j * np.linspace(0.0, 0.1, 30))
    b = 0.95 * np.exp(1j * np.linspace(math.pi, math.pi + 0.1, 30))
    full = estimate_loop_term([a, b], params)
    assert full.mass < 1e-3
    bat = LoopBattery.draw(full.t_min_cutoff, params)
    assert bat.values([a[:10], b]).mean() <= bat.values([a, b]).mean()


@settings(max_examples=8)
@given(st.floats(0.0, 2 * math.pi))
def test_rotation_invariance(phi):
    params = LoopParams(n_samples=3000, t_min=0.003, seed=11)
    bat = LoopBattery.draw(params.t_min, params)
    curves = [ray(0.2, 0.3), ray(2.5, 0.4)]
    rot = [c * np.exp(1j * phi) for c in curves]
    x, y = bat.values(curves), bat.values(rot)
    se = math.hypot(x.std(ddof=1), y.std(ddof=1)) / math.sqrt(x.size)
    assert abs(x.mean() - y.mean()) <= 3 * se


def test_cutoff_robustness():
    curves = [ray(0.0, 0.3), ray(math.pi, 0.3)]
    p = LoopParams(n_samples=20000, seed=2)
    a = estimate_loop_term(curves, p)
    b = estimate_loop_term(curves, LoopParams(n_samples=20000, seed=2, t_min=a.t_min_cutoff / 2))
    assert abs(a.mass - b.mass) <= a.bias_bound + 3 * math.hypot(a.stderr, b.stderr)
    assert a.bias_bound < 0.05 * a.mass


def test_lattice_swap_symmetry():
    curves = [ray(0.0, 0.3), ray(2.0, 0.5)]
    m1 = lattice_loop_mass(curves, 0.05)
    m2 = lattice_loop_mass(curves[::-1], 0.05)
    assert m1 == pytest.approx(m2, rel=1e-12)
    assert m1 > 0


def test_lattice_levels_are_deterministic():
    curves = [ray(0.0, 0.3), ray(math.pi, 0.3)]
    a = lattice_loop_oracle(curves, 0.05, seed=1)
    b = lattice_loop_oracle(curves, 0.05, seed=1)
    assert a.mass == b.mass and a.levels == b.levels and a.method == "lattice_det"


def test_bridge_matches_lattice_on_antipodal_segments():
    r = math.exp(-1)
    curves = [ray(0.0, r, m=400), ray(math.pi, r, m=400)]
    lat = lattice_loop_oracle(curves, 1 / 20)
    mc = estimate_loop_term(curves, LoopParams(n_samples=20000, seed=8))
    assert abs(lat.mass - mc.mass) <= 3 * math.hypot(lat.stderr, mc.stderr)


def test_radial_rays_tip():
    from scipy.optimize import brentq
    for n, T in ((2, 0.5), (3, 0.3)):
        rays = radial_rays(n, T)
        r = brentq(lambda x: 4 * x / (1 + x) ** 2 - math.exp(-n * n * T), 1e-300, 1.0, xtol=1e-15) ** (1 / n)
        assert abs(rays[0][-1]) == pytest.approx(r, rel=1e-9)
        assert len(rays) == n
