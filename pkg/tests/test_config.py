import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_config
from mrsle.config import (POS_COLLISION, CollisionError, TorusConfig, equally_spaced, grad_u,
                          is_collision, log_partition_u, partition_z, u_min)


def u_oracle(a):
    """Direct pairwise evaluation, written independently of the package."""
    tot = 0.0
    for i in range(len(a)):
        for j in range(i + 1, len(a)):
            tot += math.log(abs(math.sin((a[j] - a[i]) / 2)))
    return -2 * tot


def test_u_examples():
    assert log_partition_u([0.0, math.pi]) == pytest.approx(0.0, abs=1e-15)
    assert log_partition_u([0.0, math.pi / 2]) == pytest.approx(math.log(2), abs=1e-12)
    assert log_partition_u(equally_spaced(3)) == pytest.approx(3 * math.log(4 / 3), abs=1e-12)


def test_u_collision_sentinel():
    u = log_partition_u([1.0, 1.0])
    assert is_collision(u) and u == math.inf
    assert u is POS_COLLISION
    assert not is_collision(float("inf"))
    assert POS_COLLISION.to_json() == "+inf:collision"


def test_partition_z_examples():
    assert partition_z([0.0, math.pi], 2.0) == pytest.approx(1.0)
    assert partition_z([0.0, math.pi / 2], 2.0) == pytest.approx(math.sin(math.pi / 4), abs=1e-12)
    assert partition_z([0.3, 0.3], 4.0) == 0.0


def test_grad_examples():
    np.testing.assert_allclose(grad_u([0.0, math.pi / 2]), [1.0, -1.0], atol=1e-12)
    for n in (2, 3, 5, 8):
        np.testing.assert_allclose(grad_u(equally_spaced(n)), 0.0, atol=1e-12)
    with pytest.raises(CollisionError):
        grad_u([0.2, 0.2])


def test_u_min_values():
    assert u_min(1) == 0.0
    assert u_min(2) == pytest.approx(0.0, abs=1e-15)
    assert u_min(3) == pytest.approx(0.863046, abs=1e-6)
    assert u_min(4) == pytest.approx(4 * math.log(2), abs=1e-12)
    for n in range(2, 7):
        assert u_min(n) == pytest.approx(u_oracle(2 * math.pi * np.arange(n) / n), abs=1e-10)


def test_equally_spaced():
    np.testing.assert_allclose(equally_spaced(2).angles, [0, math.pi])
    c = equally_spaced(4, 0.1)
    np.testing.assert_allclose(c.gaps(), math.pi / 2, atol=1e-14)
    assert c.min_gap() == pytest.approx(math.pi / 2)


def test_config_ordering():
    assert TorusConfig([0.0, 1.0, 2.0]).is_valid()
    assert not TorusConfig([0.0, 2.0, 1.0]).is_valid()
    np.testing.assert_allclose(TorusConfig([-1.0, 1.0]).canonical(), [2 * math.pi - 1, 2 * math.pi + 1])


def test_grad_matches_finite_differences(np_rng):
    for _ in range(100):
        n = int(np_rng.integers(2, 7))
        a = random_config(np_rng, n, 0.1)
        g = grad_u(a)
        fd = np.empty(n)
        h = 1e-6
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            fd[j] = (log_partition_u(a + e) - log_partition_u(a - e)) / (2 * h)
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


def test_u_above_minimum(np_rng):
    for _ in range(1000):
        n = int(np_rng.integers(2, 6))
        a = 2 * math.pi * np.arange(n) / n + np_rng.normal(0, 0.05, n)
        if not TorusConfig(a).is_valid():
            continue
        assert log_partition_u(a) > u_min(n)
    for n in range(2, 6):
        assert abs(log_partition_u(equally_spaced(n, 0.7)) - u_min(n)) < 1e-10


angles = st.lists(st.floats(0.0, 2 * math.pi, allow_nan=False), min_size=2, max_size=6)


@given(angles, st.floats(-10, 10), st.integers(0, 5))
def test_invariances(raw, c, shift):
    a = np.sort(np.array(raw))
    cfg = TorusConfig(a)
    if cfg.min_gap() < 1e-3:
        return
    u = log_partition_u(cfg)
    assert abs(log_partition_u(cfg.rotated(c)) - u) < 1e-12 * max(1, abs(u)) + 1e-12
    rel = cfg.relabeled(shift)
    assert abs(log_partition_u(rel) - u) < 1e-12 * max(1, abs(u)) + 1e-12
    assert abs(partition_z(rel, 2.0) - partition_z(cfg, 2.0)) < 1e-12
    g = grad_u(cfg)
    np.testing.assert_allclose(grad_u(cfg.rotated(c)), g, atol=1e-12 * max(1, np.abs(g).max()))
    s = shift % a.size
    np.testing.assert_allclose(grad_u(rel), np.roll(g, -s), atol=1e-12 * max(1, np.abs(g).max()))
    assert abs(g.sum()) < 1e-10 * max(1, np.abs(g).max())


@given(angles, st.floats(0.05, 20))
def test_z_is_exp_of_u(raw, kappa):
    a = np.sort(np.array(raw))
    if TorusConfig(a).min_gap() < 1e-3:
        return
    z = partition_z(a, kappa)
    assert 0 < z <= 1
    assert abs(z - math.exp(-log_partition_u(a) / kappa)) < 1e-12
