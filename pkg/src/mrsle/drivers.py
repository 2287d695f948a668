"""Driving functions: the Dyson-type SDE, its zero-noise ODE, the gradient
flow of ``U`` and Brownian single-curve drivers."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .config import TWO_PI, TorusConfig
from .loewner import DriverPath, NumericalAbort
from .rng import SeededRng, as_rng

__all__ = [
    "simulate_dyson",
    "dyson_final_states",
    "zero_energy_driver",
    "gradient_flow_u",
    "single_radial_driver",
    "gap_stationary_density",
]

MAX_REFINE = 8
MAX_SPLIT = 16
_INTEGRATORS = {"euler": 0, "rk4": 1}


@njit(cache=True)
def _min_gap(a):
    n = a.shape[0]
    if n == 1:
        return TWO_PI
    g = TWO_PI
    tot = 0.0
    for j in range(n):
        d = a[(j + 1) % n] - a[j]
        if j == n - 1:
            d += TWO_PI
        d = d % TWO_PI
        tot += d
        if d < g:
            g = d
    if abs(tot - TWO_PI) > 1e-9:
        return 0.0
    return g


@njit(cache=True)
def _drift(a, scale):
    """``scale * sum_{i != j} cot((a_j - a_i)/2)``."""
    n = a.shape[0]
    out = np.zeros(n)
    for j in range(n):
        s = 0.0
        for i in range(n):
            if i != j:
                s += 1.0 / math.tan(0.5 * (a[j] - a[i]))
        out[j] = scale * s
    return out


@njit(cache=True)
def _det_step(a, h, scale, integ):
    if integ == 0:
        return a + h * _drift(a, scale)
    k1 = _drift(a, scale)
    k2 = _drift(a + 0.5 * h * k1, scale)
    k3 = _drift(a + 0.5 * h * k2, scale)
    k4 = _drift(a + h * k3, scale)
    return a + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _guard_ok(a, b, h, scale, shrink):
    g0 = _min_gap(a)
    g1 = _min_gap(b)
    if g1 < 1e-9 or g1 < shrink * g0:
        return False
    # overshoot of the singular drift
    d = _drift(a, scale)
    for j in range(a.shape[0]):
        if abs(h * d[j]) > g0:
            return False
    return True


@njit(cache=True)
def _sde_run(out, start, noise, dt, scale, integ, shrink):
    """Advance ``out`` from row ``start``; returns the first rejected step
    or ``-1`` when the whole path was accepted."""
    steps = out.shape[0] - 1
    for k in range(start, steps):
        a = out[k]
        b = _det_step(a, dt, scale, integ) + noise[k]
        if not _guard_ok(a, b, dt, scale, shrink):
            return k
        out[k + 1] = b
    return -1


@njit(cache=True)
def _ode_advance(a, dt, scale, integ):
    """One grid step with power-of-two substeps chosen so that no substep
    moves an angle by more than a tenth of the smallest gap."""
    n = a.shape[0]
    nsub = 1
    g = _min_gap(a)
    d = _drift(a, scale)
    m = 0.0
    for j in range(n):
        if abs(d[j]) > m:
            m = abs(d[j])
    while dt / nsub * m > 0.1 * g and nsub < (1 << 30):
        nsub *= 2
    h = dt / nsub
    for _ in range(nsub):
        a = _det_step(a, h, scale, integ)
    return a


@njit(cache=True)
def _ode_run(a0, steps, dt, scale, integ):
    out = np.empty((steps + 1, a0.shape[0]))
    out[0] = a0
    a = a0.copy()
    for k in range(steps):
        a = _ode_advance(a, dt, scale, integ)
        out[k + 1] = a
    return out


def _angles(theta0) -> np.ndarray:
    if isinstance(theta0, TorusConfig):
        return theta0.angles.copy()
    return np.atleast_1d(np.asarray(theta0, dtype=float)).copy()


def _refine(a, dw, h, sk, integ, rng, k, node, depth, shrink):
    """Split one rejected step with a Brownian bridge and redo both halves.

    ``node`` is the heap index of this interval in the binary refinement
    tree, which fixes the counter block of the bridge midpoint draw. Past
    ``MAX_REFINE`` levels the drift is integrated with gap-adaptive substeps
    and the noise added afterwards, for at most ``MAX_SPLIT`` more levels.
    """
    split = depth > MAX_REFINE
    if split and depth > MAX_REFINE + MAX_SPLIT:
        raise NumericalAbort(f"collision guard failed at step {k} after {depth - 1} refinements")
    n = a.size
    z = rng.normals(n, block=k + 1, sub=node)
    half = 0.5 * h
    w1 = 0.5 * dw + math.sqrt(0.25 * h) * z
    w2 = dw - w1
    cur = a
    for i, w in enumerate((w1, w2)):
        if split:
            b = _ode_advance(cur, half, 2.0, integ) + sk * w
            ok = _min_gap(b) >= max(1e-9, shrink * _min_gap(cur))
        else:
            b = _det_step(cur, half, 2.0, integ) + sk * w
            ok = _guard_ok(cur, b, half, 2.0, shrink)
        if ok:
            cur = b
        else:
            cur = _refine(cur, w, half, sk, integ, rng, k, 2 * node + i, depth + 1, shrink)
    return cur


def simulate_dyson(theta0, kappa: float, T: float, dt: float, rng, integrator: str = "euler",
                   shrink: float = 0.5) -> DriverPath:
    """Euler-Maruyama for ``d theta^j = 2 sum cot((theta^j - theta^i)/2) dt +
    sqrt(kappa) dW^j``.

    A step whose smallest gap falls below ``shrink`` times the previous one,
    or whose drift alone moves an angle by more than the gap, is redone on a
    Brownian-bridge split with half the step, up to eight times; see
    :func:`_refine` for the last level.
    ``kappa = 0`` delegates to :func:`zero_energy_driver`.
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    integ = _INTEGRATORS[integrator]
    a0 = _angles(theta0)
    if a0.size > 1 and _min_gap(a0) <= 1e-12:
        raise NumericalAbort("initial configuration is collided")
    if kappa == 0:
        path = zero_energy_driver(a0, T, dt, integrator=integrator)
        path.kappa_tag = 0.0
        return path
    rng = as_rng(rng)
    steps = int(round(T / dt))
    n = a0.size
    sk = math.sqrt(kappa)
    dw = math.sqrt(dt) * rng.normals(steps * n, block=0).reshape(steps, n)
    noise = sk * dw
    out = np.empty((steps + 1, n))
    out[0] = a0
    start = 0
    refined = 0
    while True:
        k = _sde_run(out, start, noise, dt, 2.0, integ, shrink)
        if k < 0:
            break
        out[k + 1] = _refine(out[k], dw[k], dt, sk, integ, rng, k, 1, 1, shrink)
        refined += 1
        start = k + 1
    meta = {"generator": "dyson", "kappa": kappa, "seed": rng.seed, "stream": rng.stream_id,
            "integrator": integrator, "refined_steps": refined}
    return DriverPath(dt, out, kappa, meta)


def dyson_final_states(theta0, kappa, T, dt, seed, streams, integrator="euler"):
    """Final configurations of many independent Dyson paths, one per stream."""
    res = np.empty((len(streams), _angles(theta0).size))
    for i, s in enumerate(streams):
        res[i] = simulate_dyson(theta0, kappa, T, dt, SeededRng(seed, int(s)), integrator).states[-1]
    return res


def zero_energy_driver(theta0, T: float, dt: float, integrator: str = "rk4") -> DriverPath:
    """Solution of ``d theta^j / ds = 2 sum_{i != j} cot((theta^j - theta^i)/2)``."""
    a0 = _angles(theta0)
    steps = int(round(T / dt))
    out = _ode_run(a0, steps, dt, 2.0, _INTEGRATORS[integrator])
    return DriverPath(dt, out, 0.0, {"generator": "zero_energy", "integrator": integrator})


def gradient_flow_u(theta0, T: float, dt: float, integrator: str = "rk4") -> DriverPath:
    """Gradient flow ``d theta / dt = -grad U(theta)``."""
    a0 = _angles(theta0)
    steps = int(round(T / dt))
    out = _ode_run(a0, steps, dt, 1.0, _INTEGRATORS[integrator])
    return DriverPath(dt, out, None, {"generator": "gradient_flow", "integrator": integrator})


def single_radial_driver(theta0: float, kappa: float, S: float, dt: float, rng) -> np.ndarray:
    """``theta0 + sqrt(kappa) W_s`` on the grid ``s_k = k dt``."""
    rng = as_rng(rng)
    steps = int(round(S / dt))
    if kappa == 0:
        return np.full(steps + 1, float(theta0))
    inc = math.sqrt(kappa * dt) * rng.normals(steps, block=0)
    return float(theta0) + np.concatenate(([0.0], np.cumsum(inc)))


def gap_stationary_density(phi, kappa: float) -> np.ndarray:
    """Normalized density ``prop. to sin(phi/2)^(8/kappa)`` on ``(0, 2 pi)``
    for the gap of two Dyson angles."""
    from scipy.integrate import quad

    p = 8.0 / kappa
    z, _ = quad(lambda x: math.sin(0.5 * x) ** p, 0.0, TWO_PI)
    return np.sin(0.5 * np.asarray(phi)) ** p / z
