"""Energy functionals and the interaction term of the tilting density."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .config import NEG_COLLISION, POS_COLLISION, is_collision, log_partition_u
from .drivers import _drift
from .loewner import DriverPath, MultiradialCurve, NumericalAbort, TimeChange, unzip

__all__ = [
    "SleConstants",
    "ExtractedDriver",
    "dyson_dirichlet_energy",
    "extract_single_driver",
    "single_energy",
    "independent_energy",
    "sle_constants",
    "psi",
    "blm_rate_finite_T",
    "RateRecord",
    "steady_convergence_diagnostic",
]


@dataclass(frozen=True)
class SleConstants:
    beta_hat: float
    central_charge: float
    kappa: float
    n: int


def sle_constants(kappa: float, n: int) -> SleConstants:
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    beta = (n - 1) * ((kappa - 4.0) ** 2 + 4.0 * n) / (8.0 * kappa)
    c = (6.0 - kappa) * (3.0 * kappa - 8.0) / (2.0 * kappa)
    return SleConstants(beta, c, kappa, n)


def _drift_rows(states):
    return np.array([_drift(np.ascontiguousarray(row), 2.0) for row in states])


def dyson_dirichlet_energy(driver: DriverPath) -> float:
    """``1/2 int sum_j |d theta^j/ds - 2 sum_i cot((theta^j - theta^i)/2)|^2 ds``.

    The velocity is a forward difference on each grid interval and the drift
    is the trapezoidal average of its two endpoint values, so the sum over
    intervals is exactly additive under splitting the grid.
    """
    if driver.first_collision() is not None:
        return POS_COLLISION
    if driver.steps == 0:
        return 0.0
    s = driver.states
    v = np.diff(s, axis=0) / driver.dt
    b = _drift_rows(s)
    r = v - 0.5 * (b[:-1] + b[1:])
    return float(0.5 * driver.dt * np.sum(r * r))


@dataclass
class ExtractedDriver:
    """Driver of a single curve on its own capacity grid.

    ``theta[k]`` is the angle of the slit fitted to segment ``k``, sampled
    at the segment's capacity midpoint ``s_mid[k]``; ``s`` holds the
    capacity at the vertices.
    """

    s: np.ndarray
    s_mid: np.ndarray
    theta: np.ndarray
    tau: np.ndarray
    retrace_error: float


def extract_single_driver(points, check: bool = True) -> ExtractedDriver:
    """Unzip a sampled curve that starts on the circle.

    Each segment is mapped out by the radial slit whose tip lands exactly on
    the next sample, so the fitted capacity is a closed-form function of
    the mapped point's modulus. The extracted slits are traced again and the
    largest deviation from the input is reported as ``retrace_error``.
    """
    pts = np.ascontiguousarray(points, dtype=complex)
    alpha, tau = unzip(pts)
    theta = np.unwrap(np.concatenate(([np.angle(pts[0])], alpha)))[1:]
    s = np.concatenate(([0.0], np.cumsum(tau)))
    err = 0.0
    if check and alpha.size:
        eia = np.exp(1j * alpha)
        emt = np.exp(-tau)
        tip_r = np.array([K.tip_radius(t) for t in tau])
        idx = np.arange(alpha.size, dtype=np.int64)[:, None]
        tips, _ = K.trace_tips(eia, emt, tip_r, idx, 0.0)
        err = float(np.max(np.abs(tips[:, 0] - pts[1:])))
    return ExtractedDriver(s, 0.5 * (s[:-1] + s[1:]), theta, tau, err)


def single_energy(ex: ExtractedDriver, period: int = 2) -> float:
    """``1/2 int |d theta/ds|^2 ds`` on blocks of ``period`` slits.

    Traces built with the alternating slit order give each curve a driver
    that oscillates with period two and amplitude ``O(dt)``; its energy does
    not vanish as ``dt -> 0``. Capacity-weighted block means cancel it.
    """
    m = ex.theta.size // period
    if m < 2:
        return 0.0
    th = ex.theta[: m * period].reshape(m, period)
    w = ex.tau[: m * period].reshape(m, period)
    mean = np.sum(th * w, axis=1) / np.sum(w, axis=1)
    s = ex.s[: m * period + 1 : period]
    mid = 0.5 * (s[:-1] + s[1:])
    dth = np.diff(mean)
    return float(0.5 * np.sum(dth * dth / np.diff(mid)))


def independent_energy(curves: MultiradialCurve, time_change: TimeChange | None = None) -> float:
    """Sum of the single-curve energies, each in the curve's own capacity.

    The whole sampled curve is unzipped, so its own horizon is
    ``sigma^j(T)``; ``time_change`` is only used to check that horizon.
    """
    total = 0.0
    for j in range(curves.n):
        ex = extract_single_driver(curves.points[:, j], check=False)
        if time_change is not None:
            sig = time_change.sigma[-1, j]
            if abs(ex.s[-1] - sig) > 1e-6 * max(1.0, sig):
                raise NumericalAbort("curve horizon differs from its time change")
        total += single_energy(ex)
    return total


def psi(driver: DriverPath, loop_mass: float, kappa: float, T: float | None = None) -> float:
    """Interaction exponent ``Psi^kappa_T``; ``kappa = 0`` gives its limit.

    For ``kappa > 0`` the value is ``kappa log(Z(theta_T)/Z(theta_0)) +
    kappa beta_hat n T + kappa c / 2 L``; since ``kappa log Z = -U`` this
    is a polynomial in ``kappa`` at fixed inputs and reduces to
    ``U(theta_0) - U(theta_T) + (n+4)(n-1)nT/2 - 12 L`` at ``kappa = 0``.
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    n = driver.n
    T = driver.T if T is None else T
    u0 = log_partition_u(driver.states[0])
    uT = log_partition_u(driver.states[-1])
    if is_collision(u0) or is_collision(uT):
        return NEG_COLLISION
    if kappa == 0:
        return u0 - uT + 0.5 * (n + 4) * (n - 1) * n * T - 12.0 * loop_mass
    sc = sle_constants(kappa, n)
    return u0 - uT + kappa * sc.beta_hat * n * T + 0.5 * kappa * sc.central_charge * loop_mass


@dataclass
class RateRecord:
    rate_bm_form: float
    rate_dyson: float
    l_hat: float
    energy_indep: float
    psi0: float
    stderr: float

    def as_dict(self):
        return dict(self.__dict__)


def blm_rate_finite_T(driver: DriverPath, curves: MultiradialCurve, loop_mass: float,
                      T: float | None = None, loop_stderr: float = 0.0,
                      time_change: TimeChange | None = None) -> RateRecord:
    """Both finite-horizon forms of the rate function on one trajectory.

    ``stderr`` is the Monte Carlo error of ``rate_bm_form``, which carries
    the loop mass with weight 12.
    """
    n = driver.n
    T = driver.T if T is None else T
    j = independent_energy(curves, time_change)
    p0 = psi(driver, loop_mass, 0.0, T)
    l_hat = loop_mass - (n + 4) * (n - 1) * n * T / 24.0
    return RateRecord(j - p0, dyson_dirichlet_energy(driver), l_hat, j, p0, 12.0 * loop_stderr)


def steady_convergence_diagnostic(psi_family: dict, psi0, M_grid=(1.0, 5.0, 10.0),
                                  eps_grid=(0.1, 0.5, 1.0)) -> dict:
    """Empirical check of uniform-on-sublevel convergence and tail control.

    ``psi_family`` maps ``kappa`` to sampled values on a fixed set of
    trajectories and ``psi0`` holds the limit on the same set.
    """
    f0 = np.asarray(psi0, dtype=float)
    kappas = sorted(psi_family)
    if len(kappas) < 3 or f0.size < 10:
        raise ValueError("need at least 3 kappa values and 10 trajectories")
    fam = {k: np.asarray(psi_family[k], dtype=float) for k in kappas}
    dev = {}
    for M in M_grid:
        sel = np.abs(f0) <= M
        dev[M] = {k: (float(np.max(np.abs(fam[k][sel] - f0[sel]))) if sel.any() else 0.0)
                  for k in kappas}
    summary = {}
    for M in M_grid:
        hi = f0 >= M
        lo = f0 <= -M
        omega_hi = min((float(fam[k][hi].min()) for k in kappas), default=math.inf) if hi.any() else math.inf
        omega_lo = min((float(-fam[k][lo].max()) for k in kappas), default=math.inf) if lo.any() else math.inf
        tail_ok = omega_hi > 0 and omega_lo > 0
        for eps in eps_grid:
            ok_k = [k for k in kappas if all(dev[M][q] < eps for q in kappas if q <= k)]
            summary[(M, eps)] = {
                "kappa_eps": max(ok_k) if ok_k else None,
                "uniform_ok": bool(ok_k),
                "tail_ok": bool(tail_ok),
                "steady": bool(ok_k) and bool(tail_ok),
            }
    mono = {M: bool(np.all(np.diff([dev[M][k] for k in kappas]) >= -1e-12)) for M in M_grid}
    return {"deviation": dev, "summary": summary, "deviation_monotone": mono}
