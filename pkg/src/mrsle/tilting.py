"""Reweighting independent radial curves into the interacting ensemble."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .config import equally_spaced, is_collision, log_partition_u
from .drivers import simulate_dyson, single_radial_driver, zero_energy_driver
from .energy import sle_constants
from .loewner import DriverPath, project_to_common_time, projected_driver, trace_single
from .loopmeasure import LoopParams, curve_distance, estimate_loop_term
from .parallel import pmap
from .rng import SeededRng, as_rng

__all__ = [
    "rn_weight",
    "WeightedEnsemble",
    "importance_sample_nradial",
    "weighted_ks",
    "concentration_experiment",
]

KAPPA_ZERO_C = 8.0 / 3.0


def rn_weight(driver: DriverPath, loop_mass: float, kappa: float, T: float | None = None) -> float:
    """``Z(theta_T)/Z(theta_0) exp(beta_hat n T + c L / 2)``; zero on collision."""
    T = driver.T if T is None else T
    u0 = log_partition_u(driver.states[0])
    uT = log_partition_u(driver.states[-1])
    if is_collision(u0) or is_collision(uT):
        return 0.0
    sc = sle_constants(kappa, driver.n)
    return math.exp((u0 - uT) / kappa + sc.beta_hat * driver.n * T
                    + 0.5 * sc.central_charge * loop_mass)


@dataclass
class WeightedEnsemble:
    """Self-normalized importance sample.

    ``final_states`` and ``weights`` cover the accepted samples only;
    ``collided`` flags every proposal.
    """

    kappa: float
    n: int
    T: float
    dt: float
    final_states: np.ndarray
    weights: np.ndarray
    loop_mass: np.ndarray
    collided: np.ndarray
    curves: list = field(default_factory=list, repr=False)

    @property
    def normalized(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    @property
    def ess(self) -> float:
        w = self.weights
        return float(w.sum() ** 2 / np.sum(w * w)) if w.size else 0.0

    @property
    def inconclusive(self) -> bool:
        return self.ess < 10

    @property
    def discard_fraction(self) -> float:
        return float(self.collided.mean()) if self.collided.size else 0.0

    def mean(self, f) -> tuple[float, float]:
        """Self-normalized mean of ``f(final_states)`` with its delta-method error."""
        x = np.asarray(f(self.final_states), dtype=float)
        p = self.normalized
        m = float(np.sum(p * x))
        se = float(math.sqrt(np.sum(p * p * (x - m) ** 2)))
        return m, se

    def gaps(self) -> np.ndarray:
        return np.mod(self.final_states[:, 1] - self.final_states[:, 0], 2 * math.pi)


def _tilt_one(i, kappa, n, theta0, T, dt, seed, stream, lp, keep):
    single = [trace_single(single_radial_driver(theta0[j], kappa, n * T, dt,
                                                SeededRng(seed, stream + i * n + j)), dt)
              for j in range(n)]
    c = project_to_common_time(single, T, dt)
    if (c.collided_step is not None or c.meta.get("exhausted")
            or curve_distance(list(c.points.T)) < c.meta["delta_min"]):
        return None
    drv = projected_driver(c)
    L = 0.0
    if lp is not None:
        p = replace(lp, seed=seed, stream=lp.stream + stream + i)
        L = estimate_loop_term(list(c.points.T), p, discretization_scale=0.25 * c.meta["delta_min"]).mass
    return drv.states[-1], rn_weight(drv, L, kappa, T), L, (c if keep else None)


def importance_sample_nradial(kappa: float, n: int, theta0=None, T: float = 0.25, dt: float = 2e-3,
                              n_samples: int = 1000, rng=0, loop_params: LoopParams | None = None,
                              keep_curves: bool = False) -> WeightedEnsemble:
    """Sample ``n`` independent radial curves, restrict, project and reweight.

    Each curve is traced from its own Brownian driver up to capacity
    ``n T``. Proposals whose curves meet (closer than four trace segments)
    before common time ``T`` are discarded; survivors are projected to
    common time and weighted by :func:`rn_weight`. The loop term uses a
    fresh loop battery per sample with roots anchored on the curves; at
    ``kappa = 8/3`` it is skipped.
    """
    if not 0 < kappa <= 4:
        raise ValueError("kappa must lie in (0, 4]")
    rng = as_rng(rng)
    theta0 = equally_spaced(n).angles if theta0 is None else np.asarray(theta0, dtype=float)
    need_loops = sle_constants(kappa, n).central_charge != 0.0 and kappa != KAPPA_ZERO_C
    lp = loop_params or LoopParams(n_samples=256, n_max=1024, proposal="curves")
    job = partial(_tilt_one, kappa=kappa, n=n, theta0=theta0, T=T, dt=dt, seed=rng.seed,
                  stream=rng.stream_id, lp=lp if need_loops else None, keep=keep_curves)
    res = pmap(job, range(n_samples))
    collided = np.array([r is None for r in res], dtype=bool)
    ok = [r for r in res if r is not None]
    states = [r[0] for r in ok]
    weights = [r[1] for r in ok]
    masses = [r[2] for r in ok]
    kept = [r[3] for r in ok] if keep_curves else []
    return WeightedEnsemble(kappa, n, T, dt, np.array(states).reshape(-1, n), np.array(weights),
                            np.array(masses), collided, kept)


def weighted_ks(x, w, y) -> float:
    """Kolmogorov-Smirnov distance between a weighted sample and a plain one."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float) / np.sum(w)
    y = np.sort(np.asarray(y, dtype=float))
    order = np.argsort(x)
    xs = x[order]
    cw = np.cumsum(w[order])
    grid = np.concatenate((xs, y))
    fx = np.concatenate(([0.0], cw))[np.searchsorted(xs, grid, side="right")]
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def _deviation_one(stream, theta0, kappa, T, dt, seed, integrator, ref):
    d = simulate_dyson(theta0, kappa, T, dt, SeededRng(seed, stream), integrator)
    return float(np.max(np.sum(np.abs(d.states - ref), axis=1)))


def concentration_experiment(n: int, theta0=None, kappa_grid=(1.0, 0.5, 0.25, 0.1), T: float = 0.5,
                             dt: float = 1e-3, n_samples: int = 200, seed: int = 0,
                             integrator: str = "euler") -> dict:
    """Median of ``sup_t sum_j |theta^j_t - theta^{0,j}_t|`` per ``kappa``.

    The reference is the zero-energy path from the same start with the same
    integrator, so a zero entry in ``kappa_grid`` gives exactly zero. The
    power fitted to the medians over positive ``kappa`` is reported only.
    """
    theta0 = equally_spaced(n).angles if theta0 is None else np.asarray(theta0, dtype=float)
    ref = zero_energy_driver(theta0, T, dt, integrator=integrator).states
    med = []
    for a, kappa in enumerate(kappa_grid):
        job = partial(_deviation_one, theta0=theta0, kappa=kappa, T=T, dt=dt, seed=seed,
                      integrator=integrator, ref=ref)
        devs = np.array(pmap(job, range(a * n_samples, (a + 1) * n_samples)))
        med.append(float(np.median(devs)))
    med = np.array(med)
    k = np.asarray(kappa_grid, dtype=float)
    pos = (k > 0) & (med > 0)
    power = float(np.polyfit(np.log(k[pos]), np.log(med[pos]), 1)[0]) if pos.sum() >= 2 else math.nan
    order = np.argsort(-k)
    dec = bool(np.all(np.diff(med[order]) < 0))
    return {"n": n, "T": T, "dt": dt, "kappa": list(map(float, kappa_grid)), "median": med.tolist(),
            "strictly_decreasing": dec, "fitted_power": power}
