"""Hitting times of small disks, escape events and transience checks."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import _kernels as K
from .config import equally_spaced, log_partition_u
from .drivers import simulate_dyson
from .loewner import MultiradialCurve, SlitChain, trace
from .parallel import pmap
from .rng import SeededRng, as_rng

__all__ = [
    "hitting_time",
    "HittingReport",
    "check_hitting_bounds",
    "escape_probability_mc",
    "EscapeEstimate",
    "fit_escape_exponent",
    "transience_experiment",
    "partition_expectation_check",
    "b_exponent",
    "escape_exponent",
    "wilson_interval",
]

LOG4 = math.log(4.0)


def hitting_time(curve: MultiradialCurve, j: int, v: float) -> float | None:
    """First time ``|gamma^j| < e^{-v}``, linear in radius between samples."""
    if v <= 0:
        return 0.0
    r = np.abs(curve.points[:, j])
    level = math.exp(-v)
    below = np.nonzero(r < level)[0]
    if below.size == 0:
        return None
    k = int(below[0])
    if k == 0:
        return 0.0
    frac = (r[k - 1] - level) / (r[k - 1] - r[k])
    return float((k - 1 + frac) * curve.dt)


@dataclass
class HittingReport:
    ok: bool
    rows: list = field(default_factory=list)
    dump: str | None = None

    @property
    def worst_margin(self) -> float:
        return min((min(r["margin_lo"], r["margin_hi"]) for r in self.rows), default=math.inf)


def check_hitting_bounds(curve: MultiradialCurve, v_grid, tol: float | None = None,
                         dump_dir=None) -> HittingReport:
    """Check ``v - log 4 <= n rho^j(v) <= v + log(n)/2`` for each curve.

    ``tol`` defaults to ``5 dt``. Levels not reached within the horizon are
    reported with ``rho = None`` and count as failures, since the check
    presumes hitting. On failure the curve is written to ``dump_dir``.
    """
    n = curve.n
    tol = 5.0 * curve.dt if tol is None else tol
    rows = []
    ok = True
    for j in range(n):
        for v in v_grid:
            rho = hitting_time(curve, j, v)
            lo, hi = v - LOG4, v + 0.5 * math.log(n)
            if rho is None:
                rows.append({"j": j, "v": v, "rho": None, "margin_lo": -math.inf,
                             "margin_hi": -math.inf, "ok": False})
                ok = False
                continue
            nr = n * rho
            row = {"j": j, "v": float(v), "rho": rho, "margin_lo": nr - lo, "margin_hi": hi - nr}
            row["ok"] = row["margin_lo"] >= -tol and row["margin_hi"] >= -tol
            ok &= row["ok"]
            rows.append(row)
    dump = None
    if not ok and dump_dir is not None:
        d = Path(dump_dir)
        d.mkdir(parents=True, exist_ok=True)
        p = d / f"hitting_failure_{hashlib.sha256(curve.points.tobytes()).hexdigest()[:12]}.csv"
        curve.to_csv(p)
        dump = str(p)
    return HittingReport(ok, rows, dump)


def b_exponent(n: int, kappa: float) -> float:
    """``b(n, kappa) = n((8 - kappa)/2 - kappa (n^2 - 1)/12)``."""
    return n * ((8.0 - kappa) / 2.0 - kappa * (n * n - 1) / 12.0)


def escape_exponent(kappa: float) -> float:
    """Decay rate ``(8 - kappa)/(2 kappa)`` of the escape probability in ``v - u``."""
    return (8.0 - kappa) / (2.0 * kappa)


def wilson_interval(k: int, m: int, level: float = 0.95):
    from scipy.stats import binomtest

    if m == 0:
        return 0.0, 1.0
    ci = binomtest(int(k), int(m)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class EscapeEstimate:
    kappa: float
    n: int
    u: float
    v: float
    horizon: float
    n_samples: int
    hits: int
    escapes: int
    p_hat: float
    ci: tuple
    inconclusive: bool

    def row(self) -> dict:
        return {"kappa": self.kappa, "n": self.n, "u": self.u, "v": self.v, "horizon": self.horizon,
                "n_samples": self.n_samples, "hits": self.hits, "escapes": self.escapes,
                "p_hat": self.p_hat, "ci_lo": self.ci[0], "ci_hi": self.ci[1]}


def _curve_tips(driver, j: int) -> np.ndarray:
    """Radii of curve ``j`` only; the other curves' tips are not traced."""
    chain = SlitChain.from_driver(driver)
    steps = driver.steps
    idx = np.array([[chain.slit_index(k, j)] for k in range(steps)], dtype=np.int64)
    tip_r = np.array([K.tip_radius(t) for t in chain.tau])
    tips, _ = K.trace_tips(chain.eia, chain.emt, tip_r, idx, 0.0)
    return np.concatenate(([1.0], np.abs(tips[:, 0])))


def _escape_flags(r: np.ndarray, dt: float, u: float, vs) -> tuple:
    hits, esc = [], []
    for v in vs:
        level = math.exp(-v)
        below = np.nonzero(r < level)[0]
        if below.size == 0:
            hits.append(False)
            esc.append(False)
            continue
        k = int(below[0])
        hits.append(True)
        esc.append(bool(np.any(r[k:] > math.exp(-u))))
    return hits, esc


def _escape_one(stream, theta0, kappa, horizon, dt, j, u, vs, seed):
    d = simulate_dyson(theta0, kappa, horizon, dt, SeededRng(seed, stream))
    return _escape_flags(_curve_tips(d, j), dt, u, vs)


def escape_probability_mc(kappa: float, n: int, theta0=None, u: float = 1.0, v=2.0,
                          horizon: float = 3.0, n_samples: int = 1000, rng=0, dt: float = 1e-2,
                          j: int = 0) -> list[EscapeEstimate]:
    """Frequency of ``gamma^j`` leaving the closed disk of radius ``e^{-u}``
    after first entering the open disk of radius ``e^{-v}``, before ``horizon``.

    ``v`` may be a sequence; all levels are read off the same trajectories.
    Trajectory ``i`` uses stream ``stream_id + i`` of ``rng``.
    """
    rng = as_rng(rng)
    vs = np.atleast_1d(np.asarray(v, dtype=float))
    if np.any(vs <= u) or u <= 0:
        raise ValueError("need 0 < u < v")
    theta0 = equally_spaced(n).angles if theta0 is None else np.asarray(theta0, dtype=float)
    job = partial(_escape_one, theta0=theta0, kappa=kappa, horizon=horizon, dt=dt, j=j, u=u, vs=vs,
                  seed=rng.seed)
    flags = np.array(pmap(job, range(rng.stream_id, rng.stream_id + n_samples)), dtype=np.int64)
    flags = flags.reshape(n_samples, 2, vs.size)
    hits = flags[:, 0].sum(axis=0)
    esc = flags[:, 1].sum(axis=0)
    out = []
    for a, vv in enumerate(vs):
        out.append(EscapeEstimate(kappa, n, u, float(vv), horizon, n_samples, int(hits[a]),
                                  int(esc[a]), esc[a] / n_samples,
                                  wilson_interval(int(esc[a]), n_samples), bool(hits[a] < 10)))
    return out


def fit_escape_exponent(estimates) -> dict:
    """Weighted least squares of ``log p_hat`` against ``v - u``.

    Weights are inverse squares of the log-scale half-width of each Wilson
    interval.
    """
    ests = [e for e in estimates if e.escapes > 0]
    if len(ests) < 2:
        return {"slope": math.nan, "stderr": math.nan, "r2": math.nan, "points": len(ests)}
    x = np.array([e.v - e.u for e in ests])
    y = np.log([e.p_hat for e in ests])
    s = np.array([(math.log(e.ci[1]) - math.log(e.ci[0])) / (2 * 1.959964) for e in ests])
    w = 1.0 / s**2
    A = np.vstack([np.ones_like(x), x]).T
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    beta = cov @ (A.T @ (w * y))
    resid = y - A @ beta
    ybar = np.sum(w * y) / np.sum(w)
    r2 = 1.0 - np.sum(w * resid**2) / np.sum(w * (y - ybar) ** 2)
    return {"slope": float(beta[1]), "intercept": float(beta[0]), "stderr": float(math.sqrt(cov[1, 1])),
            "r2": float(r2), "points": len(ests)}


def _transience_one(stream, theta0, kappa, T, dt, seed):
    d = simulate_dyson(theta0, kappa, T, dt, SeededRng(seed, stream))
    return np.abs(trace(d).points).max(axis=1)


def transience_experiment(kappa: float, n: int, T: float, dt: float, n_samples: int, seed: int = 0,
                          theta0=None, stream: int = 0) -> dict:
    """Tip-radius envelopes of an ensemble of ``n``-radial traces.

    Asserts ``max_j |tip(t)| <= 4 exp(-(n t - log(n)/2))`` along every
    trajectory (reported as ``envelope_ok``) and reports the ensemble median
    radius over time, which should decay.
    """
    if not 0 < kappa <= 8.0 / 3.0:
        raise ValueError("transience is only claimed for 0 < kappa <= 8/3")
    theta0 = equally_spaced(n).angles if theta0 is None else np.asarray(theta0, dtype=float)
    job = partial(_transience_one, theta0=theta0, kappa=kappa, T=T, dt=dt, seed=seed)
    radii = pmap(job, range(stream, stream + n_samples))
    env_ok = []
    worst = -math.inf
    eventually = []
    for r in radii:
        times = np.arange(r.size) * dt
        env = 4.0 * np.exp(-(n * times - 0.5 * math.log(n)))
        worst = max(worst, float(np.max(r / env)))
        env_ok.append(bool(np.all(r <= env)))
        after = r[times >= min(1.0, T)]
        eventually.append(bool(np.all(np.diff(after) <= 0)))
    L = min(x.size for x in radii)
    R = np.array([x[:L] for x in radii])
    med = np.median(R, axis=0)
    return {"kappa": kappa, "n": n, "T": T, "dt": dt, "n_samples": n_samples,
            "envelope_ok": all(env_ok), "worst_envelope_ratio": worst,
            "median_radius": med, "times": np.arange(L) * dt, "median_final": float(med[-1]),
            "eventually_decreasing_fraction": float(np.mean(eventually))}


def _inverse_z_one(stream, theta0, kappa, t, dt, seed):
    d = simulate_dyson(theta0, kappa, t, dt, SeededRng(seed, stream))
    return math.exp(log_partition_u(d.states[-1]) / kappa)


def partition_expectation_check(kappa: float, n: int, theta0=None, t: float = 0.5,
                                n_samples: int = 10000, seed: int = 0, dt: float = 1e-3,
                                kurtosis_limit: float = 50.0) -> dict:
    """Monte Carlo of ``E[1/Z(theta_t)]`` against ``exp(n(n^2-1)t/12)/Z(theta_0)``."""
    if kappa > 4:
        raise ValueError("the bound is stated for kappa <= 4")
    theta0 = equally_spaced(n).angles if theta0 is None else np.asarray(theta0, dtype=float)
    inv_z0 = math.exp(log_partition_u(theta0) / kappa)
    bound = math.exp(n * (n * n - 1) * t / 12.0) * inv_z0
    if t == 0:
        vals = np.full(n_samples, inv_z0)
    else:
        job = partial(_inverse_z_one, theta0=theta0, kappa=kappa, t=t, dt=dt, seed=seed)
        vals = np.array(pmap(job, range(n_samples), chunksize=256))
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    c = vals - mean
    kurt = float(np.mean(c**4) / np.mean(c**2) ** 2) if np.any(c) else 0.0
    return {"kappa": kappa, "n": n, "t": t, "n_samples": n_samples, "mean": mean, "stderr": se,
            "bound": bound, "margin": bound - (mean - 2 * se), "ok": mean - 2 * se <= bound,
            "kurtosis": kurt, "heavy_tail_warning": kurt > kurtosis_limit}

