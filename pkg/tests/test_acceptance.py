"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected and repeated in the pytest terminal summary. A
criterion passes only if its quantitative check holds and it finishes
inside its runtime budget.
"""

import math
import time

import numpy as np
import pytest

from mrsle.config import TorusConfig, equally_spaced, grad_u, log_partition_u, u_min
from mrsle.drivers import dyson_final_states, gradient_flow_u, simulate_dyson, zero_energy_driver
from mrsle.energy import blm_rate_finite_T, sle_constants
from mrsle.escape import (check_hitting_bounds, escape_probability_mc, fit_escape_exponent,
                          partition_expectation_check, transience_experiment)
from mrsle.loewner import DriverPath, sandwich_margins, time_change, trace
from mrsle.loopmeasure import LoopParams, estimate_loop_term, lattice_loop_oracle, slope_experiment
from mrsle.rng import SeededRng
from mrsle.tilting import concentration_experiment, importance_sample_nradial, weighted_ks

pytestmark = pytest.mark.acceptance

LINES = []


class Criterion:
    def __init__(self, number, name, budget):
        self.number, self.name, self.budget = number, name, budget

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        return False

    def report(self, ok, detail):
        elapsed = time.perf_counter() - self.t0
        in_time = elapsed <= self.budget
        passed = bool(ok) and in_time
        line = (f"criterion {self.number:>2} {'PASS' if passed else 'FAIL'}  {self.name}: {detail}; "
                f"runtime {elapsed:.1f}s (budget {self.budget:.0f}s)")
        LINES.append(line)
        print(line)
        assert ok, line
        assert in_time, line


def _battery(n, T, dt):
    """Two hundred paths per ``n``: Dyson at kappa 4 plus zero-energy paths."""
    rng = np.random.default_rng(100 + n)
    th = equally_spaced(n).angles
    out = [simulate_dyson(th, 4.0, T, dt, SeededRng(31, 1000 * n + i)) for i in range(150)]
    for _ in range(50):
        g = rng.dirichlet(np.ones(n)) * (2 * math.pi - 0.3 * n) + 0.3
        start = rng.uniform(0, 2 * math.pi) + np.concatenate(([0.0], np.cumsum(g[:-1])))
        out.append(zero_energy_driver(start, T, dt))
    return out


DT = 1e-3
TOL = 5 * DT


def test_time_change_sandwich():
    with Criterion(1, "time-change sandwich nt - log(n)/2 <= sigma^j(t) < nt", 300) as c:
        lo_m, hi_m = math.inf, math.inf
        for n in (2, 3):
            for d in _battery(n, 1.0, DT):
                cs = trace(d)
                sig = time_change(d, curve=cs, cross_check=False).sigma
                lo, hi = sandwich_margins(sig, cs.times, n)
                lo_m, hi_m = min(lo_m, float(lo.min())), min(hi_m, float(hi[1:].min()))
        c.report(lo_m >= -TOL and hi_m > -TOL,
                 f"min lower margin {lo_m:.4f}, min upper margin {hi_m:.4g}, tol {TOL:g}")


def test_hitting_time_sandwich():
    with Criterion(2, "hitting-time sandwich v - log 4 <= n rho <= v + log(n)/2", 300) as c:
        worst, fails = math.inf, 0
        for n, T in ((2, 3.5), (3, 2.4)):
            for d in _battery(n, T, DT):
                # nothing past the deepest level matters
                rep = check_hitting_bounds(trace(d, stop_radius=math.exp(-6.0)), (2.0, 4.0, 6.0), TOL)
                worst = min(worst, rep.worst_margin)
                fails += not rep.ok
        c.report(fails == 0, f"worst margin {worst:.4f}, failing paths {fails}/400, tol {TOL:g}")


def test_u_minimization():
    with Criterion(3, "gradient flow reaches u_min and equal spacing", 60) as c:
        rng = np.random.default_rng(3)
        du, dev = 0.0, 0.0
        for n in (2, 3, 4):
            for _ in range(100):
                a = np.sort(rng.uniform(0, 2 * math.pi, n))
                end = gradient_flow_u(a, 100.0, 0.05).states[-1]
                du = max(du, abs(log_partition_u(end) - u_min(n)))
                target = end[0] + 2 * math.pi * np.arange(n) / n
                dev = max(dev, float(np.max(np.abs(end - target))))
        c.report(du < 1e-8 and dev < 1e-6, f"max |U - u_min| {du:.2e}, max spacing deviation {dev:.2e}")


@pytest.mark.parametrize("n, target", [(2, 0.5), (3, 1.75)])
def test_loop_growth_constant(n, target):
    with Criterion(4, f"loop growth slope n={n} near {target}", 1800) as c:
        r = slope_experiment(n, np.linspace(0.5, 2.5, 9), params=LoopParams(n_samples=20000, seed=4))
        rel = abs(r["slope"] - target) / target
        c.report(rel <= 0.15, f"slope {r['slope']:.4f} +- {r['stderr']:.4f}, relative error {rel:.3f} (limit 0.15)")


def _canned():
    s = np.linspace(0, 1, 200)
    ray = np.linspace(1, 0.15, 100)
    return {
        "antipodal": [ray, -ray],
        "three rays": [np.linspace(1, 0.25, 100) * np.exp(2j * math.pi * k / 3) for k in range(3)],
        "curved": [(1 - 0.8 * s) * np.exp(0.6j * s), (1 - 0.7 * s) * np.exp(1j * (2.2 + 0.4 * np.sin(3 * s)))],
    }


def test_loop_estimator_cross_validation():
    with Criterion(5, "bridge_mc against lattice_det on canned configurations", 1200) as c:
        parts, ok = [], True
        for name, curves in _canned().items():
            lat = lattice_loop_oracle(curves, 1 / 40)
            mc = estimate_loop_term(curves, LoopParams(n_samples=40000, seed=5))
            z = abs(lat.mass - mc.mass) / math.hypot(lat.stderr, mc.stderr)
            ok &= z <= 3
            parts.append(f"{name} {mc.mass:.4f}/{lat.mass:.4f} ({z:.2f} sd)")
        c.report(ok, ", ".join(parts))


def test_escape_exponent():
    with Criterion(6, "escape exponent slope near -0.5 at kappa 4", 3600) as c:
        ests = escape_probability_mc(4.0, 2, u=1.0, v=[1.5, 2.0, 2.5, 3.0], horizon=3.0,
                                     n_samples=100_000, rng=SeededRng(6, 0), dt=5e-3)
        fit = fit_escape_exponent(ests)
        s = fit["slope"]
        ok = math.isfinite(s) and s < 0 and abs(s + 0.5) <= 0.1
        probs = ", ".join(f"{e.p_hat:.2e}" for e in ests)
        c.report(ok, f"slope {s:.3f} +- {fit['stderr']:.3f} (target -0.5 +- 0.1), p_hat {probs}")


def test_transience_envelope():
    with Criterion(7, "transience envelope at kappa 2", 600) as c:
        r = transience_experiment(2.0, 2, 4.0, DT, 100, seed=7)
        lim = 4 * math.exp(-7)
        c.report(r["envelope_ok"] and r["median_final"] < lim,
                 f"worst envelope ratio {r['worst_envelope_ratio']:.3f}, median radius at t=4 "
                 f"{r['median_final']:.3e} (limit {lim:.3e})")


def _rate(d):
    cv = trace(d)
    est = estimate_loop_term(list(cv.points.T), LoopParams(n_samples=20000, seed=8))
    return blm_rate_finite_T(d, cv, est.mass, loop_stderr=est.stderr)


def test_rate_function_identity():
    with Criterion(8, "finite-T rate identity", 1800) as c:
        ok, parts = True, []
        for th in (equally_spaced(2).angles, np.array([0.0, 2.0])):
            r = _rate(zero_energy_driver(th, 1.0, DT))
            good = abs(r.rate_bm_form) <= 1e-3 + 3 * r.stderr and r.rate_dyson <= 1e-6
            ok &= good
            parts.append(f"zero-energy from {np.round(th, 3).tolist()}: bm {r.rate_bm_form:.4f} "
                         f"+- {r.stderr:.4f}, dyson {r.rate_dyson:.1e}")
        base = zero_energy_driver(equally_spaced(2).angles, 1.0, DT)
        rot = DriverPath(DT, base.states + 0.3 * base.times[:, None])
        r = _rate(rot)
        good = abs(r.rate_bm_form - r.rate_dyson) <= 1e-2 + 3 * r.stderr
        ok &= good
        parts.append(f"rotating: bm {r.rate_bm_form:.4f} +- {r.stderr:.4f}, dyson {r.rate_dyson:.4f}")
        c.report(ok, "; ".join(parts))


def test_sampler_equivalence():
    with Criterion(9, "tilted independent curves against direct Dyson at kappa 4", 1800) as c:
        ens = importance_sample_nradial(4.0, 2, T=0.25, dt=2e-3, n_samples=11_500, rng=SeededRng(9, 0))
        direct = dyson_final_states(equally_spaced(2).angles, 4.0, 0.25, 2e-3, 10, range(20_000))
        ks = weighted_ks(ens.gaps(), ens.weights, np.mod(direct[:, 1] - direct[:, 0], 2 * math.pi))
        c.report(ks < 0.05 and ens.ess >= 1e4,
                 f"KS {ks:.4f} (limit 0.05), ESS {ens.ess:.0f} (need 1e4), discarded {ens.discard_fraction:.3f}")


def test_partition_expectation():
    with Criterion(10, "partition expectation bound", 300) as c:
        r = partition_expectation_check(4.0, 2, t=0.5, n_samples=100_000, seed=10)
        c.report(r["ok"], f"mean {r['mean']:.5f} +- {r['stderr']:.5f}, bound {r['bound']:.5f}")


def test_concentration():
    with Criterion(11, "median sup-deviation decreasing in kappa", 900) as c:
        r = concentration_experiment(2, kappa_grid=(1.0, 0.5, 0.25, 0.1), T=0.5, dt=DT, n_samples=200, seed=11)
        meds = ", ".join(f"{m:.4f}" for m in r["median"])
        c.report(r["strictly_decreasing"], f"medians {meds}, fitted power {r['fitted_power']:.3f}")


def test_analytic_battery():
    with Criterion(12, "analytic unit battery", 10) as c:
        checks = {}
        checks["c(8/3)=c(6)=0"] = max(abs(sle_constants(8 / 3, 2).central_charge),
                                      abs(sle_constants(6.0, 2).central_charge)) < 1e-12
        checks["beta_hat(n=1)=0"] = all(sle_constants(k, 1).beta_hat == 0 for k in (0.5, 2.0, 4.0, 6.0))
        # U at equal spacing in closed form: -2 sum over pairs of log sin(pi k/n)
        closed = {n: -2 * sum(math.log(math.sin(math.pi * (j - i) / n)) for i in range(n) for j in range(i + 1, n))
                  for n in (2, 3, 4)}
        quoted = {2: 0.0, 3: 0.863046, 4: 2.772589}
        checks["u_min"] = all(abs(u_min(n) - closed[n]) < 1e-9 and round(closed[n], 6) == quoted[n]
                              for n in quoted)
        rng = np.random.default_rng(12)
        fd, inv = 0.0, 0.0
        for _ in range(50):
            n = int(rng.integers(2, 6))
            g = rng.dirichlet(np.ones(n)) * (2 * math.pi - 0.1 * n) + 0.1
            a = rng.uniform(0, 2 * math.pi) + np.concatenate(([0.0], np.cumsum(g[:-1])))
            h = 1e-6
            num = np.array([(log_partition_u(a + h * e) - log_partition_u(a - h * e)) / (2 * h)
                            for e in np.eye(n)])
            fd = max(fd, float(np.max(np.abs(num - grad_u(a)))))
            u = log_partition_u(a)
            cfg = TorusConfig(a)
            inv = max(inv, abs(log_partition_u(cfg.rotated(1.234)) - u),
                      max(abs(log_partition_u(cfg.relabeled(k)) - u) for k in range(n)))
        checks["grad_u"] = fd < 1e-6
        checks["invariance"] = inv < 1e-12
        bad = [k for k, v in checks.items() if not v]
        c.report(not bad, f"finite-difference gap {fd:.1e}, invariance gap {inv:.1e}"
                 + (f", failing {bad}" if bad else ""))
