"""Command line harness: ``mrsle run``, ``mrsle audit`` and ``mrsle trace``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, svg
from .config import equally_spaced, log_partition_u, u_min
from .drivers import dyson_final_states, simulate_dyson, zero_energy_driver
from .energy import blm_rate_finite_T, sle_constants
from .escape import (check_hitting_bounds, escape_probability_mc, fit_escape_exponent,
                     partition_expectation_check, transience_experiment)
from .loewner import DriverPath, NumericalAbort, koebe_envelope_ok, sandwich_margins, time_change, trace
from .loopmeasure import LoopParams, estimate_loop_term, slope_experiment
from .rng import SeededRng
from .tilting import concentration_experiment, importance_sample_nradial, weighted_ks

log = logging.getLogger("mrsle")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
REQUIRED = object()


class ConfigError(ValueError):
    pass


SCHEMA = {
    "trace": {"n": (int, 2), "kappa": (float, 4.0), "T": (float, 1.0), "dt": (float, 1e-3),
              "sample": (str, "midpoint")},
    "energy": {"n": (int, 2), "T": (float, 1.0), "dt": (float, 1e-3), "omega": (float, 0.0),
               "loops": (int, 20000)},
    "loop-slope": {"n": (int, 2), "T_grid": (list, [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5]),
                   "loops": (int, 20000)},
    "escape": {"kappa": (float, 4.0), "n": (int, 2), "u": (float, 1.0), "v": (list, [1.5, 2.0, 2.5, 3.0]),
               "horizon": (float, 3.0), "samples": (int, 2000), "dt": (float, 5e-3)},
    "transience": {"kappa": (float, 2.0), "n": (int, 2), "T": (float, 4.0), "dt": (float, 1e-3),
                   "samples": (int, 100)},
    "tilt-crosscheck": {"kappa": (float, 4.0), "n": (int, 2), "T": (float, 0.25), "dt": (float, 2e-3),
                        "samples": (int, 2000), "direct": (int, 20000)},
    "concentration": {"n": (int, 2), "kappa_grid": (list, [1.0, 0.5, 0.25, 0.1]), "T": (float, 0.5),
                      "dt": (float, 1e-3), "samples": (int, 200)},
    "bounds-audit": {},
}


def _coerce(name, typ, raw):
    try:
        if typ is int:
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise ValueError
            return int(raw)
        if typ is float:
            if isinstance(raw, bool):
                raise ValueError
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if typ is list:
            if isinstance(raw, str):
                raw = [x for x in raw.replace(",", " ").split() if x]
            if not isinstance(raw, list) or not raw:
                raise ValueError
            return [float(x) for x in raw]
        if typ is str:
            if not isinstance(raw, str):
                raise ValueError
            return raw
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected {typ.__name__}, got {raw!r}") from None
    raise ConfigError(f"{name}: unsupported type")


def parse_config(text: str) -> dict:
    """Validate a TOML config and fill in defaults.

    Top level: ``experiment`` and ``seed`` (both required) and optional
    ``out``. Parameters live in a table named after the experiment; numbers
    may be given as decimal strings.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"syntax: {e}") from None
    exp = raw.get("experiment")
    if exp is None:
        raise ConfigError("experiment: missing")
    if exp not in SCHEMA:
        raise ConfigError(f"experiment: unknown value {exp!r} (choose from {', '.join(SCHEMA)})")
    if "seed" not in raw:
        raise ConfigError("seed: missing (seeds are required)")
    seed = _coerce("seed", int, raw["seed"])
    if seed < 0:
        raise ConfigError("seed: must be nonnegative")
    extra = set(raw) - {"experiment", "seed", "out", exp}
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown key")
    section = raw.get(exp, {})
    if not isinstance(section, dict):
        raise ConfigError(f"{exp}: expected a table")
    params = {}
    for key, (typ, default) in SCHEMA[exp].items():
        params[key] = _coerce(f"{exp}.{key}", typ, section[key]) if key in section else default
    unknown = set(section) - set(SCHEMA[exp])
    if unknown:
        raise ConfigError(f"{exp}.{sorted(unknown)[0]}: unknown key")
    for key, val in params.items():
        if key in ("n", "samples", "loops", "direct") and val < 1:
            raise ConfigError(f"{exp}.{key}: must be positive")
        if key in ("dt", "T", "horizon") and val <= 0:
            raise ConfigError(f"{exp}.{key}: must be positive")
    out = raw.get("out", f"results/{exp}")
    if not isinstance(out, str):
        raise ConfigError("out: expected a string")
    return {"experiment": exp, "seed": seed, "out": out, "params": params}


def config_hash(cfg: dict) -> str:
    body = {k: cfg[k] for k in ("experiment", "seed", "params")}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


class Writer:
    """Single writer for one results directory; stamps every file."""

    def __init__(self, out, cfg_hash: str):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = cfg_hash
        self.stamp = f"mrsle {__version__} config {cfg_hash}"
        self.files = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def csv(self, name: str, header, rows) -> None:
        with open(self.path(name), "w", newline="") as fh:
            fh.write(f"# {self.stamp}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])

    def manifest(self, cfg: dict, results: dict) -> None:
        body = {"tool": "mrsle", "version": __version__, "config_hash": self.hash, "config": cfg,
                "results": results, "files": sorted(self.files)}
        with open(self.dir / "manifest.json", "w") as fh:
            json.dump(body, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return str(o)


# -- experiments ---------------------------------------------------------------


def _exp_trace(p, seed, w: Writer):
    d = simulate_dyson(equally_spaced(p["n"]).angles, p["kappa"], p["T"], p["dt"], SeededRng(seed, 0))
    c = trace(d, p["sample"])
    tc = time_change(d, curve=c, cross_check=False)
    c.sigma = tc.sigma
    c.meta["config_hash"] = w.hash
    d.to_csv(w.path("driver.csv"), w.stamp)
    c.to_csv(w.path("curve.csv"), w.stamp)
    svg.curve_plot(w.path("curve.svg"), list(c.points.T), f"n={p['n']} kappa={p['kappa']} T={p['T']}", w.stamp)
    lo, hi = sandwich_margins(tc.sigma, tc.times, d.n)
    return {"final_sigma": tc.sigma[-1].tolist(), "min_lower_margin": float(lo.min()),
            "min_upper_margin": float(hi[1:].min()) if hi.shape[0] > 1 else math.inf,
            "collided_step": c.collided_step}, True


def _exp_energy(p, seed, w: Writer):
    n = p["n"]
    base = zero_energy_driver(equally_spaced(n).angles, p["T"], p["dt"])
    states = base.states + p["omega"] * base.times[:, None]
    d = DriverPath(p["dt"], states, None, {"generator": "rotated_zero_energy", "omega": p["omega"]})
    c = trace(d)
    est = estimate_loop_term(list(c.points.T), LoopParams(n_samples=p["loops"], seed=seed))
    rec = blm_rate_finite_T(d, c, est.mass, loop_stderr=est.stderr)
    # the rate functions are kappa -> 0 objects
    out = {"n": n, "kappa": 0.0, "T": p["T"], "dt": p["dt"], "energy_dyson": rec.rate_dyson,
           **rec.as_dict(), "loop_mass": est.mass, "loop_stderr": est.stderr}
    w.csv("energy.csv", list(out), [list(out.values())])
    return out, True


def _exp_loop_slope(p, seed, w: Writer):
    n = p["n"]
    r = slope_experiment(n, p["T_grid"], params=LoopParams(n_samples=p["loops"], seed=seed))
    T, L, se = np.array(r["T"]), np.array(r["L"]), np.array(r["L_stderr"])
    w.csv("loop_slope.csv", ["T", "L", "stderr"], zip(T, L, se))
    half = T >= np.median(T)
    b = float(np.mean(L[half]) - r["slope"] * np.mean(T[half]))
    bref = float(np.mean(L[half]) - r["reference"] * np.mean(T[half]))
    svg.line_plot(w.path("loop_slope.svg"), [
        {"x": T, "y": L, "err": se, "label": "L(T)"},
        {"x": T, "y": b + r["slope"] * T, "label": f"fit slope {r['slope']:.3f}", "markers": False},
        {"x": T, "y": bref + r["reference"] * T, "dash": True, "markers": False,
         "label": f"reference {r['reference']:.3f}"},
    ], f"loop term, n={n}", "T", "L", stamp=w.stamp)
    ok = abs(r["slope"] - r["reference"]) <= 0.15 * r["reference"]
    return r, ok


def _exp_escape(p, seed, w: Writer):
    ests = escape_probability_mc(p["kappa"], p["n"], u=p["u"], v=p["v"], horizon=p["horizon"],
                                 n_samples=p["samples"], rng=SeededRng(seed, 0), dt=p["dt"])
    rows = [e.row() for e in ests]
    w.csv("escape.csv", list(rows[0]), [list(r.values()) for r in rows])
    fit = fit_escape_exponent(ests)
    pos = [e for e in ests if e.escapes > 0]
    series = []
    if pos:
        x = np.array([e.v - e.u for e in pos])
        y = np.log([e.p_hat for e in pos])
        err = np.array([(math.log(e.ci[1]) - math.log(e.ci[0])) / 2 for e in pos])
        series.append({"x": x, "y": y, "err": err, "label": "log p_hat"})
        if math.isfinite(fit["slope"]):
            series.append({"x": x, "y": fit["intercept"] + fit["slope"] * x, "markers": False,
                           "label": f"fit slope {fit['slope']:.3f}"})
        ref = -(8 - p["kappa"]) / (2 * p["kappa"])
        series.append({"x": x, "y": y[0] + ref * (x - x[0]), "dash": True, "markers": False,
                       "label": f"bound rate {ref:.3f}"})
        svg.line_plot(w.path("escape_fit.svg"), series, "escape probability", "v - u", "log p",
                      stamp=w.stamp)
    return {"estimates": rows, "fit": fit}, bool(fit["slope"] < 0) if math.isfinite(fit["slope"]) else False


def _exp_transience(p, seed, w: Writer):
    r = transience_experiment(p["kappa"], p["n"], p["T"], p["dt"], p["samples"], seed)
    t, med = r.pop("times"), r.pop("median_radius")
    env = 4.0 * np.exp(-(p["n"] * t - 0.5 * math.log(p["n"])))
    w.csv("transience.csv", ["t", "median_max_radius", "envelope"], zip(t, med, env))
    svg.line_plot(w.path("transience.svg"), [
        {"x": t, "y": np.log(med), "label": "log median radius", "markers": False},
        {"x": t, "y": np.log(env), "label": "log envelope", "dash": True, "markers": False},
    ], "tip radius", "t", "log r", stamp=w.stamp)
    return r, r["envelope_ok"]


def _exp_tilt(p, seed, w: Writer):
    n, kappa = p["n"], p["kappa"]
    ens = importance_sample_nradial(kappa, n, T=p["T"], dt=p["dt"], n_samples=p["samples"],
                                    rng=SeededRng(seed, 0))
    direct = dyson_final_states(equally_spaced(n).angles, kappa, p["T"], p["dt"], seed + 1,
                                range(p["direct"]))
    ut = np.array([log_partition_u(s) for s in ens.final_states])
    rank = np.empty(ens.weights.size, dtype=int)
    rank[np.argsort(-ens.weights, kind="stable")] = np.arange(ens.weights.size)
    rows, a = [], 0
    for i, col in enumerate(ens.collided):
        if col:
            rows.append([i, 0.0, "", 1, ""])
        else:
            rows.append([i, float(ens.weights[a]), float(ut[a]), 0, int(rank[a])])
            a += 1
    w.csv("ensemble.csv", ["id", "weight", "U_T", "collided_flag", "ess_rank"], rows)
    res = {"ess": ens.ess, "discard_fraction": ens.discard_fraction, "inconclusive": ens.inconclusive}
    if n == 2:
        gd = np.mod(direct[:, 1] - direct[:, 0], 2 * math.pi)
        res["ks_gap"] = weighted_ks(ens.gaps(), ens.weights, gd)
    mu_w, se_w = ens.mean(lambda s: [log_partition_u(x) for x in s])
    ud = np.array([log_partition_u(x) for x in direct])
    res.update({"U_T_weighted": mu_w, "U_T_weighted_se": se_w, "U_T_direct": float(ud.mean()),
                "U_T_direct_se": float(ud.std(ddof=1) / math.sqrt(ud.size))})
    z = abs(mu_w - res["U_T_direct"]) / math.hypot(se_w, res["U_T_direct_se"])
    res["U_T_z"] = z
    return res, (not ens.inconclusive) and z <= 3.0


def _exp_concentration(p, seed, w: Writer):
    r = concentration_experiment(p["n"], kappa_grid=p["kappa_grid"], T=p["T"], dt=p["dt"],
                                 n_samples=p["samples"], seed=seed)
    w.csv("concentration.csv", ["kappa", "median_sup_deviation"], zip(r["kappa"], r["median"]))
    svg.line_plot(w.path("concentration.svg"), [
        {"x": np.log(r["kappa"]), "y": np.log(r["median"]), "label": "log median deviation"}],
        "concentration", "log kappa", "log deviation", stamp=w.stamp)
    return r, r["strictly_decreasing"]


def _exp_audit(p, seed, w: Writer):
    rows = audit_rows(seed=seed)
    w.csv("audit.csv", ["check", "bound", "ok", "detail"], [[r[0], r[1], int(r[2]), r[3]] for r in rows])
    return {"rows": rows}, all(r[2] for r in rows)


EXPERIMENTS = {
    "trace": _exp_trace,
    "energy": _exp_energy,
    "loop-slope": _exp_loop_slope,
    "escape": _exp_escape,
    "transience": _exp_transience,
    "tilt-crosscheck": _exp_tilt,
    "concentration": _exp_concentration,
    "bounds-audit": _exp_audit,
}


# -- audit ---------------------------------------------------------------------


def audit_rows(seed: int = 2024, dt: float = 2e-3, sigma_shift: float = 0.0,
               partition_samples: int = 4000) -> list:
    """Every deterministic bound over a canned trajectory battery.

    Each row is ``(check, quoted bound, ok, detail)``. ``sigma_shift`` adds a
    constant to the computed capacities and exists as a negative control.
    """
    horizons = {2: 3.5, 3: 2.4}
    lo_m, hi_m, hit_m, koebe_ok, env_ok = math.inf, math.inf, math.inf, True, True
    tol = 5.0 * dt
    for n, T in horizons.items():
        th = equally_spaced(n).angles
        drivers = [zero_energy_driver(th, T, dt)]
        drivers += [simulate_dyson(th, 4.0, T, dt, SeededRng(seed, 100 * n + i)) for i in range(2)]
        for d in drivers:
            c = trace(d)
            hr = check_hitting_bounds(c, (2.0, 4.0, 6.0), tol)
            hit_m = min(hit_m, hr.worst_margin)
            short = d.truncated(int(round(1.0 / dt)))
            cs = trace(short)
            sig = time_change(short, curve=cs, cross_check=False).sigma + sigma_shift
            lo, hi = sandwich_margins(sig, cs.times, n)
            lo_m = min(lo_m, float(lo.min()))
            hi_m = min(hi_m, float(hi[1:].min()))
            koebe_ok &= koebe_envelope_ok(cs, sig)
            r = np.abs(c.points).max(axis=1)
            env = 4.0 * np.exp(-(n * c.times - 0.5 * math.log(n)))
            env_ok &= bool(np.all(r <= env))
    pe = partition_expectation_check(4.0, 2, t=0.5, n_samples=partition_samples, seed=seed)
    c83 = sle_constants(8.0 / 3.0, 2).central_charge
    c6 = sle_constants(6.0, 2).central_charge
    b1 = max(abs(sle_constants(k, 1).beta_hat) for k in (0.5, 2.0, 4.0, 6.0))
    umin = [(n, u_min(n)) for n in (2, 3, 4)]
    return [
        ("time change, lower", "nt - log(n)/2 <= sigma^j(t)", lo_m >= -tol, f"min margin {lo_m:.4g}"),
        ("time change, upper", "sigma^j(t) < nt", hi_m > -tol, f"min margin {hi_m:.4g}"),
        ("hitting times", "v - log(4) <= n rho^j(v) <= v + log(n)/2", hit_m >= -tol,
         f"min margin {hit_m:.4g}"),
        ("Koebe", "dist(0, gamma^j[0,t]) <= 4 exp(-cap(gamma^j[0,t]))", koebe_ok, ""),
        ("tip envelope", "max_j |gamma^j(t)| <= 4 exp(-(nt - log(n)/2))", env_ok, ""),
        ("partition expectation", "E[1/Z(theta_t)] <= exp(n(n^2-1)t/12)/Z(theta_0)", pe["ok"],
         f"mean {pe['mean']:.4g} +- {pe['stderr']:.2g}, bound {pe['bound']:.4g}"),
        ("central charge roots", "c(8/3) = c(6) = 0", abs(c83) < 1e-12 and abs(c6) < 1e-12,
         f"{c83:.2g}, {c6:.2g}"),
        ("one-curve exponent", "beta_hat_1(kappa) = 0", b1 < 1e-12, f"{b1:.2g}"),
        ("minimal U", "U(equally spaced) = u_min(n)",
         all(abs(log_partition_u(equally_spaced(n).angles) - u) < 1e-9 for n, u in umin),
         ", ".join(f"{u:.6f}" for _, u in umin)),
    ]


def print_table(rows, stream=sys.stdout) -> None:
    width = max(len(r[0]) for r in rows)
    bw = max(len(r[1]) for r in rows)
    for name, bound, ok, detail in rows:
        stream.write(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {bound:<{bw}}  {detail}\n")


# -- entry points --------------------------------------------------------------


def cmd_run(args) -> int:
    try:
        cfg = parse_config(Path(args.config).read_text())
    except OSError as e:
        log.error("config: %s", e)
        return EXIT_CONFIG
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    if args.out:
        cfg["out"] = args.out
    h = config_hash(cfg)
    w = Writer(cfg["out"], h)
    try:
        results, ok = EXPERIMENTS[cfg["experiment"]](cfg["params"], cfg["seed"], w)
    except NumericalAbort as e:
        dump = w.dir / "abort.json"
        dump.write_text(json.dumps({"error": str(e), "config": cfg, "config_hash": h}, indent=2) + "\n")
        log.error("numerical abort: %s (diagnostics in %s)", e, dump)
        return EXIT_ABORT
    except ValueError as e:
        # estimators refuse parameters they cannot resolve
        log.error("config error: %s", e)
        return EXIT_CONFIG
    results["passed"] = bool(ok)
    w.manifest(cfg, results)
    log.info("%s: %s, results in %s", cfg["experiment"], "ok" if ok else "assertion failed", w.dir)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_audit(args) -> int:
    rows = audit_rows(seed=args.seed, sigma_shift=args.inject_sigma_shift)
    print_table(rows)
    return EXIT_OK if all(r[2] for r in rows) else EXIT_FAIL


def cmd_trace(args) -> int:
    p = {"n": args.n, "kappa": args.kappa, "T": args.T, "dt": args.dt, "sample": "midpoint"}
    for k in ("n", "dt", "T"):
        if p[k] <= 0:
            log.error("config error: %s must be positive", k)
            return EXIT_CONFIG
    if p["kappa"] < 0:
        log.error("config error: kappa must be nonnegative")
        return EXIT_CONFIG
    cfg = {"experiment": "trace", "seed": args.seed, "out": args.out, "params": p}
    w = Writer(args.out, config_hash(cfg))
    try:
        results, _ = _exp_trace(p, args.seed, w)
    except NumericalAbort as e:
        log.error("numerical abort: %s", e)
        return EXIT_ABORT
    w.manifest(cfg, results)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mrsle", description="Multiradial SLE experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a TOML config")
    r.add_argument("config")
    r.add_argument("--out", help="override the results directory")
    r.set_defaults(fn=cmd_run)
    a = sub.add_parser("audit", help="check every deterministic bound on a canned battery")
    a.add_argument("--seed", type=int, default=2024)
    a.add_argument("--inject-sigma-shift", type=float, default=0.0, help=argparse.SUPPRESS)
    a.set_defaults(fn=cmd_audit)
    t = sub.add_parser("trace", help="simulate and trace one trajectory")
    t.add_argument("--n", type=int, default=2)
    t.add_argument("--kappa", type=float, default=4.0)
    t.add_argument("--T", type=float, default=1.0)
    t.add_argument("--dt", type=float, default=1e-3)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_trace)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
