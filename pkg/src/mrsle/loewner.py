"""Multi-slit radial Loewner engine.

A driver path on a uniform grid is turned into a list of elementary radial
slits: during step ``k`` each curve receives one slit of capacity ``dt`` at
its driving angle, the slit order alternating between steps. Every derived
quantity (boundary and interior flows, traces, capacities) is a composition
of the explicit single-slit maps in :mod:`mrsle._kernels`, so the total
capacity after ``k`` steps is ``n k dt`` to rounding and univalence is never
lost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _kernels as K
from .config import TWO_PI, TorusConfig

__all__ = [
    "NumericalAbort",
    "TimeChangeMismatch",
    "DriverPath",
    "SlitChain",
    "BoundaryFlow",
    "InteriorFlow",
    "MultiradialCurve",
    "IndependentCurve",
    "TimeChange",
    "DerivativeReport",
    "evolve_boundary",
    "evolve_interior",
    "trace",
    "trace_single",
    "unzip",
    "time_change",
    "project_to_common_time",
    "check_derivative_bounds",
    "koebe_envelope_ok",
    "sandwich_margins",
]


class NumericalAbort(RuntimeError):
    """Integration could not proceed (collision, blow-up, step rejection)."""


class TimeChangeMismatch(NumericalAbort):
    def __init__(self, msg, direct, ode):
        super().__init__(msg)
        self.direct = direct
        self.ode = ode


@dataclass
class DriverPath:
    """Driving angles on the grid ``t_k = k dt``, shape ``(steps + 1, n)``."""

    dt: float
    states: np.ndarray
    kappa_tag: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        self.states = s
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    @property
    def T(self) -> float:
        return self.dt * self.steps

    def config(self, k: int) -> TorusConfig:
        return TorusConfig(self.states[k])

    def min_gaps(self) -> np.ndarray:
        if self.n == 1:
            return np.full(self.steps + 1, TWO_PI)
        s = self.states
        d = np.mod(np.diff(np.concatenate([s, s[:, :1]], axis=1), axis=1), TWO_PI)
        ordered = np.abs(d.sum(axis=1) - TWO_PI) < 1e-9
        return np.where(ordered, d.min(axis=1), 0.0)

    def first_collision(self, floor: float = 1e-12) -> int | None:
        bad = np.nonzero(self.min_gaps() <= floor)[0]
        return int(bad[0]) if bad.size else None

    def validate(self, max_increment: float = math.pi / 2) -> None:
        k = self.first_collision()
        if k is not None:
            raise NumericalAbort(f"driver collision at step {k}")
        if self.steps and np.max(np.abs(np.diff(self.states, axis=0))) > max_increment:
            raise NumericalAbort("driver increment exceeds continuity bound")

    def truncated(self, steps: int) -> "DriverPath":
        return DriverPath(self.dt, self.states[: steps + 1].copy(), self.kappa_tag, dict(self.meta))

    def rotated(self, c: float) -> "DriverPath":
        return DriverPath(self.dt, self.states + c, self.kappa_tag, dict(self.meta))

    @classmethod
    def constant(cls, theta0, T: float, dt: float) -> "DriverPath":
        a = theta0.angles if isinstance(theta0, TorusConfig) else np.atleast_1d(np.asarray(theta0, float))
        steps = int(round(T / dt))
        return cls(dt, np.tile(a, (steps + 1, 1)), meta={"generator": "constant"})

    def header(self) -> dict:
        return {
            "n": self.n,
            "dt": self.dt,
            "steps": self.steps,
            "theta0": self.states[0].tolist(),
            "kappa": self.kappa_tag,
            **self.meta,
        }

    def to_csv(self, path, comment: str | None = None) -> None:
        cols = ["step", "t"] + [f"theta_{j + 1}" for j in range(self.n)]
        with open(path, "w") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            fh.write(",".join(cols) + "\n")
            for k in range(self.steps + 1):
                row = [str(k), repr(k * self.dt)] + [repr(float(v)) for v in self.states[k]]
                fh.write(",".join(row) + "\n")
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.header(), fh, indent=2, sort_keys=True)


@dataclass
class SlitChain:
    """Elementary slits in the order they are applied."""

    alpha: np.ndarray
    tau: np.ndarray
    curve: np.ndarray
    per_step: int
    dt: float

    def __post_init__(self):
        self.alpha = np.ascontiguousarray(self.alpha, dtype=float)
        self.tau = np.ascontiguousarray(self.tau, dtype=float)
        self.curve = np.ascontiguousarray(self.curve, dtype=np.int64)
        self.eia = np.exp(1j * self.alpha)
        self.emt = np.exp(-self.tau)
        self.ept = np.exp(self.tau)

    def __len__(self):
        return self.alpha.size

    @property
    def steps(self) -> int:
        return self.alpha.size // self.per_step

    @property
    def capacity(self) -> float:
        return float(self.tau.sum())

    @staticmethod
    def step_order(k: int, n: int) -> range:
        return range(n) if k % 2 == 0 else range(n - 1, -1, -1)

    @classmethod
    def from_driver(cls, driver: DriverPath, sample: str = "midpoint") -> "SlitChain":
        s = driver.states
        if sample == "midpoint":
            ang = 0.5 * (s[:-1] + s[1:])
        elif sample == "left":
            ang = s[:-1]
        else:
            raise ValueError(f"unknown sampling rule {sample!r}")
        n = driver.n
        order = np.empty((driver.steps, n), dtype=np.int64)
        order[0::2] = np.arange(n)
        order[1::2] = np.arange(n)[::-1]
        alpha = np.take_along_axis(ang, order, axis=1).ravel()
        tau = np.full(alpha.size, driver.dt)
        return cls(alpha, tau, order.ravel(), n, driver.dt)

    def slit_index(self, k: int, j: int) -> int:
        """Position of curve ``j``'s slit within step ``k``."""
        base = k * self.per_step
        pos = j if k % 2 == 0 else self.per_step - 1 - j
        return base + pos

    def forward(self, z, stop: int | None = None) -> np.ndarray:
        stop = len(self) if stop is None else stop
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return np.array([K.compose_forward(v, self.eia, self.ept, 0, stop) for v in z])

    def inverse(self, w, upto: int | None = None) -> np.ndarray:
        upto = len(self) if upto is None else upto
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        return np.array([K.compose_inverse(v, self.eia, self.emt, upto) for v in w])


@dataclass
class BoundaryFlow:
    grid: np.ndarray
    h: np.ndarray
    hprime: np.ndarray
    swallowed: np.ndarray
    dt: float
    n: int

    @property
    def capacity(self) -> np.ndarray:
        return self.n * self.dt * np.arange(self.h.shape[0])

    def is_monotone(self) -> bool:
        """Strict monotonicity of ``x -> h_t(x)`` on the sorted grid."""
        order = np.argsort(self.grid)
        h = self.h[:, order]
        span = h[:, -1] - h[:, 0]
        return bool(np.all(np.diff(h, axis=1) > 0) and np.all(span < TWO_PI))


@dataclass
class InteriorFlow:
    points: np.ndarray
    images: np.ndarray
    swallowed: np.ndarray
    dt: float
    n: int

    def log_derivative_at_zero(self) -> np.ndarray:
        return self.n * self.dt * np.arange(self.images.shape[0])


@dataclass
class MultiradialCurve:
    dt: float
    points: np.ndarray
    theta0: np.ndarray
    chain: SlitChain | None = None
    sigma: np.ndarray | None = None
    collided_step: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.points.shape[0] - 1

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    def radii(self) -> np.ndarray:
        return np.abs(self.points)

    def to_csv(self, path, comment: str | None = None) -> None:
        sig = self.sigma if self.sigma is not None else np.full(self.points.shape, np.nan)
        with open(path, "w") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            fh.write("t,j,re,im,sigma_j\n")
            for k in range(self.steps + 1):
                for j in range(self.n):
                    z = self.points[k, j]
                    fh.write(f"{k * self.dt!r},{j + 1},{float(z.real)!r},{float(z.imag)!r},{float(sig[k, j])!r}\n")
        head = {"n": self.n, "dt": self.dt, "steps": self.steps,
                "theta0": np.asarray(self.theta0).tolist(), **self.meta}
        with open(str(path) + ".json", "w") as fh:
            json.dump(head, fh, indent=2, sort_keys=True)


@dataclass
class IndependentCurve:
    """A single curve sampled on its own capacity grid ``s``."""

    points: np.ndarray
    s: np.ndarray


@dataclass
class TimeChange:
    times: np.ndarray
    sigma: np.ndarray
    sigma_ode: np.ndarray | None = None

    @property
    def discrepancy(self) -> float:
        if self.sigma_ode is None:
            return 0.0
        return float(np.max(np.abs(self.sigma - self.sigma_ode)))


# -- flows -----------------------------------------------------------------


def evolve_boundary(driver: DriverPath, grid, mode: str = "slit",
                    chain: SlitChain | None = None, floor: float | None = None) -> BoundaryFlow:
    """Images ``h_t(x)`` and derivatives ``h_t'(x)`` of boundary angles.

    ``mode="slit"`` composes the exact elementary boundary maps;
    ``mode="rk4"`` integrates the angular ODE and its linearization with the
    driver interpolated linearly inside each step.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    d0 = np.abs(np.vectorize(K.wrap_angle)(grid[:, None] - driver.states[0][None, :]))
    if np.any(d0 < 1e-12):
        raise ValueError("grid point coincides with a driver at t=0")
    if mode == "slit":
        chain = chain or SlitChain.from_driver(driver)
        h, hp, sw = K.boundary_chain(grid, chain.alpha, chain.tau, chain.per_step,
                                     10.0 * driver.dt, driver.states)
    elif mode == "rk4":
        h, hp, sw = _boundary_rk4(driver, grid, floor)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return BoundaryFlow(grid, h, hp, sw, driver.dt, driver.n)


def _boundary_rhs(h, hp, theta):
    half = 0.5 * (h[:, None] - theta[None, :])
    sn = np.sin(half)
    cot = np.cos(half) / sn
    return cot.sum(axis=1), -0.5 * hp * (1.0 / sn**2).sum(axis=1)


def _boundary_rk4(driver: DriverPath, grid, floor=None, max_sub: int = 4096):
    dt = driver.dt
    floor = 10.0 * dt if floor is None else floor
    h = grid.copy()
    hp = np.ones_like(h)
    out_h = [h.copy()]
    out_p = [hp.copy()]
    sw = np.full(grid.size, -1, dtype=np.int64)
    for k in range(driver.steps):
        a, b = driver.states[k], driver.states[k + 1]
        gap = np.min(np.abs(np.vectorize(K.wrap_angle)(h[:, None] - a[None, :])))
        nsub = 1
        while nsub * floor < 4.0 * dt / max(gap, 1e-300) and nsub < max_sub:
            nsub *= 2
        if gap < floor:
            raise NumericalAbort(f"boundary point within {gap:.3g} of a driver at step {k}")
        hs = dt / nsub
        for i in range(nsub):
            t0 = i / nsub
            th = lambda f: a + (b - a) * (t0 + f / nsub)  # noqa: E731
            k1 = _boundary_rhs(h, hp, th(0.0))
            k2 = _boundary_rhs(h + 0.5 * hs * k1[0], hp + 0.5 * hs * k1[1], th(0.5))
            k3 = _boundary_rhs(h + 0.5 * hs * k2[0], hp + 0.5 * hs * k2[1], th(0.5))
            k4 = _boundary_rhs(h + hs * k3[0], hp + hs * k3[1], th(1.0))
            h = h + hs / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            hp = hp + hs / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        out_h.append(h.copy())
        out_p.append(hp.copy())
    return np.array(out_h), np.array(out_p), sw


def evolve_interior(driver: DriverPath, points, chain: SlitChain | None = None) -> InteriorFlow:
    """Images ``g_t(z)`` of interior points; ``swallowed`` holds the step at
    which a point reached the boundary (``-1`` if never)."""
    z = np.atleast_1d(np.asarray(points, dtype=complex))
    if np.any(np.abs(z) >= 1.0):
        raise ValueError("points must lie in the open disk")
    chain = chain or SlitChain.from_driver(driver)
    imgs = K.interior_chain(z, chain.eia, chain.ept, chain.per_step)
    sw = np.full(z.size, -1, dtype=np.int64)
    on_circle = np.abs(imgs) >= 1.0 - 1e-12
    for p in range(z.size):
        hit = np.nonzero(on_circle[:, p])[0]
        if hit.size:
            sw[p] = hit[0]
    return InteriorFlow(z, imgs, sw, driver.dt, driver.n)


def numerical_derivative_at_zero(driver: DriverPath, h: float | None = None,
                                 chain: SlitChain | None = None, nodes: int = 16) -> float:
    """``g_T'(0)`` from the mean of ``g_T(z) / z`` over a circle of radius ``h``.

    The default radius is ``exp(-cap) / 8``, half the distance to the hull
    that the Koebe quarter theorem guarantees, so ``g_T`` is analytic on the
    closed disk and the trapezoidal mean converges geometrically.
    """
    chain = chain or SlitChain.from_driver(driver)
    h = math.exp(-chain.capacity) / 8.0 if h is None else h
    z = h * np.exp(2j * math.pi * np.arange(nodes) / nodes)
    return float(np.mean(chain.forward(z) / z).real)


# -- traces ----------------------------------------------------------------


def trace(driver: DriverPath, sample: str = "midpoint", stop_radius: float = 0.0) -> MultiradialCurve:
    """Tips ``g_t^{-1}(exp(i theta^j_t))`` on the driver grid.

    The tip of curve ``j`` after step ``k`` is the tip of its elementary slit
    of that step, pulled back through all earlier slits. A driver collision
    truncates the trace and records the step. With ``stop_radius > 0`` the
    trace ends at the first step by which every curve has entered that disk.
    """
    stop = driver.first_collision()
    if stop is not None:
        driver = driver.truncated(max(stop - 1, 0))
    chain = SlitChain.from_driver(driver, sample)
    n = driver.n
    steps = driver.steps
    if steps:
        idx = np.array([[chain.slit_index(k, j) for j in range(n)] for k in range(steps)],
                       dtype=np.int64)
        tip_r = np.array([K.tip_radius(t) for t in chain.tau])
        tips, done = K.trace_tips(chain.eia, chain.emt, tip_r, idx, stop_radius)
        if done < steps:
            tips = tips[:done]
            driver = driver.truncated(done)
            chain = SlitChain.from_driver(driver, sample)
    else:
        tips = np.empty((0, n), dtype=complex)
    pts = np.vstack([np.exp(1j * driver.states[0])[None, :], tips])
    meta = {"generator": driver.meta.get("generator", "unknown"), "sample": sample}
    return MultiradialCurve(driver.dt, pts, driver.states[0].copy(), chain,
                            collided_step=stop, meta=meta)


def trace_single(theta, ds: float) -> IndependentCurve:
    """Trace a scalar driver as a lone curve on its own capacity grid."""
    d = DriverPath(ds, np.asarray(theta, float)[:, None])
    c = trace(d)
    return IndependentCurve(c.points[:, 0].copy(), ds * np.arange(d.steps + 1))


def unzip(points):
    """Fit radial slits along a polyline starting on the circle.

    Returns ``(alpha, tau)`` per segment; raises :class:`NumericalAbort`
    when a point cannot be mapped into the disk (non-simple input).
    """
    pts = np.ascontiguousarray(points, dtype=complex)
    alpha, tau, bad = K.unzip_points(pts)
    if bad >= 0:
        raise NumericalAbort(f"unzipping failed at point {bad}")
    return alpha, tau


# -- time change -----------------------------------------------------------


def _direct_sigma(curve: MultiradialCurve):
    sig = np.zeros((curve.steps + 1, curve.n))
    own = []
    for j in range(curve.n):
        alpha, tau = unzip(curve.points[:, j])
        sig[1:, j] = np.cumsum(tau)
        own.append((alpha, tau))
    return sig, own


def time_change(driver: DriverPath, flow: BoundaryFlow | None = None,
                curve: MultiradialCurve | None = None, cross_check: bool = True,
                eta: float | None = None, tol: float | None = None) -> TimeChange:
    """Per-curve capacities ``sigma^j(t_k)``.

    The returned value unzips each traced curve on its own. With
    ``cross_check`` the rate ``1 / h'_{t,j}(theta^j)^2`` is also integrated,
    where ``h'_{t,j}`` is the boundary derivative at the driver of the map
    that removes the other curves after curve ``j``. ``flow`` is accepted for
    interface symmetry; the derivative is evaluated from the slit chain.
    """
    curve = curve or trace(driver)
    sig, own = _direct_sigma(curve)
    tc = TimeChange(curve.times, sig)
    if not cross_check:
        return tc
    if driver.n == 1:
        tc.sigma_ode = curve.times[:, None].copy()
    else:
        tc.sigma_ode = _ode_sigma(driver, curve, own, eta)
    if tol is None:
        tol = default_time_change_tol(driver.dt)
    if tc.discrepancy > tol:
        raise TimeChangeMismatch(
            f"time-change routes disagree by {tc.discrepancy:.3g} > {tol:.3g}", tc.sigma, tc.sigma_ode)
    return tc


def default_time_change_tol(dt: float) -> float:
    return 5.0 * math.sqrt(dt)


def _ode_sigma(driver, curve, own, eta):
    chain = curve.chain
    steps, n = curve.steps, curve.n
    eta = 4.0 * math.sqrt(driver.dt) if eta is None else eta
    out = np.zeros((steps + 1, n))
    # angle of curve j at the start of step k, where slit (k, j) is about to attach
    for j in range(n):
        alpha_j, tau_j = own[j]
        eia_j = np.exp(1j * alpha_j)
        ept_j = np.exp(tau_j)
        theta = np.empty(steps)
        upto = np.empty(steps, dtype=np.int64)
        for k in range(steps):
            m = chain.slit_index(k, j)
            theta[k] = chain.alpha[m]
            upto[k] = m
        rate = np.empty(steps)
        for k in range(steps):
            rate[k] = _rate_at(theta[k], chain, int(upto[k]), eia_j, ept_j, k, eta)
        out[1:, j] = np.cumsum(rate) * driver.dt
    return out


def _rate_at(theta, chain, upto, eia_j, ept_j, k, eta):
    e = np.exp(1j * theta)
    vals = []
    for r in (eta, 2 * eta):
        z = (1.0 - r) * e
        w, d1 = K.compose_inverse_deriv(z, chain.eia, chain.emt, upto)
        f, d2 = K.compose_forward_deriv(w, eia_j, ept_j, 0, k)
        vals.append((z * d1 * d2 / f).real)
    fprime = 2.0 * vals[0] - vals[1]
    return fprime * fprime


def sandwich_margins(sigma, times, n: int):
    """Margins of ``n t - log(n)/2 <= sigma < n t`` (positive means inside)."""
    lo = sigma - (n * times[:, None] - 0.5 * math.log(n))
    hi = n * times[:, None] - sigma
    return lo, hi


def koebe_envelope_ok(curve: MultiradialCurve, sigma=None, factor: float = 4.0) -> bool:
    """``dist(0, gamma^j[0, t]) <= factor * exp(-sigma^j(t))`` at every step."""
    sigma = curve.sigma if sigma is None else sigma
    dist = np.minimum.accumulate(np.abs(curve.points), axis=0)
    return bool(np.all(dist <= factor * np.exp(-sigma) * (1 + 1e-12)))


# -- projection --------------------------------------------------------------


def project_to_common_time(curves, T: float, dt: float, delta_min: float | None = None
                           ) -> MultiradialCurve:
    """Reparameterize independently parameterized curves in common time.

    Each step grows every curve by one slit of capacity ``dt`` in the current
    uniformizing coordinates, cutting the curve where the slit tip lands.
    Curve ``j``'s own capacity at the cut is ``sigma^j``. If the curves come
    closer than ``delta_min`` or one of them is exhausted, the result stops
    there and ``collided_step`` / ``meta['exhausted']`` record it.
    """
    if isinstance(curves, IndependentCurve):
        curves = [curves]
    n = len(curves)
    m = max(c.points.size for c in curves)
    pts = np.full((n, m), np.nan + 0j)
    ss = np.full((n, m), np.nan)
    for j, c in enumerate(curves):
        pts[j, : c.points.size] = c.points
        ss[j, : c.s.size] = c.s
    if delta_min is None:
        seg = np.abs(np.diff(pts, axis=1))
        delta_min = 4.0 * float(np.median(seg[np.isfinite(seg)]))
    steps = int(round(T / dt))
    alpha, zc, sc, status, last = _project_kernel(pts, ss, steps, dt, delta_min)
    theta0 = np.angle(pts[:, 0])
    done = last
    chain = SlitChain(alpha[: done * n], np.full(done * n, dt),
                      _step_orders(done, n), n, dt)
    meta = {"generator": "projection", "delta_min": float(delta_min)}
    if status == 2:
        meta["exhausted"] = True
    return MultiradialCurve(dt, zc[: done + 1].copy(), theta0, chain, sc[: done + 1].copy(),
                            collided_step=(done + 1 if status == 1 else None), meta=meta)


def _step_orders(steps, n):
    order = np.empty((steps, n), dtype=np.int64)
    order[0::2] = np.arange(n)
    order[1::2] = np.arange(n)[::-1]
    return order.ravel()


def projected_driver(curve: MultiradialCurve) -> DriverPath:
    """Common-time driving angles read off a projected curve's slit chain."""
    n, steps = curve.n, curve.steps
    st = np.empty((steps + 1, n))
    st[0] = curve.theta0
    ch = curve.chain
    for k in range(steps):
        for j in range(n):
            st[k + 1, j] = ch.alpha[ch.slit_index(k, j)]
    st = np.unwrap(st, axis=0)
    return DriverPath(curve.dt, st, meta={"generator": "projection"})



@njit(cache=True)
def _project_kernel(pts, ss, steps, dt, delta_min):
    n, m = pts.shape
    img = pts.copy()
    cut_img = pts[:, 0].copy()
    cut_z = pts[:, 0].copy()
    cut_s = ss[:, 0].copy()
    nxt = np.ones(n, dtype=np.int64)
    length = np.empty(n, dtype=np.int64)
    for j in range(n):
        length[j] = m
        for i in range(m):
            if np.isnan(ss[j, i]):
                length[j] = i
                break
    alpha = np.empty(steps * n)
    zc = np.empty((steps + 1, n), dtype=np.complex128)
    sc = np.empty((steps + 1, n))
    zc[0] = cut_z
    sc[0] = cut_s
    rt = K.tip_radius(dt)
    ept = math.exp(dt)
    prev = np.ones(n, dtype=np.int64)
    for k in range(steps):
        for j in range(n):
            prev[j] = nxt[j]
        for q in range(n):
            j = q if k % 2 == 0 else n - 1 - q
            i = nxt[j]
            while i < length[j] and abs(img[j, i]) > rt:
                i += 1
            if i >= length[j]:
                # rounding can leave the last sample a hair outside the slit tip
                if i - 1 >= nxt[j] and abs(img[j, i - 1]) <= rt * (1.0 + 1e-9):
                    i -= 1
                else:
                    return alpha, zc, sc, 2, k
            if i == nxt[j]:
                p, zp, sp = cut_img[j], cut_z[j], cut_s[j]
            else:
                p, zp, sp = img[j, i - 1], pts[j, i - 1], ss[j, i - 1]
            qv = img[j, i]
            dv = qv - p
            a2 = (dv * dv.conjugate()).real
            b = (p.conjugate() * dv).real
            c0 = (p * p.conjugate()).real - rt * rt
            disc = b * b - a2 * c0
            if disc < 0.0:
                disc = 0.0
            f = (-b - math.sqrt(disc)) / a2 if a2 > 0 else 1.0
            if f < 0.0:
                f = 0.0
            if f > 1.0:
                f = 1.0
            w = p + f * dv
            a = math.atan2(w.imag, w.real)
            alpha[k * n + q] = a
            cut_z[j] = zp + f * (pts[j, i] - zp)
            cut_s[j] = sp + f * (ss[j, i] - sp)
            nxt[j] = i
            e = complex(math.cos(a), math.sin(a))
            cut_img[j] = e
            for c in range(n):
                for v in range(nxt[c], length[c]):
                    img[c, v] = e * K.slit_apply(img[c, v] / e, ept)
                if c != j:
                    ci = cut_img[c] / e
                    cut_img[c] = e * K.slit_apply(ci, ept)
        zc[k + 1] = cut_z
        sc[k + 1] = cut_s
        # separation between the parts grown in this step and the others
        if n > 1:
            for j in range(n):
                for c in range(n):
                    if c == j:
                        continue
                    for u in range(prev[j] - 1, nxt[j] + 1):
                        z = cut_z[j] if u == nxt[j] else pts[j, u]
                        if abs(z - cut_z[c]) < delta_min:
                            return alpha, zc, sc, 1, k + 1
                        for v in range(1, nxt[c]):
                            if abs(z - pts[c, v]) < delta_min:
                                return alpha, zc, sc, 1, k + 1
    return alpha, zc, sc, 0, steps


# -- derivative bounds ---------------------------------------------------------


@dataclass
class DerivativeReport:
    x: float
    hprime: float
    cap: float
    hm_plus: float
    hm_minus: float
    lower_bound: float
    lower_ok: bool
    upper: dict

    def as_dict(self) -> dict:
        return {
            "x": self.x, "hprime": self.hprime, "cap": self.cap,
            "hm_plus": self.hm_plus, "hm_minus": self.hm_minus,
            "lower_bound": self.lower_bound, "lower_ok": self.lower_ok,
            "upper": {str(k): v for k, v in self.upper.items()},
        }


def check_derivative_bounds(hull: SlitChain | None, x: float, footprint=None,
                            exponents=(1.0, 0.5)) -> DerivativeReport:
    """Compare ``|h_K'(x)|`` with the two-sided hull-derivative bounds.

    ``footprint`` lists the angles where the hull meets the circle (the
    starting points of the curves). The harmonic measures of the two arcs
    next to ``x`` are their normalized image lengths.
    """
    if hull is None or len(hull) == 0:
        upper = {e: {"bound": 1.0, "ok": True} for e in exponents}
        return DerivativeReport(x, 1.0, 0.0, 0.5, 0.5, 0.25, True, upper)
    foot = np.atleast_1d(np.asarray(footprint, dtype=float))
    rel = np.mod(foot - x, TWO_PI)
    if np.any(rel < 1e-12) or np.any(rel > TWO_PI - 1e-12):
        raise ValueError("x lies on the hull")
    right = x + rel.min()          # first footprint point counterclockwise
    left = x - (TWO_PI - rel.max())  # first footprint point clockwise
    eps = 1e-13
    pts = np.array([x, right - eps, left + eps])
    h, hp, _ = K.boundary_chain(pts, hull.alpha, hull.tau, len(hull), -1.0,
                                np.zeros((2, 1)))
    hx, hr, hl = h[-1]
    hprime = float(hp[-1, 0])
    hm_plus = (hr - hx) / TWO_PI
    hm_minus = (hx - hl) / TWO_PI
    cap = hull.capacity
    lower = 0.25 * math.sin(math.pi * min(hm_plus, hm_minus))
    upper = {}
    for e in exponents:
        b = math.exp(-e * cap)
        upper[e] = {"bound": b, "ok": bool(hprime <= b * (1 + 1e-12))}
    return DerivativeReport(float(x), hprime, cap, float(hm_plus), float(hm_minus), lower,
                            bool(lower <= hprime), upper)
