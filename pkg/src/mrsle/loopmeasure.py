"""Brownian loop-measure interaction term.

``L`` integrates ``(N - 1)^+`` against the loop measure of loops staying in
the unit disk, where ``N`` counts the curves a loop meets. Two independent
estimators are provided:

* ``bridge_mc`` samples rooted loops (duration log-uniform, root from a
  mixture centred where the curves meet) and replaces the 0/1 hit
  indicators by per-step crossing probabilities of the Brownian bridge.
* ``lattice_det`` evaluates the random-walk loop measure on ``h Z^2`` via
  log-determinants of Green's function blocks and extrapolates in ``h``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .rng import SeededRng

__all__ = [
    "LoopEstimate",
    "LoopParams",
    "LoopBattery",
    "estimate_loop_term",
    "lattice_loop_oracle",
    "lattice_loop_mass",
    "slope_experiment",
    "radial_rays",
    "curve_distance",
    "config_hash",
]

T_MAX = 8.0


@dataclass
class LoopEstimate:
    mass: float
    stderr: float
    n_samples: int
    t_min_cutoff: float
    method: str
    t_max: float = T_MAX
    bias_bound: float = 0.0
    mesh: tuple | None = None
    levels: tuple | None = None
    config_hash: str = ""

    def to_json(self) -> str:
        d = {k: v for k, v in self.__dict__.items()}
        d["t_min"] = d.pop("t_min_cutoff")
        return json.dumps(d, sort_keys=True)


def config_hash(curves) -> str:
    h = hashlib.sha256()
    for c in curves:
        h.update(np.ascontiguousarray(c, dtype=complex).tobytes())
    return h.hexdigest()[:16]


# -- geometry ----------------------------------------------------------------

LEAF = 8


@njit(cache=True)
def _build_boxes(p):
    """Bounding boxes of an implicit binary tree over the segments of the
    polyline ``p``. Node ``i`` covers segment range ``[lo[i], hi[i])``."""
    nseg = p.shape[0] - 1
    size = 1
    while size * LEAF < nseg:
        size *= 2
    nnode = 2 * size
    lo = np.zeros(nnode, dtype=np.int64)
    hi = np.zeros(nnode, dtype=np.int64)
    box = np.empty((nnode, 4))
    box[:, 0] = np.inf
    box[:, 1] = np.inf
    box[:, 2] = -np.inf
    box[:, 3] = -np.inf
    per = (nseg + size - 1) // size
    for leaf in range(size):
        i = size + leaf
        a = min(leaf * per, nseg)
        b = min(a + per, nseg)
        lo[i] = a
        hi[i] = b
        for s in range(a, b):
            for q in (s, s + 1):
                x = p[q].real
                y = p[q].imag
                box[i, 0] = min(box[i, 0], x)
                box[i, 1] = min(box[i, 1], y)
                box[i, 2] = max(box[i, 2], x)
                box[i, 3] = max(box[i, 3], y)
    for i in range(size - 1, 0, -1):
        l, r = 2 * i, 2 * i + 1
        lo[i] = lo[l]
        hi[i] = hi[r]
        box[i, 0] = min(box[l, 0], box[r, 0])
        box[i, 1] = min(box[l, 1], box[r, 1])
        box[i, 2] = max(box[l, 2], box[r, 2])
        box[i, 3] = max(box[l, 3], box[r, 3])
    return lo, hi, box, size


@njit(cache=True)
def _pt_seg_dist(x, y, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    den = dx * dx + dy * dy
    t = 0.0
    if den > 0.0:
        t = ((x - ax) * dx + (y - ay) * dy) / den
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    ex = ax + t * dx - x
    ey = ay + t * dy - y
    return math.sqrt(ex * ex + ey * ey)


@njit(cache=True)
def _box_dist(x, y, b):
    dx = max(b[0] - x, 0.0, x - b[2])
    dy = max(b[1] - y, 0.0, y - b[3])
    return math.sqrt(dx * dx + dy * dy)


@njit(cache=True)
def _dist(x, y, p, lo, hi, box, size, cap):
    """Distance from ``(x, y)`` to the polyline, capped at ``cap``."""
    best = cap
    stack = np.empty(64, dtype=np.int64)
    top = 0
    stack[top] = 1
    top += 1
    while top > 0:
        top -= 1
        i = stack[top]
        if hi[i] <= lo[i] or _box_dist(x, y, box[i]) >= best:
            continue
        if i >= size:
            for s in range(lo[i], hi[i]):
                d = _pt_seg_dist(x, y, p[s].real, p[s].imag, p[s + 1].real, p[s + 1].imag)
                if d < best:
                    best = d
        else:
            stack[top] = 2 * i
            stack[top + 1] = 2 * i + 1
            top += 2
    return best


@njit(cache=True)
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True)
def _seg_cross(ax, ay, bx, by, cx, cy, dx, dy):
    d1 = _orient(cx, cy, dx, dy, ax, ay)
    d2 = _orient(cx, cy, dx, dy, bx, by)
    d3 = _orient(ax, ay, bx, by, cx, cy)
    d4 = _orient(ax, ay, bx, by, dx, dy)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


@njit(cache=True)
def _crosses(ax, ay, bx, by, p, lo, hi, box, size):
    x0 = min(ax, bx)
    x1 = max(ax, bx)
    y0 = min(ay, by)
    y1 = max(ay, by)
    stack = np.empty(64, dtype=np.int64)
    top = 0
    stack[top] = 1
    top += 1
    while top > 0:
        top -= 1
        i = stack[top]
        b = box[i]
        if hi[i] <= lo[i] or b[0] > x1 or b[2] < x0 or b[1] > y1 or b[3] < y0:
            continue
        if i >= size:
            for s in range(lo[i], hi[i]):
                if _seg_cross(ax, ay, bx, by, p[s].real, p[s].imag, p[s + 1].real, p[s + 1].imag):
                    return True
        else:
            stack[top] = 2 * i
            stack[top + 1] = 2 * i + 1
            top += 2
    return False


@njit(cache=True)
def _loop_value(xs, ys, delta, pts, offs, los, his, boxes, sizes, noff):
    """``(n-1) r_0 - sum_j r_j + r_all`` for one discretized loop.

    ``r_S`` is the probability that the bridge avoids the circle and the
    curves in ``S``, from per-step crossing probabilities
    ``exp(-2 d_a d_b / delta)`` (``1`` when the chord itself crosses).
    """
    n = offs.shape[0] - 1
    npts = xs.shape[0]
    cap = 12.0 * math.sqrt(delta)
    logstay = 0.0
    logc = np.zeros(n)
    dprev = np.empty(n)
    dcur = np.empty(n)
    for k in range(npts):
        x = xs[k]
        y = ys[k]
        if x * x + y * y >= 1.0:
            return 0.0
        for c in range(n):
            a, b = offs[c], offs[c + 1]
            na, nb = noff[c], noff[c + 1]
            dcur[c] = _dist(x, y, pts[a:b], los[na:nb], his[na:nb], boxes[na:nb], sizes[c], cap)
        if k > 0:
            px = xs[k - 1]
            py = ys[k - 1]
            ra = 1.0 - math.sqrt(px * px + py * py)
            rb = 1.0 - math.sqrt(x * x + y * y)
            if ra <= 0.0 or rb <= 0.0:
                return 0.0
            logstay += math.log1p(-math.exp(-2.0 * ra * rb / delta))
            step = math.sqrt((x - px) ** 2 + (y - py) ** 2)
            for c in range(n):
                if logc[c] == -np.inf:
                    continue
                da = dprev[c]
                db = dcur[c]
                if min(da, db) <= step:
                    a, b = offs[c], offs[c + 1]
                    na, nb = noff[c], noff[c + 1]
                    if da == 0.0 or db == 0.0 or _crosses(px, py, x, y, pts[a:b], los[na:nb],
                                                          his[na:nb], boxes[na:nb], sizes[c]):
                        logc[c] = -np.inf
                        continue
                logc[c] += math.log1p(-math.exp(-2.0 * da * db / delta))
        for c in range(n):
            dprev[c] = dcur[c]
    r0 = math.exp(logstay)
    tot = (n - 1) * r0
    lall = logstay
    for c in range(n):
        tot -= math.exp(logstay + logc[c])
        lall += logc[c]
    tot += math.exp(lall)
    return tot


@njit(cache=True)
def _battery_values(roots, times, npts, zoff, normals, delta_arr, pts, offs, los, his, boxes,
                    sizes, noff):
    m = roots.shape[0]
    out = np.empty(m)
    for i in range(m):
        N = npts[i]
        z = normals[zoff[i]: zoff[i] + 2 * N]
        sd = math.sqrt(delta_arr[i])
        xs = np.empty(N + 1)
        ys = np.empty(N + 1)
        bx = 0.0
        by = 0.0
        xs[0] = 0.0
        ys[0] = 0.0
        for k in range(N):
            bx += sd * z[2 * k]
            by += sd * z[2 * k + 1]
            xs[k + 1] = bx
            ys[k + 1] = by
        ex = xs[N]
        ey = ys[N]
        for k in range(N + 1):
            f = k / N
            xs[k] = roots[i].real + xs[k] - f * ex
            ys[k] = roots[i].imag + ys[k] - f * ey
        out[i] = _loop_value(xs, ys, delta_arr[i], pts, offs, los, his, boxes, sizes, noff)
    return out


# -- loop battery ------------------------------------------------------------------


@dataclass
class LoopParams:
    n_samples: int = 20000
    t_min: float | None = None
    t_max: float = T_MAX
    center: complex = 0.0
    scale: float = 1.0
    p_uniform: float = 0.3
    n_min: int = 256
    n_max: int = 4096
    t_ref: float = 0.05
    seed: int = 0
    stream: int = 7_000_000
    proposal: str = "center"
    max_anchors: int = 256


def bridge_points(t: float, params: LoopParams) -> int:
    """Bridge discretization: ``n_min`` points up to ``t_ref``, then growing
    linearly in ``t`` up to ``n_max``."""
    return int(min(params.n_max, max(params.n_min, round(params.n_min * t / params.t_ref))))


@dataclass
class LoopBattery:
    """A fixed set of rooted loops with importance weights.

    Reusing one battery across configurations gives common random numbers
    for paired comparisons.
    """

    roots: np.ndarray
    times: np.ndarray
    weights: np.ndarray
    npts: np.ndarray
    zoff: np.ndarray
    normals: np.ndarray
    t_min: float
    params: LoopParams = field(repr=False)

    @classmethod
    def draw(cls, t_min: float, params: LoopParams, anchors=None) -> "LoopBattery":
        """Draw the battery.

        Roots come from a mixture of the uniform law on the disk and a
        Cauchy-like kernel of width ``scale sqrt(t)``; the kernel sits at
        ``params.center`` or, when ``anchors`` is given, at an anchor chosen
        uniformly at random.
        """
        rng = SeededRng(params.seed, params.stream)
        m = params.n_samples
        u = rng.uniforms(5 * m, block=0).reshape(m, 5)
        lr = math.log(params.t_max / t_min)
        t = t_min * np.exp(lr * u[:, 0])
        a = params.scale * np.sqrt(t)
        uni = u[:, 1] < params.p_uniform
        if anchors is None:
            anchors = np.array([params.center], dtype=complex)
        anchors = np.asarray(anchors, dtype=complex)
        c = anchors[np.minimum((u[:, 4] * anchors.size).astype(np.int64), anchors.size - 1)]
        r_uni = np.sqrt(u[:, 2])
        r_ht = a * np.sqrt(u[:, 2] / np.maximum(1.0 - u[:, 2], 1e-300))
        ang = 2.0 * np.pi * u[:, 3]
        z = np.where(uni, r_uni * np.exp(1j * ang), c + r_ht * np.exp(1j * ang))
        kern = np.zeros(m)
        for ca in anchors:
            kern += a * a / (np.pi * (np.abs(z - ca) ** 2 + a * a) ** 2)
        q = (params.p_uniform / np.pi) * (np.abs(z) < 1.0) + (1.0 - params.p_uniform) * kern / anchors.size
        inside = np.abs(z) < 1.0
        w = np.where(inside, lr / (2.0 * np.pi * t * np.maximum(q, 1e-300)), 0.0)
        npts = np.array([bridge_points(tt, params) for tt in t], dtype=np.int64)
        zoff = np.concatenate(([0], np.cumsum(2 * npts)[:-1])).astype(np.int64)
        normals = rng.normals(int(2 * npts.sum()), block=1)
        return cls(z, t, w, npts, zoff, normals, t_min, params)

    def values(self, curves) -> np.ndarray:
        data = _pack(curves)
        delta = self.times / self.npts
        vals = np.zeros(self.times.size)
        live = self.weights > 0
        idx = np.nonzero(live)[0]
        if idx.size:
            v = _battery_values(self.roots[idx], self.times[idx], self.npts[idx], self.zoff[idx],
                                self.normals, delta[idx], *data)
            vals[idx] = v
        return self.weights * vals


def _pack(curves):
    pts_list = [np.ascontiguousarray(c, dtype=complex) for c in curves]
    offs = np.concatenate(([0], np.cumsum([p.size for p in pts_list]))).astype(np.int64)
    pts = np.concatenate(pts_list)
    los, his, boxes, sizes, noff = [], [], [], [], [0]
    for p in pts_list:
        lo, hi, box, size = _build_boxes(p)
        los.append(lo)
        his.append(hi)
        boxes.append(box)
        sizes.append(size)
        noff.append(noff[-1] + lo.size)
    return (pts, offs, np.concatenate(los), np.concatenate(his), np.vstack(boxes),
            np.array(sizes, dtype=np.int64), np.array(noff, dtype=np.int64))


def curve_distance(curves) -> float:
    """Smallest distance between two distinct polylines."""
    best = math.inf
    packed = [(np.ascontiguousarray(c, dtype=complex),) + _build_boxes(np.ascontiguousarray(c, dtype=complex))
              for c in curves]
    for i in range(len(packed)):
        for j in range(len(packed)):
            if i == j:
                continue
            p = packed[i][0]
            q, lo, hi, box, size = packed[j]
            for z in p:
                best = min(best, _dist(z.real, z.imag, q, lo, hi, box, size, best))
    return best


def _anchors(curves, params: LoopParams):
    if params.proposal == "center":
        return None
    if params.proposal != "curves":
        raise ValueError(f"unknown root proposal {params.proposal!r}")
    pts = np.concatenate([np.asarray(c, dtype=complex) for c in curves])
    if pts.size > params.max_anchors:
        pts = pts[np.linspace(0, pts.size - 1, params.max_anchors).astype(np.int64)]
    return pts


def _cutoff_bias(delta: float, t_min: float) -> float:
    """Gaussian-tail bound on the mass of loops shorter than ``t_min`` that
    still reach across a gap ``delta``."""
    return (1.0 / (2.0 * math.pi)) * 4.0 * (2.0 / delta**2) * math.exp(-delta**2 / (2.0 * t_min)) * math.pi


def _local_scale(curves, delta: float) -> float:
    from scipy.spatial import cKDTree

    scale = 0.0
    for j, c in enumerate(curves):
        if c.size < 2:
            continue
        rest = np.concatenate([x for i, x in enumerate(curves) if i != j])
        d, _ = cKDTree(np.column_stack((rest.real, rest.imag))).query(np.column_stack((c.real, c.imag)))
        near = d <= 3.0 * delta
        seg = np.abs(np.diff(c))[near[1:] | near[:-1]]
        if seg.size:
            scale = max(scale, float(seg.max()))
    return scale


def estimate_loop_term(curves, params: LoopParams | None = None, battery: LoopBattery | None = None,
                       discretization_scale: float | None = None) -> LoopEstimate:
    """Monte Carlo estimate of ``L`` for sampled curves (``bridge_mc``).

    ``discretization_scale`` defaults to the longest sample segment with an
    endpoint within ``3 delta`` of another curve, where ``delta`` is the
    curve separation. Configurations closer than four times it are refused.
    """
    params = params or LoopParams()
    curves = [np.asarray(c, dtype=complex) for c in curves]
    n = len(curves)
    h = config_hash(curves)
    if n < 2:
        t_min = params.t_min or 0.0
        return LoopEstimate(0.0, 0.0, 0, t_min, "bridge_mc", params.t_max, 0.0, config_hash=h)
    delta = curve_distance(curves)
    scale = _local_scale(curves, delta) if discretization_scale is None else discretization_scale
    if delta < 4.0 * scale:
        raise ValueError(f"curves are {delta:.3g} apart, below four discretization scales ({scale:.3g})")
    t_min = params.t_min if params.t_min is not None else (delta / 6.0) ** 2
    if battery is None:
        battery = LoopBattery.draw(t_min, params, _anchors(curves, params))
    vals = battery.values(curves)
    m = vals.size
    return LoopEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(m)), m, battery.t_min,
                        "bridge_mc", params.t_max, _cutoff_bias(delta, battery.t_min), config_hash=h)


# -- lattice oracle -------------------------------------------------------------------


def _lattice_sets(curves, h, shift=(0.0, 0.0)):
    """Disk sites of ``h (Z^2 + shift)`` and, per curve, the sites whose
    closed cell meets the curve."""
    sx, sy = shift
    m = int(math.floor(1.0 / h)) + 1
    ii, jj = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
    inside = ((ii + sx) * h) ** 2 + ((jj + sy) * h) ** 2 < 1.0
    index = -np.ones(ii.shape, dtype=np.int64)
    index[inside] = np.arange(int(inside.sum()))
    sets = []
    for c in curves:
        c = np.asarray(c, dtype=complex)
        # densify so that consecutive samples are < h/4 apart
        seg = np.abs(np.diff(c))
        reps = np.maximum(1, np.ceil(seg / (0.25 * h)).astype(int))
        dense = np.concatenate([c[k] + (c[k + 1] - c[k]) * np.arange(r) / r for k, r in enumerate(reps)]
                               + [c[-1:]])
        sites = set()
        for z in dense:
            x, y = z.real / h - sx, z.imag / h - sy
            for a in (math.floor(x - 0.5 + 1e-12), math.ceil(x - 0.5)):
                for b in (math.floor(y - 0.5 + 1e-12), math.ceil(y - 0.5)):
                    for ca in (a, a + 1):
                        for cb in (b, b + 1):
                            if abs(ca - x) <= 0.5 and abs(cb - y) <= 0.5:
                                if -m <= ca <= m and -m <= cb <= m and inside[ca + m, cb + m]:
                                    sites.add(int(index[ca + m, cb + m]))
        sets.append(np.array(sorted(sites), dtype=np.int64))
    return ii, jj, inside, index, sets


def lattice_loop_mass(curves, h: float, shift=(0.0, 0.0)) -> float:
    """Random-walk loop mass ``sum_j log det G[A_j] - log det G[union A]``.

    ``G`` is the Green's function of simple random walk on ``h Z^2`` killed
    on leaving the disk. This equals the inclusion-exclusion combination of
    ``-log det(I - P_U)`` over the complements ``U`` of the hit sets.
    """
    import scipy.sparse as sp
    from scipy.sparse.linalg import splu

    curves = [np.asarray(c, dtype=complex) for c in curves]
    if len(curves) < 2:
        return 0.0
    ii, jj, inside, index, sets = _lattice_sets(curves, h, shift)
    nsite = int(inside.sum())
    rows, cols = [], []
    m = ii.shape[0]
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        src = index[max(0, -di): m - max(0, di), max(0, -dj): m - max(0, dj)]
        dst = index[max(0, di): m - max(0, -di) if di < 0 else m, max(0, dj): m - max(0, -dj) if dj < 0 else m]
        ok = (src >= 0) & (dst >= 0)
        rows.append(src[ok])
        cols.append(dst[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    P = sp.csc_matrix((np.full(rows.size, 0.25), (rows, cols)), shape=(nsite, nsite))
    A = (sp.identity(nsite, format="csc") - P).tocsc()
    lu = splu(A)
    allsites = np.concatenate(sets)
    if np.unique(allsites).size != allsites.size:
        raise ValueError("curves share lattice sites; refine the mesh")
    rhs = np.zeros((nsite, allsites.size))
    rhs[allsites, np.arange(allsites.size)] = 1.0
    G = lu.solve(rhs)[allsites]
    G = 0.5 * (G + G.T)
    tot = 0.0
    start = 0
    for s in sets:
        blk = G[start: start + s.size, start: start + s.size]
        sign, ld = np.linalg.slogdet(blk)
        if sign <= 0:
            raise np.linalg.LinAlgError("Green's function block is not positive definite")
        tot += ld
        start += s.size
    sign, ld = np.linalg.slogdet(G)
    if sign <= 0:
        raise np.linalg.LinAlgError("Green's function block is not positive definite")
    return float(tot - ld)


def lattice_loop_oracle(curves, mesh: float, shifts: int = 4, seed: int = 0) -> LoopEstimate:
    """Lattice estimate extrapolated from meshes ``mesh, mesh/2, mesh/4``.

    Each level averages over ``shifts`` random translations of the lattice,
    which smooths the jitter caused by sites entering and leaving the hit
    sets. Assuming an error linear in ``h``, Richardson values are formed
    from consecutive pairs; the finer one is returned. Its error combines
    the shift sampling error with the gap between the two Richardson values.
    """
    curves = [np.asarray(c, dtype=complex) for c in curves]
    h = config_hash(curves)
    if len(curves) < 2:
        return LoopEstimate(0.0, 0.0, 0, 0.0, "lattice_det", mesh=(mesh,), config_hash=h)
    delta = curve_distance(curves)
    if mesh > delta / 8.0:
        raise ValueError(f"mesh {mesh:.3g} does not resolve the curve separation {delta:.3g}")
    hs = (mesh, mesh / 2.0, mesh / 4.0)
    u = SeededRng(seed, 9_000_000).uniforms(2 * shifts * len(hs)).reshape(len(hs), shifts, 2)
    mean, var = [], []
    for lvl, x in enumerate(hs):
        v = np.array([lattice_loop_mass(curves, x, tuple(u[lvl, k])) for k in range(shifts)])
        mean.append(float(v.mean()))
        var.append(float(v.var(ddof=1) / shifts) if shifts > 1 else 0.0)
    r1 = 2.0 * mean[1] - mean[0]
    r2 = 2.0 * mean[2] - mean[1]
    err = math.sqrt(4.0 * var[2] + var[1] + (r2 - r1) ** 2)
    return LoopEstimate(r2, err, 0, 0.0, "lattice_det", 0.0, 0.0, mesh=hs,
                        levels=tuple(mean), config_hash=h)


# -- slope ---------------------------------------------------------------------------


def radial_rays(n: int, T: float, offset: float = 0.0, samples: int = 400):
    """Straight rays of the equally spaced constant-driver evolution.

    For ``n`` symmetric rays, ``z -> z^n`` maps the hull to one radial slit
    of capacity ``n^2 T``, so the tip radius is ``x(n^2 T)^(1/n)``.
    """
    from ._kernels import tip_radius

    r = tip_radius(n * n * T) ** (1.0 / n)
    # geometric spacing resolves the ray near its tip
    rad = np.geomspace(1.0, r, samples)
    return [rad * np.exp(1j * (offset + 2.0 * np.pi * j / n)) for j in range(n)]


def slope_experiment(n: int, T_grid, dt: float | None = None, params: LoopParams | None = None,
                     curves_at=None) -> dict:
    """Fit ``L(T)`` against ``T`` over the upper half of ``T_grid``.

    The curves default to the equally spaced zero-energy multichord (static
    rays). One loop battery is shared across the grid, so the fitted slope
    benefits from common random numbers; its standard error comes from the
    per-loop slope contributions.
    """
    params = params or LoopParams()
    T_grid = np.sort(np.asarray(T_grid, dtype=float))
    curves_at = curves_at or (lambda T: radial_rays(n, T))
    cs = [curves_at(T) for T in T_grid]
    delta = min(curve_distance(c) for c in cs)
    t_min = params.t_min if params.t_min is not None else (delta / 6.0) ** 2
    battery = LoopBattery.draw(t_min, params)
    vals = np.array([battery.values(c) for c in cs])
    L = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / math.sqrt(vals.shape[1])
    half = T_grid >= np.median(T_grid)
    x = T_grid[half]
    xc = x - x.mean()
    coef = xc / np.sum(xc * xc)
    per_loop = coef @ vals[half]
    slope = float(per_loop.mean())
    stderr = float(per_loop.std(ddof=1) / math.sqrt(per_loop.size))
    return {"n": n, "T": T_grid.tolist(), "L": L.tolist(), "L_stderr": se.tolist(),
            "slope": slope, "stderr": stderr, "reference": (n + 4) * (n - 1) * n / 24.0,
            "t_min": t_min, "n_samples": int(vals.shape[1])}
