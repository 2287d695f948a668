"""Compiled kernels for elementary radial slit maps.

Every discrete Loewner computation in the package is a composition of the
explicit maps that grow or remove a single radial slit. With the normalization
``dg = g (e + g) / (e - g) dt`` a slit of capacity ``tau`` at angle ``alpha``
is mapped out by ``g(z) = k^{-1}(exp(tau) k(z))`` after rotating ``alpha`` to
``0``, where ``k(z) = z / (1 + z)**2``. The inverse uses ``exp(-tau)``.

All functions here take ``exp(+-tau)`` and ``exp(i alpha)`` precomputed.
"""

import math

import numpy as np
from numba import njit

__all__ = [
    "slit_apply",
    "slit_apply_deriv",
    "tip_radius",
    "capacity_from_radius",
    "boundary_forward",
    "boundary_inverse",
    "trace_tips",
    "compose_inverse",
    "compose_forward",
    "compose_forward_deriv",
    "unzip_points",
    "compose_inverse_deriv",
    "wrap_angle",
    "boundary_chain",
    "interior_chain",
    "relative_derivative_series",
    "push_images",
]


@njit(cache=True, fastmath=False)
def slit_apply(u, scale):
    """Solve ``k(F) = scale * k(u)`` for the root with ``|F| <= 1``.

    ``scale = exp(-tau)`` gives the inverse (slit-growing) map and
    ``scale = exp(tau)`` the forward (slit-removing) map, both for a slit
    based at ``1``.
    """
    a = 1.0 + u
    r = np.sqrt(a * a - 4.0 * scale * u)
    if (a.real * r.real + a.imag * r.imag) < 0.0:
        r = -r
    return (a - r) / (a + r)


@njit(cache=True, fastmath=False)
def slit_apply_deriv(u, scale):
    a = 1.0 + u
    r = np.sqrt(a * a - 4.0 * scale * u)
    if (a.real * r.real + a.imag * r.imag) < 0.0:
        r = -r
    s = a + r
    val = (a - r) / s
    der = 4.0 * scale * (1.0 - u) / (r * s * s)
    return val, der


@njit(cache=True)
def tip_radius(tau):
    """Distance from 0 to the tip of a radial slit of capacity ``tau``."""
    q = math.sqrt(-math.expm1(-tau))
    return (1.0 - q) / (1.0 + q)


@njit(cache=True)
def capacity_from_radius(r):
    """Inverse of :func:`tip_radius`."""
    return math.log1p((1.0 - r) * (1.0 - r) / (4.0 * r))


@njit(cache=True)
def boundary_forward(x, tau):
    """Image angle and derivative of boundary angle ``x`` (relative to the
    slit base, in ``(-pi, pi]``) under the map removing a slit of capacity
    ``tau``. ``x == 0`` is treated as the ``+`` prime end."""
    c = math.exp(-0.5 * tau)
    hx = 0.5 * x
    sx = math.sin(hx)
    cx = math.cos(hx)
    cy = c * cx
    sy = math.sqrt(-math.expm1(-tau) + c * c * sx * sx)
    y = 2.0 * math.atan2(sy, cy)
    if x < 0.0:
        y = -y
    if sy > 0.0:
        d = c * abs(sx) / sy
    else:
        d = 1.0
    return y, d


@njit(cache=True)
def boundary_inverse(y, tau):
    """Pre-image angle under :func:`boundary_forward`; ``nan`` when ``y``
    lies on the image of the slit itself."""
    c = math.exp(0.5 * tau)
    v = c * math.cos(0.5 * y)
    if v > 1.0:
        return math.nan
    x = 2.0 * math.acos(v)
    if y < 0.0:
        x = -x
    return x


@njit(cache=True, fastmath=True)
def _slit_real(ur, ui, scale):
    """:func:`slit_apply` in real arithmetic; the hot loop of every
    composition."""
    ar = 1.0 + ur
    ai = ui
    qr = ar * ar - ai * ai - 4.0 * scale * ur
    qi = 2.0 * ar * ai - 4.0 * scale * ui
    m = math.sqrt(qr * qr + qi * qi)
    rr = math.sqrt(max(0.5 * (m + qr), 0.0))
    ri = math.sqrt(max(0.5 * (m - qr), 0.0))
    if qi < 0.0:
        ri = -ri
    if ar * rr + ai * ri < 0.0:
        rr = -rr
        ri = -ri
    nr = ar - rr
    ni = ai - ri
    dr = ar + rr
    di = ai + ri
    den = dr * dr + di * di
    return (nr * dr + ni * di) / den, (ni * dr - nr * di) / den


@njit(cache=True, fastmath=True)
def compose_inverse(w, eia, emt, upto):
    """Apply the inverse elementary maps ``upto-1, ..., 0`` to ``w``."""
    wr = w.real
    wi = w.imag
    for m in range(upto - 1, -1, -1):
        cr = eia[m].real
        ci = eia[m].imag
        vr, vi = _slit_real(wr * cr + wi * ci, wi * cr - wr * ci, emt[m])
        wr = vr * cr - vi * ci
        wi = vr * ci + vi * cr
    return complex(wr, wi)


@njit(cache=True, fastmath=True)
def compose_forward(z, eia, ept, start, stop):
    """Apply forward elementary maps ``start, ..., stop-1`` to ``z``."""
    zr = z.real
    zi = z.imag
    for m in range(start, stop):
        cr = eia[m].real
        ci = eia[m].imag
        vr, vi = _slit_real(zr * cr + zi * ci, zi * cr - zr * ci, ept[m])
        zr = vr * cr - vi * ci
        zi = vr * ci + vi * cr
    return complex(zr, zi)


@njit(cache=True)
def compose_forward_deriv(z, eia, ept, start, stop):
    d = 1.0 + 0.0j
    for m in range(start, stop):
        e = eia[m]
        v, dv = slit_apply_deriv(z / e, ept[m])
        z = e * v
        d = d * dv
    return z, d


@njit(cache=True, fastmath=True)
def _pull_back4(w, top, eia, emt):
    """Four independent :func:`compose_inverse` chains run side by side.

    Each pull-back is a serial chain of square roots and divisions, so
    interleaving independent chains hides most of their latency.
    """
    ar, ai = w[0].real, w[0].imag
    br, bi = w[1].real, w[1].imag
    cr_, ci_ = w[2].real, w[2].imag
    dr, di = w[3].real, w[3].imag
    lo = min(min(top[0], top[1]), min(top[2], top[3]))
    hi = max(max(top[0], top[1]), max(top[2], top[3]))
    for m in range(hi - 1, lo - 1, -1):
        cr = eia[m].real
        ci = eia[m].imag
        s = emt[m]
        if m < top[0]:
            vr, vi = _slit_real(ar * cr + ai * ci, ai * cr - ar * ci, s)
            ar, ai = vr * cr - vi * ci, vr * ci + vi * cr
        if m < top[1]:
            vr, vi = _slit_real(br * cr + bi * ci, bi * cr - br * ci, s)
            br, bi = vr * cr - vi * ci, vr * ci + vi * cr
        if m < top[2]:
            vr, vi = _slit_real(cr_ * cr + ci_ * ci, ci_ * cr - cr_ * ci, s)
            cr_, ci_ = vr * cr - vi * ci, vr * ci + vi * cr
        if m < top[3]:
            vr, vi = _slit_real(dr * cr + di * ci, di * cr - dr * ci, s)
            dr, di = vr * cr - vi * ci, vr * ci + vi * cr
    for m in range(lo - 1, -1, -1):
        cr = eia[m].real
        ci = eia[m].imag
        s = emt[m]
        vr, vi = _slit_real(ar * cr + ai * ci, ai * cr - ar * ci, s)
        ar, ai = vr * cr - vi * ci, vr * ci + vi * cr
        vr, vi = _slit_real(br * cr + bi * ci, bi * cr - br * ci, s)
        br, bi = vr * cr - vi * ci, vr * ci + vi * cr
        vr, vi = _slit_real(cr_ * cr + ci_ * ci, ci_ * cr - cr_ * ci, s)
        cr_, ci_ = vr * cr - vi * ci, vr * ci + vi * cr
        vr, vi = _slit_real(dr * cr + di * ci, di * cr - dr * ci, s)
        dr, di = vr * cr - vi * ci, vr * ci + vi * cr
    w[0] = complex(ar, ai)
    w[1] = complex(br, bi)
    w[2] = complex(cr_, ci_)
    w[3] = complex(dr, di)


@njit(cache=True)
def trace_tips(eia, emt, tip_r, slit_of_tip, stop_r):
    """Pull back elementary slit tips.

    ``slit_of_tip[k, j]`` is the index of the elementary slit carrying curve
    ``j``'s tip after step ``k``; the tip is mapped back through every
    earlier slit. Cost is quadratic in the number of slits. Once every curve
    has come within ``stop_r`` of the origin the remaining rows are skipped;
    the number of computed rows is returned.
    """
    steps, n = slit_of_tip.shape
    out = np.empty((steps, n), dtype=np.complex128)
    reached = np.zeros(n, dtype=np.bool_)
    total = steps * n
    w = np.empty(4, dtype=np.complex128)
    top = np.empty(4, dtype=np.int64)
    row = 0
    p = 0
    while p < total:
        b = min(4, total - p)
        for q in range(4):
            # short batches repeat their last tip
            t = p + min(q, b - 1)
            m = slit_of_tip[t // n, t % n]
            w[q] = eia[m] * tip_r[m]
            top[q] = m
        _pull_back4(w, top, eia, emt)
        for q in range(b):
            t = p + q
            out[t // n, t % n] = w[q]
        p += b
        while row < steps and (row + 1) * n <= p:
            for j in range(n):
                if abs(out[row, j]) < stop_r:
                    reached[j] = True
            row += 1
            if reached.all():
                return out, row
    return out, steps


@njit(cache=True)
def unzip_points(points):
    """Sequentially map out a polyline starting on the unit circle.

    ``points[0]`` must lie on the circle. Returns the angle and capacity of
    each fitted radial slit (``len(points) - 1`` of each) and the index of
    the first point that could not be fitted (``-1`` when all succeeded).
    """
    npts = points.shape[0]
    m = npts - 1
    alpha = np.empty(m)
    tau = np.empty(m)
    eia = np.empty(m, dtype=np.complex128)
    ept = np.empty(m)
    bad = -1
    for k in range(m):
        z = points[k + 1]
        z = compose_forward(z, eia, ept, 0, k)
        r = abs(z)
        if not (r < 1.0) or r == 0.0 or not np.isfinite(r):
            bad = k + 1
            return alpha[:k], tau[:k], bad
        a = math.atan2(z.imag, z.real)
        t = capacity_from_radius(r)
        alpha[k] = a
        tau[k] = t
        eia[k] = z / r
        ept[k] = math.exp(t)
    return alpha, tau, bad


@njit(cache=True)
def compose_inverse_deriv(w, eia, emt, upto):
    d = 1.0 + 0.0j
    for m in range(upto - 1, -1, -1):
        e = eia[m]
        v, dv = slit_apply_deriv(w / e, emt[m])
        w = e * v
        d = d * dv
    return w, d


@njit(cache=True)
def wrap_angle(x):
    """Reduce to ``(-pi, pi]``."""
    y = x + math.pi
    y -= 2.0 * math.pi * math.floor(y / (2.0 * math.pi))
    if y <= 0.0:
        y += 2.0 * math.pi
    return y - math.pi


@njit(cache=True)
def boundary_chain(x0, alpha, tau, per_step, swallow_gap, drivers):
    """Push boundary angles through a slit list, recording after each step.

    ``per_step`` slits make one step. ``drivers[k]`` holds the driver angles
    at the end of step ``k``; a point closer than ``swallow_gap`` to one of
    them, or one that a driver crossed during the step, is frozen and
    flagged with the step index. A negative ``swallow_gap`` disables both.
    """
    npts = x0.shape[0]
    nslit = alpha.shape[0]
    nsteps = nslit // per_step
    h = np.empty((nsteps + 1, npts))
    hp = np.empty((nsteps + 1, npts))
    swallowed = np.full(npts, -1, dtype=np.int64)
    for p in range(npts):
        x = x0[p]
        d = 1.0
        h[0, p] = x
        hp[0, p] = 1.0
        for k in range(nsteps):
            if swallowed[p] < 0:
                for m in range(k * per_step, (k + 1) * per_step):
                    rel = wrap_angle(x - alpha[m])
                    y, dd = boundary_forward(rel, tau[m])
                    x = x + (y - rel)
                    d = d * dd
                for j in range(drivers.shape[1]):
                    after = wrap_angle(x - drivers[k + 1, j])
                    if abs(after) < swallow_gap:
                        swallowed[p] = k + 1
                    elif swallow_gap > 0.0:
                        # a driver that jumps over a nearby point has swallowed it
                        before = wrap_angle(h[k, p] - drivers[k, j])
                        if before * after < 0.0 and abs(before) < 0.5 and abs(after) < 0.5:
                            swallowed[p] = k + 1
            h[k + 1, p] = x
            hp[k + 1, p] = d
    return h, hp, swallowed


@njit(cache=True)
def interior_chain(z0, eia, ept, per_step):
    npts = z0.shape[0]
    nslit = eia.shape[0]
    nsteps = nslit // per_step
    out = np.empty((nsteps + 1, npts), dtype=np.complex128)
    swallowed = np.full(npts, -1, dtype=np.int64)
    for p in range(npts):
        z = z0[p]
        out[0, p] = z
        for k in range(nsteps):
            if swallowed[p] < 0:
                z = compose_forward(z, eia, ept, k * per_step, (k + 1) * per_step)
                if abs(z) >= 1.0 - 1e-12:
                    swallowed[p] = k + 1
            out[k + 1, p] = z
    return out


@njit(cache=True)
def relative_log_derivative(z, eia_all, emt_all, upto, eia_j, ept_j, upto_j):
    """``Re[z F'(z) / F(z)]`` for ``F = g^j o g_t^{-1}``.

    ``g_t^{-1}`` is the inverse chain truncated at ``upto`` and ``g^j`` the
    forward chain of one curve truncated at ``upto_j``.
    """
    w, d1 = compose_inverse_deriv(z, eia_all, emt_all, upto)
    f, d2 = compose_forward_deriv(w, eia_j, ept_j, 0, upto_j)
    return (z * d1 * d2 / f).real


@njit(cache=True)
def relative_derivative_series(theta, eia_all, emt_all, per_step, slit_pos,
                               eia_j, ept_j, eta):
    """Boundary derivative of ``g^j o g_t^{-1}`` at the driver for each step.

    Evaluated on the radius ``1 - eta`` and ``1 - 2 eta`` and combined by
    Richardson extrapolation. ``slit_pos[k]`` is the number of slits of the
    curve's own chain that describe it up to step ``k``.
    """
    nsteps = theta.shape[0]
    out = np.empty(nsteps)
    for k in range(nsteps):
        upto = k * per_step
        e = np.exp(1j * theta[k])
        a = relative_log_derivative((1.0 - eta) * e, eia_all, emt_all, upto,
                                    eia_j, ept_j, slit_pos[k])
        b = relative_log_derivative((1.0 - 2.0 * eta) * e, eia_all, emt_all, upto,
                                    eia_j, ept_j, slit_pos[k])
        out[k] = 2.0 * a - b
    return out


@njit(cache=True)
def push_images(img, start, eia, ept):
    """Apply one forward slit to ``img[start:]`` in place."""
    for i in range(start, img.shape[0]):
        e = eia
        img[i] = e * slit_apply(img[i] / e, ept)
