"""Compiled per-cell kernels for the finite-volume solver.

These are scalar transcriptions of :mod:`bnrelax.eos` and
:mod:`bnrelax.relaxation` (the numpy versions stay the reference; the test
suite checks that both agree) plus the MUSCL-Hancock sweep. Everything works
on a ``(7, n)`` conserved array with two ghost cells per side.

EOS constants travel as one float array
``eos = [gamma1, pi1, ka1, kb1, gamma2, pi2, ka2, kb2]``.
"""

import math

import numpy as np
from numba import njit as _njit


def njit(cache=True, inline="never"):
    # numpy error model: float division by zero yields inf/nan, which the
    # admissibility checks catch, instead of a branch on every division
    return _njit(cache=cache, error_model="numpy", inline=inline)

# exponential divided differences ----------------------------------------

_SERIES_SPREAD = 0.2
_SERIES_TERMS = 14


@njit(cache=True, inline="always")
def psi1(x):
    if x > 40.0:
        return 1.0 / x  # expm1(-x) is exactly -1 here
    if x > 0.0:
        return -math.expm1(-x) / x
    return 1.0


@njit(cache=True, inline="always")
def dd1(x, y):
    top = max(x, y)
    scale = 1.0 if top == 0.0 else math.exp(top)
    return scale * psi1(abs(x - y))


@njit(cache=True, inline="always")
def dd2(x, y, z):
    # sort by comparison; x + y + z - min - max cancels when one node is huge
    if x > y:
        x, y = y, x
    if y > z:
        y, z = z, y
    if x > y:
        x, y = y, x
    n0 = x
    n1 = y
    n2 = z
    spread = n2 - n0
    if spread > _SERIES_SPREAD:
        return (dd1(n1, n2) - dd1(n0, n1)) / spread
    c = (n0 + n1 + n2) / 3.0
    d0 = n0 - c
    d1_ = n1 - c
    d2 = n2 - c
    e1 = d0 + d1_ + d2
    e2 = d0 * d1_ + d0 * d2 + d1_ * d2
    e3 = d0 * d1_ * d2
    hm3 = 0.0
    hm2 = 0.0
    hm1 = 1.0
    total = 0.5
    fact = 2.0
    for j in range(1, _SERIES_TERMS):
        h = e1 * hm1 - e2 * hm2 + e3 * hm3
        fact *= j + 2
        total += h / fact
        hm3 = hm2
        hm2 = hm1
        hm1 = h
    return math.exp(c) * total


# thermodynamics -------------------------------------------------------------


@njit(cache=True, inline="always")
def decode_vec(m1, m2, mom1, mom2, en1, en2, a1, w, eos):
    """Primitive ``[a1, r1, r2, u1, u2, p1, p2]`` into ``w``.

    Returns False when the state is not admissible, including
    ``p + Pi <= 0`` where the sound speed is undefined.
    """
    if not (m1 > 0.0 and m2 > 0.0 and a1 > 0.0 and a1 < 1.0):
        return False
    a2 = 1.0 - a1
    u1 = mom1 / m1
    u2 = mom2 / m2
    re1 = (en1 - 0.5 * mom1 * u1) / a1
    re2 = (en2 - 0.5 * mom2 * u2) / a2
    p1 = (re1 - eos[3]) / eos[2]
    p2 = (re2 - eos[7]) / eos[6]
    w[0] = a1
    w[1] = m1 / a1
    w[2] = m2 / a2
    w[3] = u1
    w[4] = u2
    w[5] = p1
    w[6] = p2
    # NaN fails every comparison and an infinite velocity drives re to -inf or
    # NaN, so bounding p from both sides also rules out non-finite entries
    return re1 > 0.0 and re2 > 0.0 and -eos[1] < p1 < math.inf and -eos[5] < p2 < math.inf


@njit(cache=True, inline="always")
def encode(w, q, eos):
    """Conserved vector of primitive ``w`` into the 7-array ``q``."""
    a1 = w[0]
    a2 = 1.0 - a1
    m1 = a1 * w[1]
    m2 = a2 * w[2]
    q[0] = m1
    q[1] = m2
    q[2] = m1 * w[3]
    q[3] = m2 * w[4]
    q[4] = 0.5 * m1 * w[3] * w[3] + a1 * (eos[2] * w[5] + eos[3])
    q[5] = 0.5 * m2 * w[4] * w[4] + a2 * (eos[6] * w[6] + eos[7])
    q[6] = a1


@njit(cache=True, inline="always")
def interface_pu(rho1, rho2, u1, u2, p1, p2, eos, closure, velocity):
    """``(pI, w1)`` with ``uI = w1*u1 + (1-w1)*u2``.

    ``closure``: 0 simple, 1 impedance. ``velocity``: 0 u1, 1 u2, 2 impedance.
    """
    z1 = 0.0
    z2 = 0.0
    if closure == 1 or velocity == 2:
        z1 = math.sqrt(rho1 * eos[0] * (p1 + eos[1])) if p1 + eos[1] > 0.0 else math.nan
        z2 = math.sqrt(rho2 * eos[4] * (p2 + eos[5])) if p2 + eos[5] > 0.0 else math.nan
    if closure == 0:
        p_i = p2
    else:
        p_i = (z2 * p1 + z1 * p2) / (z1 + z2)
    if velocity == 0:
        w1 = 1.0
    elif velocity == 1:
        w1 = 0.0
    else:
        w1 = z1 / (z1 + z2)
    return p_i, w1


# relaxation -----------------------------------------------------------------

# indices into the float settings array of relax_cell
S_DELTA_MAX, S_EPS_DELTA, S_R_MAX, S_EPS_R, S_SAFETY, S_EPS_DT, S_GROWTH_CAP, S_DT_MIN = range(8)
# integer settings: k_max, coeff_set (0 operator, 1 full), linearisation (0 transient, 1 average)


@njit(cache=True, inline="always")
def _build(u1, u2, p1, p2, a1, m1, m2, eos, lam, nu, closure, velocity, op):
    """Fill ``op = [k_vel, kp1, kp2, ku1, ku2, w1]``."""
    a2 = 1.0 - a1
    rho1 = m1 / a1
    rho2 = m2 / a2
    p_i, w1 = interface_pu(rho1, rho2, u1, u2, p1, p2, eos, closure, velocity)
    op[0] = lam * (1.0 / m1 + 1.0 / m2)
    op[1] = nu * (p_i + eos[2] * p1 + eos[3]) / (a1 * eos[2])
    op[2] = nu * (p_i + eos[6] * p2 + eos[7]) / (a2 * eos[6])
    op[3] = lam / (a1 * eos[2])
    op[4] = lam / (a2 * eos[6])
    op[5] = w1
    return p_i


@njit(cache=True, inline="always")
def _exact(vn, op, m1, m2, nu, tau, out):
    k_vel = op[0]
    kp1 = op[1]
    kp2 = op[2]
    d0 = vn[0] - vn[1]
    decay = math.expm1(-k_vel * tau)
    msum = m1 + m2
    out[0] = vn[0] + (m2 / msum) * d0 * decay
    out[1] = vn[1] - (m1 / msum) * d0 * decay
    d0sq = d0 * d0
    g1 = op[3] * (1.0 - op[5]) * d0sq
    g2 = op[4] * op[5] * d0sq
    x_k = -(kp1 + kp2) * tau
    x_2 = -2.0 * k_vel * tau
    dp0 = vn[2] - vn[3]
    forced = tau * dd1(x_2, 0.0)
    int_dp = dp0 * tau * dd1(x_k, 0.0) + (g1 - g2) * tau * tau * dd2(x_k, x_2, 0.0)
    out[2] = vn[2] + g1 * forced - kp1 * int_dp
    out[3] = vn[3] + g2 * forced + kp2 * int_dp
    out[4] = vn[4] + nu * int_dp


@njit(cache=True, inline="always")
def _forcing_centroid(k_vel, dt):
    a = 2.0 * k_vel * dt
    return dd2(-a, -a, 0.0) / dd1(-a, 0.0)


@njit(cache=True, inline="always")
def _linearise(vn, vend, m1, m2, eos, lam, nu, closure, velocity, dt, theta, mode, op, vmid, tmp):
    for j in range(5):
        vmid[j] = 0.5 * (vn[j] + vend[j])
    if mode == 1:
        _build(vmid[0], vmid[1], vmid[2], vmid[3], vmid[4], m1, m2, eos, lam, nu, closure, velocity, op)
        return
    for j in range(5):
        tmp[j] = vn[j] + theta * (vend[j] - vn[j])
    _build(tmp[0], tmp[1], tmp[2], tmp[3], tmp[4], m1, m2, eos, lam, nu, closure, velocity, op)
    ku1 = op[3]
    ku2 = op[4]
    w1 = op[5]
    d0 = vn[0] - vn[1]
    heat = 0.5 * (1.0 - 2.0 * theta) * dt * dd1(-2.0 * op[0] * dt, 0.0)
    vmid[2] += ku1 * (1.0 - w1) * d0 * d0 * heat
    vmid[3] += ku2 * w1 * d0 * d0 * heat
    _build(vmid[0], vmid[1], vmid[2], vmid[3], vmid[4], m1, m2, eos, lam, nu, closure, velocity, op)
    op[3] = ku1
    op[4] = ku2
    op[5] = w1


@njit(cache=True, inline="always")
def _coeffs(op, v, eos, lam, nu, m1, m2, coeff_set, c):
    """Coefficient vector into ``c``; returns its length."""
    c[0] = op[1]
    c[1] = op[2]
    if coeff_set == 0:
        c[2] = op[3]
        c[3] = op[4]
        return 4
    u1 = v[0]
    u2 = v[1]
    w1 = op[5]
    u_i = w1 * u1 + (1.0 - w1) * u2
    du = u2 - u1
    c[2] = op[3] * (u_i - u1)
    c[3] = op[4] * (u_i - u2)
    c[4] = lam / m1 * du
    c[5] = -lam / m2 * du
    c[6] = op[1] * (v[3] - v[2]) + op[3] * (1.0 - w1) * du * du
    c[7] = op[2] * (v[2] - v[3]) + op[4] * w1 * du * du
    c[8] = nu * (v[2] - v[3])
    return 9


@njit(cache=True, inline="always")
def _admissible(v, eos):
    for j in range(5):
        if not math.isfinite(v[j]):
            return 2
    if not (v[2] + eos[0] * eos[1] > 0.0 and v[3] + eos[4] * eos[5] > 0.0 and v[4] > 0.0 and v[4] < 1.0):
        return 1
    return 0


@njit(cache=True, inline="always")
def _rel(a, b, floor, n):
    worst = 0.0
    for j in range(n):
        num = abs(a[j] - b[j])
        den = abs(a[j]) + abs(b[j]) + floor
        if num == 0.0:
            continue
        r = num / den
        if not r <= worst:
            worst = r
    return worst


def relax_workspace():
    return np.empty((9, 9))


@njit(cache=True)
def relax_cell(v, m1, m2, eos, lam, nu, closure, velocity, span, dt0, fs, k_max, coeff_set, mode, stats, work):
    """Adaptive march of one cell over ``span``; ``v`` is updated in place.

    ``stats = [accepted, rejected, iterations]`` is incremented and ``work``
    is a ``(9, 9)`` scratch array (see :func:`relax_workspace`). Returns 0 on
    success, otherwise ``10 + reason code`` of the step that hit ``dt_min``.
    """
    if v[0] == v[1] and v[2] == v[3]:
        return 0  # exact equilibrium is a fixed point
    op = work[0]
    vmid = work[1]
    tmp = work[2]
    prev = work[3]
    cand = work[4]
    c_n = work[5]
    c_mid = work[6]
    c_end = work[7]
    cm = work[8]
    _build(v[0], v[1], v[2], v[3], v[4], m1, m2, eos, lam, nu, closure, velocity, op)
    nc = _coeffs(op, v, eos, lam, nu, m1, m2, coeff_set, c_n)
    k_vel = lam * (1.0 / m1 + 1.0 / m2)
    t = 0.0
    dt = dt0
    while t < span:
        remaining = span - t
        last = dt >= remaining
        h = remaining if last else dt
        theta = _forcing_centroid(k_vel, h)
        for j in range(5):
            prev[j] = v[j]
        code = 3
        its = k_max
        for k in range(1, k_max + 1):
            _linearise(v, prev, m1, m2, eos, lam, nu, closure, velocity, h, theta, mode, op, vmid, tmp)
            _coeffs(op, vmid, eos, lam, nu, m1, m2, coeff_set, cm)
            _exact(v, op, m1, m2, nu, h, cand)
            bad = _admissible(cand, eos)
            if bad == 0:
                for j in range(nc):
                    if not math.isfinite(cm[j]):
                        bad = 2
            if bad != 0:
                code = bad
                its = k
                break
            r = _rel(cand, prev, fs[S_EPS_R], 5)
            for j in range(5):
                prev[j] = cand[j]
            if r <= fs[S_R_MAX]:
                code = 0
                its = k
                for j in range(nc):
                    c_mid[j] = cm[j]
                break
        stats[2] += its
        delta = 0.0
        if code == 0:
            _build(cand[0], cand[1], cand[2], cand[3], cand[4], m1, m2, eos, lam, nu, closure, velocity, op)
            _coeffs(op, cand, eos, lam, nu, m1, m2, coeff_set, c_end)
            for j in range(nc):
                if not math.isfinite(c_end[j]):
                    code = 2
            if code == 0:
                delta = max(_rel(c_mid, c_n, fs[S_EPS_DELTA], nc), _rel(c_end, c_n, fs[S_EPS_DELTA], nc))
                if delta > fs[S_DELTA_MAX]:
                    code = 4
        if code != 0:
            stats[1] += 1
            dt = 0.5 * h
            if dt < fs[S_DT_MIN]:
                return 10 + code
            continue
        stats[0] += 1
        for j in range(5):
            v[j] = cand[j]
        for j in range(nc):
            c_n[j] = c_end[j]
        t = span if last else t + h
        grown = h * fs[S_SAFETY] * fs[S_DELTA_MAX] / (delta + fs[S_EPS_DT])
        dt = min(grown, fs[S_GROWTH_CAP] * h)
    return 0


@njit(cache=True)
def relax_field(q, lo, hi, eos, lam, nu, closure, velocity, span, dt0, fs, k_max, coeff_set, mode, stats):
    """Relax columns ``lo..hi-1`` of ``q`` in place. Returns ``(status, cell)``."""
    v = np.empty(5)
    w = np.empty(7)
    work = np.empty((9, 9))
    for i in range(lo, hi):
        if not decode_vec(q[0, i], q[1, i], q[2, i], q[3, i], q[4, i], q[5, i], q[6, i], w, eos):
            return 1, i
        m1 = q[0, i]
        m2 = q[1, i]
        v[0] = w[3]
        v[1] = w[4]
        v[2] = w[5]
        v[3] = w[6]
        v[4] = w[0]
        status = relax_cell(v, m1, m2, eos, lam, nu, closure, velocity, span, dt0, fs, k_max,
                            coeff_set, mode, stats, work)
        if status != 0:
            return status, i
        a1 = v[4]
        a2 = 1.0 - a1
        q[2, i] = m1 * v[0]
        q[3, i] = m2 * v[1]
        q[4, i] = 0.5 * m1 * v[0] * v[0] + a1 * (eos[2] * v[2] + eos[3])
        q[5, i] = 0.5 * m2 * v[1] * v[1] + a2 * (eos[6] * v[3] + eos[7])
        q[6, i] = a1
    return 0, -1


# hyperbolic step ------------------------------------------------------------

_G_S = math.sqrt(15.0) / 10.0
_G_NODES = (0.5 - _G_S, 0.5, 0.5 + _G_S)
_G_WEIGHTS = (5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0)


@njit(cache=True, inline="always")
def flux(w, f):
    """Physical flux from primitive ``w`` into ``f``."""
    a1 = w[0]
    a2 = 1.0 - a1
    m1 = a1 * w[1]
    m2 = a2 * w[2]
    u1 = w[3]
    u2 = w[4]
    f[0] = m1 * u1
    f[1] = m2 * u2
    f[2] = m1 * u1 * u1 + a1 * w[5]
    f[3] = m2 * u2 * u2 + a2 * w[6]


@njit(cache=True, inline="always")
def flux_full(w, eos, f):
    flux(w, f)
    a1 = w[0]
    a2 = 1.0 - a1
    m1 = a1 * w[1]
    m2 = a2 * w[2]
    u1 = w[3]
    u2 = w[4]
    en1 = 0.5 * m1 * u1 * u1 + a1 * (eos[2] * w[5] + eos[3])
    en2 = 0.5 * m2 * u2 * u2 + a2 * (eos[6] * w[6] + eos[7])
    f[4] = u1 * (en1 + a1 * w[5])
    f[5] = u2 * (en2 + a2 * w[6])
    f[6] = 0.0


@njit(cache=True, inline="always")
def b_row(w, eos, closure, velocity, out, scale):
    """Accumulate ``scale * [0, 0, -pI, pI, -pI uI, pI uI, uI]`` into ``out``."""
    p_i, w1 = interface_pu(w[1], w[2], w[3], w[4], w[5], w[6], eos, closure, velocity)
    u_i = w1 * w[3] + (1.0 - w1) * w[4]
    out[2] -= scale * p_i
    out[3] += scale * p_i
    out[4] -= scale * p_i * u_i
    out[5] += scale * p_i * u_i
    out[6] += scale * u_i


@njit(cache=True, inline="always")
def path_integral(ql, qr, eos, closure, velocity, out, qs, ws):
    """``int_0^1 B(ql + s (qr - ql)) (qr - ql) ds`` by 3-point Gauss into ``out``.

    Returns False if a quadrature state cannot be decoded.
    """
    for j in range(7):
        out[j] = 0.0
    dal = qr[6] - ql[6]
    if dal == 0.0:
        return True
    for g in range(3):
        s = _G_NODES[g]
        for j in range(7):
            qs[j] = ql[j] + s * (qr[j] - ql[j])
        if not decode_vec(qs[0], qs[1], qs[2], qs[3], qs[4], qs[5], qs[6], ws, eos):
            return False
        b_row(ws, eos, closure, velocity, out, _G_WEIGHTS[g] * dal)
    return True


@njit(cache=True, inline="always")
def speed_bounds(w, eos):
    a1 = math.sqrt(eos[0] * (w[5] + eos[1]) / w[1])
    a2 = math.sqrt(eos[4] * (w[6] + eos[5]) / w[2])
    lo = min(w[3] - a1, w[4] - a2)
    hi = max(w[3] + a1, w[4] + a2)
    return lo, hi


@njit(cache=True, inline="always")
def riemann(ql, qr, wl, wr, eos, solver, closure, velocity, fhat, dm, dp, scratch):
    """Interface flux ``fhat`` and nonconservative shares ``dm``/``dp``.

    ``dm + dp`` equals the path integral of ``B``. ``solver``: 0 Rusanov,
    1 HLL, 2 HLLEM. Returns False if the path leaves the admissible set.
    """
    fl = scratch[0]
    fr = scratch[1]
    bdq = scratch[2]
    qs = scratch[3]
    ws = scratch[4]
    flux_full(wl, eos, fl)
    flux_full(wr, eos, fr)
    if not path_integral(ql, qr, eos, closure, velocity, bdq, qs, ws):
        return False
    l_lo, l_hi = speed_bounds(wl, eos)
    r_lo, r_hi = speed_bounds(wr, eos)
    if solver == 0:
        s = max(abs(l_lo), abs(l_hi), abs(r_lo), abs(r_hi))
        s_l = -s
        s_r = s
    else:
        s_l = min(min(l_lo, r_lo), 0.0)
        s_r = max(max(l_hi, r_hi), 0.0)
    inv = 1.0 / (s_r - s_l)
    for j in range(7):
        fhat[j] = (s_r * fl[j] - s_l * fr[j] + s_l * s_r * (qr[j] - ql[j])) * inv
        dm[j] = -s_l * inv * bdq[j]
        dp[j] = s_r * inv * bdq[j]
    if solver == 2 and s_l < 0.0 < s_r:
        dal = qr[6] - ql[6]
        if dal != 0.0:
            # contact eigenvector dQ/dalpha1; each phase's state is averaged with its
            # own volume fractions as weights, so a trace phase on one side does not
            # pollute the eigenvector (RP1 has alpha = 1e-8 next to alpha = 1 - 1e-8)
            ws[0] = 0.5 * (wl[0] + wr[0])
            g1 = wl[0] / (wl[0] + wr[0])
            g2 = (1.0 - wl[0]) / (2.0 - wl[0] - wr[0])
            for j in (1, 3, 5):
                ws[j] = g1 * wl[j] + (1.0 - g1) * wr[j]
            for j in (2, 4, 6):
                ws[j] = g2 * wl[j] + (1.0 - g2) * wr[j]
            rho1 = ws[1]
            rho2 = ws[2]
            u1 = ws[3]
            u2 = ws[4]
            _, w1 = interface_pu(rho1, rho2, u1, u2, ws[5], ws[6], eos, closure, velocity)
            lam_star = w1 * u1 + (1.0 - w1) * u2
            d_star = 1.0 - min(lam_star, 0.0) / s_l - max(lam_star, 0.0) / s_r
            coef = s_l * s_r * inv * d_star * dal
            fhat[0] -= coef * rho1
            fhat[1] += coef * rho2
            fhat[2] -= coef * rho1 * u1
            fhat[3] += coef * rho2 * u2
            fhat[4] -= coef * (0.5 * rho1 * u1 * u1 + eos[2] * ws[5] + eos[3])
            fhat[5] += coef * (0.5 * rho2 * u2 * u2 + eos[6] * ws[6] + eos[7])
            fhat[6] -= coef
    return True


@njit(cache=True)
def fill_ghosts(q, n, bc):
    """Two ghost layers: ``bc`` 0 transmissive, 1 periodic."""
    for j in range(7):
        if bc == 0:
            q[j, 0] = q[j, 2]
            q[j, 1] = q[j, 2]
            q[j, n + 2] = q[j, n + 1]
            q[j, n + 3] = q[j, n + 1]
        else:
            q[j, 0] = q[j, n]
            q[j, 1] = q[j, n + 1]
            q[j, n + 2] = q[j, 2]
            q[j, n + 3] = q[j, 3]


@njit(cache=True)
def max_speed(q, lo, hi, eos):
    """``max |u_k| + a_k`` over columns ``lo..hi-1``; -1 if a cell is inadmissible."""
    w = np.empty(7)
    best = 0.0
    for i in range(lo, hi):
        if not decode_vec(q[0, i], q[1, i], q[2, i], q[3, i], q[4, i], q[5, i], q[6, i], w, eos):
            return -1.0 - i
        a1 = math.sqrt(eos[0] * (w[5] + eos[1]) / w[1])
        a2 = math.sqrt(eos[4] * (w[6] + eos[5]) / w[2])
        best = max(best, abs(w[3]) + a1, abs(w[4]) + a2)
    return best


@njit(cache=True, inline="always")
def _minmod(a, b):
    if a * b <= 0.0:
        return 0.0
    if abs(a) < abs(b):
        return a
    return b


@njit(cache=True, inline="always")
def _face(i, qlb, qrb, wlb, wrb, eos, solver, closure, velocity, ff, fm, fp, scratch):
    """Numerical flux and fluctuations at the face between cells ``i`` and ``i+1``."""
    return riemann(qrb[i], qlb[i + 1], wrb[i], wlb[i + 1], eos, solver, closure, velocity,
                   ff[i], fm[i], fp[i], scratch)


@njit(cache=True)
def muscl_workspace(n):
    """Scratch for :func:`muscl_step` on ``n`` cells: ``(floats, flags)``."""
    return np.empty((10, n + 4, 7)), np.empty((3, n + 4), dtype=np.bool_)


@njit(cache=True)
def muscl_step(q, n, dt, dx, eos, solver, limiter, closure, velocity, bc, alpha_min, work, flags):
    """One MUSCL-Hancock step on the interior columns ``2..n+1`` of ``q``.

    ``work, flags`` come from :func:`muscl_workspace`. Returns
    ``(status, cell)``: 0 ok, 1 inadmissible cell before the step,
    2 inadmissible path state at an interface, 3 inadmissible update.
    """
    m = n + 4
    fill_ghosts(q, n, bc)
    # work arrays are cell-major so every per-cell vector is contiguous
    q0 = work[0]
    for j in range(7):
        for i in range(m):
            q0[i, j] = q[j, i]
    w = work[1]
    for i in range(m):
        r = q0[i]
        if not decode_vec(r[0], r[1], r[2], r[3], r[4], r[5], r[6], w[i], eos):
            return 1, i

    # evolved boundary-extrapolated states of cells 1..n+2
    qlb = work[2]
    qrb = work[3]
    wlb = work[4]
    wrb = work[5]
    cell_b = work[6]
    cell_b[:] = 0.0
    tmp = np.empty((6, 7))
    fl = tmp[0]
    fr = tmp[1]
    bq = tmp[2]
    wc = tmp[3]
    qm = tmp[4]
    half = 0.5 * dt / dx
    for i in range(1, m - 1):
        ok = False
        ql = qlb[i]
        qr = qrb[i]
        wl = wlb[i]
        wr = wrb[i]
        if limiter == 1:
            wi = w[i]
            wm = w[i - 1]
            wp = w[i + 1]
            for j in range(7):
                s = 0.5 * _minmod(wi[j] - wm[j], wp[j] - wi[j])
                wl[j] = wi[j] - s
                wr[j] = wi[j] + s
            if (wl[0] > 0.0 and wl[0] < 1.0 and wr[0] > 0.0 and wr[0] < 1.0
                    and wl[1] > 0.0 and wr[1] > 0.0 and wl[2] > 0.0 and wr[2] > 0.0
                    and wl[5] + eos[1] > 0.0 and wr[5] + eos[1] > 0.0
                    and wl[6] + eos[5] > 0.0 and wr[6] + eos[5] > 0.0):
                encode(wl, ql, eos)
                encode(wr, qr, eos)
                flux_full(wl, eos, fl)
                flux_full(wr, eos, fr)
                for j in range(7):
                    bq[j] = 0.0
                b_row(wi, eos, closure, velocity, bq, qr[6] - ql[6])
                for j in range(7):
                    corr = half * (fr[j] - fl[j] + bq[j])
                    ql[j] -= corr
                    qr[j] -= corr
                ok = (decode_vec(ql[0], ql[1], ql[2], ql[3], ql[4], ql[5], ql[6], wl, eos)
                      and decode_vec(qr[0], qr[1], qr[2], qr[3], qr[4], qr[5], qr[6], wr, eos))
        if not ok:
            # first-order fallback: zero slope, the predictor is then the identity
            ql[:] = q0[i]
            qr[:] = q0[i]
            wl[:] = w[i]
            wr[:] = w[i]
        # cell-interior nonconservative term at the half-time mean state
        dal = qr[6] - ql[6]
        if dal != 0.0:
            for j in range(7):
                qm[j] = 0.5 * (ql[j] + qr[j])
            if not decode_vec(qm[0], qm[1], qm[2], qm[3], qm[4], qm[5], qm[6], wc, eos):
                return 3, i
            b_row(wc, eos, closure, velocity, cell_b[i], dal)

    # faces i+1/2 for i = 1..n+1 (between cells i and i+1)
    ff = work[7]
    fm = work[8]
    fp = work[9]
    scratch = np.empty((5, 7))
    for i in range(1, n + 2):
        if not _face(i, qlb, qrb, wlb, wrb, eos, solver, closure, velocity, ff, fm, fp, scratch):
            return 2, i

    # a posteriori safeguard: a cell whose update is inadmissible is redone with
    # first-order data and HLL on both faces; conservation holds because each
    # face keeps a single flux
    lam = dt / dx
    safe = min(solver, 1)
    qn = tmp[5]
    fallback = flags[0]
    reset = flags[1]
    todo = flags[2]
    flags[:] = False
    todo[2:n + 2] = True
    while True:
        flagged = False
        for i in range(2, n + 2):
            if not todo[i]:
                continue
            todo[i] = False
            r = q0[i]
            a = ff[i]
            b = fm[i]
            c = ff[i - 1]
            d = fp[i - 1]
            e = cell_b[i]
            for j in range(7):
                qn[j] = r[j] - lam * (a[j] + b[j] - c[j] + d[j] + e[j])
            if qn[6] < alpha_min:
                qn[6] = alpha_min
            elif qn[6] > 1.0 - alpha_min:
                qn[6] = 1.0 - alpha_min
            for j in range(7):
                q[j, i] = qn[j]
            if not decode_vec(qn[0], qn[1], qn[2], qn[3], qn[4], qn[5], qn[6], wc, eos):
                if fallback[i]:
                    for j in range(7):
                        q[j, i] = r[j]
                    return 3, i
                fallback[i] = True
                flagged = True
        if not flagged:
            break
        for i in range(2, n + 2):
            if fallback[i] and not reset[i]:
                reset[i] = True
                qlb[i] = q0[i]
                qrb[i] = q0[i]
                wlb[i] = w[i]
                wrb[i] = w[i]
                cell_b[i] = 0.0
                for f in (i - 1, i):
                    if not _face(f, qlb, qrb, wlb, wrb, eos, safe, closure, velocity, ff, fm, fp, scratch):
                        return 2, f
                todo[i - 1] = True
                todo[i] = True
                todo[i + 1] = True
    fill_ghosts(q, n, bc)
    return 0, -1
