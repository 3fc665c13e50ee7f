"""Iterative linearised exponential integrator for mechanical relaxation.

The unknowns are ``V = [u1, u2, p1, p2, alpha1]`` with the partial densities
``m1 = alpha1*rho1`` and ``m2 = alpha2*rho2`` frozen. Each timestep solves an
affine approximation of the source built at the step midpoint, in closed form
and without any matrix inversion:

1. velocities: exact exponential decay of ``u1 - u2`` at rate
   ``k_vel = lambda*(1/m1 + 1/m2)`` with the mixture momentum preserved;
2. pressures: ``p1 - p2`` solves a scalar linear ODE with rate
   ``K = kp1 + kp2`` forced by a pure ``exp(-2*k_vel*t)`` friction-heating
   mode; each pressure is then recovered by exact quadrature;
3. volume fraction: exact quadrature of ``nu*(p1 - p2)``.

The linearisation state is refined by fixed-point iteration, and a
coefficient vector compared against the previous step decides acceptance and
the next step size.

Two linearisation modes exist. ``"average"`` freezes every coefficient at
``(V_n + V_{n+1})/2``. When a step spans an unresolved velocity transient,
friction heat is dumped into the pressures at ``t ~ t_n`` and that average
misplaces the state for the rest of the step, which costs one order of
accuracy. ``"transient"`` (default) corrects for it: the friction-heating
coefficients are taken at the centroid ``theta*dt`` of the
``exp(-2*k_vel*t)`` forcing and the pressure coefficients at the endpoint
average shifted by ``(1/2 - theta)`` times the heat released in the step.
With ``theta = 1/2 - O(k_vel*dt)`` the two modes coincide to second order
when the transient is resolved.

All routines operate on a single state (shape ``(5,)``) or a batch of
independent cells (shape ``(5, n)``); the batch path is what the finite-volume
solver uses.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .eos import InadmissibleStateError, OdeParams, PrimitiveState, interface_weights
from .expdd import exp_dd1, exp_dd2

U1, U2, P1, P2, A1 = range(5)

INADMISSIBLE = "Inadmissible"
FLOATING_POINT_FAULT = "FloatingPointFault"
MAX_ITERATIONS = "MaxIterations"
DELTA_EXCEEDED = "DeltaExceeded"
REASONS = (INADMISSIBLE, FLOATING_POINT_FAULT, MAX_ITERATIONS, DELTA_EXCEEDED)
_REASON_CODE = {name: i + 1 for i, name in enumerate(REASONS)}

COEFF_SETS = ("operator", "full")
LINEARISATIONS = ("transient", "average")


class RelaxationError(RuntimeError):
    """The adaptive integrator could not advance (timestep underflow).

    Carries the last accepted state and time; for batches ``cell`` is the
    index of the first failing cell.
    """

    def __init__(self, message, state=None, time=None, cell=None):
        super().__init__(message)
        self.state = state
        self.time = time
        self.cell = cell


@dataclass
class SolverConfig:
    """Tolerances and controller constants.

    ``coeff_set`` selects the coefficient vector composition (see
    :func:`coeff_vector`), ``linearisation`` the state at which the affine
    operator is frozen (module docstring). ``dt0``/``dt_min`` default to ``1e-3`` and
    ``1e-15`` times the integration span. ``growth_cap`` bounds
    ``dt_next/dt`` and is off by default.
    """

    delta_max: float = 0.5
    eps_delta: float = 1e-30
    r_max: float = 1e-2
    eps_r: float = 1e-30
    k_max: int = 8
    safety: float = 0.8
    eps_dt: float = 1e-14
    growth_cap: float = math.inf
    dt0: float | None = None
    dt_min: float | None = None
    coeff_set: str = "operator"
    linearisation: str = "transient"
    warm_start: bool = False

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if not self.delta_max > 0:
            raise ValueError("delta_max must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if not 0 < self.safety < 1:
            raise ValueError("safety must lie in (0, 1)")
        if not self.growth_cap > 1:
            raise ValueError("growth_cap must be > 1")
        if self.coeff_set not in COEFF_SETS:
            raise ValueError(f"coeff_set must be one of {COEFF_SETS}")
        if self.linearisation not in LINEARISATIONS:
            raise ValueError(f"linearisation must be one of {LINEARISATIONS}")


@dataclass(frozen=True)
class Accepted:
    state: PrimitiveState
    dt_next: float
    iterations: int
    delta: float
    coeffs: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Rejected:
    dt_retry: float
    reason: str


StepOutcome = Union[Accepted, Rejected]


def _as_states(v):
    return np.asarray(v, dtype=float)


def _to_primitive(a):
    if a.ndim == 1:
        return PrimitiveState(*(float(x) for x in a))
    return PrimitiveState(*a)


def _take_params(params, idx):
    """Restrict per-cell parameters to the cells in ``idx``."""
    changes = {}
    for name in ("m1", "m2", "lambda_fric", "nu_press"):
        val = getattr(params, name)
        if np.ndim(val):
            changes[name] = np.asarray(val)[idx]
    if not changes:
        return params
    # bypass re-validation; the parent was already validated
    out = object.__new__(OdeParams)
    for f in dataclasses.fields(OdeParams):
        object.__setattr__(out, f.name, changes.get(f.name, getattr(params, f.name)))
    return out


# ---------------------------------------------------------------------------
# pointwise model


def source_rhs(v, params):
    """Right-hand side of the relaxation ODE for ``v = [u1, u2, p1, p2, alpha1]``."""
    u1, u2, p1, p2, a1 = _as_states(v)
    a2 = 1.0 - a1
    e1, e2 = params.eos1, params.eos2
    lam, nu = params.lambda_fric, params.nu_press
    rho1, rho2 = params.densities(a1)
    p_i, w1 = interface_weights(p1, p2, rho1, rho2, e1, e2,
                                params.interface_closure, params.interface_velocity)
    u_i = w1 * u1 + (1.0 - w1) * u2
    dp = p1 - p2
    return np.stack([
        lam / params.m1 * (u2 - u1),
        lam / params.m2 * (u1 - u2),
        nu * (p_i + e1.ka * p1 + e1.kb) / (a1 * e1.ka) * (-dp) + lam * (u_i - u1) / (a1 * e1.ka) * (u2 - u1),
        nu * (p_i + e2.ka * p2 + e2.kb) / (a2 * e2.ka) * dp + lam * (u_i - u2) / (a2 * e2.ka) * (u1 - u2),
        nu * dp + 0.0 * a1,
    ])


def mixture_momentum(v, params):
    v = _as_states(v)
    return params.m1 * v[U1] + params.m2 * v[U2]


def mixture_energy(v, params):
    """Total energy per unit volume, conserved by the exact relaxation ODE."""
    u1, u2, p1, p2, a1 = _as_states(v)
    e1, e2 = params.eos1, params.eos2
    return (0.5 * params.m1 * u1 ** 2 + 0.5 * params.m2 * u2 ** 2
            + a1 * (e1.ka * p1 + e1.kb) + (1.0 - a1) * (e2.ka * p2 + e2.kb))


def admissible_mask(v, params):
    """Boolean verdict per cell, and a second mask of non-finite cells."""
    u1, u2, p1, p2, a1 = _as_states(v)
    finite = np.isfinite(u1) & np.isfinite(u2) & np.isfinite(p1) & np.isfinite(p2) & np.isfinite(a1)
    e1, e2 = params.eos1, params.eos2
    with np.errstate(invalid="ignore"):
        ok = (finite
              & (p1 + e1.gamma * e1.pi_inf > 0)
              & (p2 + e2.gamma * e2.pi_inf > 0)
              & (a1 > 0) & (a1 < 1))
    return ok, ~finite


def admissible(v, params):
    """Admissibility verdict ``(ok, reason)`` for a single state.

    Passes iff both phase internal energies are positive
    (``p + gamma*Pi > 0``), ``0 < alpha1 < 1`` and every entry is finite.
    """
    u1, u2, p1, p2, a1 = (float(x) for x in _as_states(v))
    if not all(math.isfinite(x) for x in (u1, u2, p1, p2, a1)):
        return False, "non-finite component"
    e1, e2 = params.eos1, params.eos2
    if not p1 + e1.gamma * e1.pi_inf > 0:
        return False, "non-positive internal energy of phase 1"
    if not p2 + e2.gamma * e2.pi_inf > 0:
        return False, "non-positive internal energy of phase 2"
    if not 0 < a1 < 1:
        return False, "volume fraction outside (0, 1)"
    return True, ""


def relative_change(a, b, floor):
    """``max |a - b| / (|a| + |b| + floor)`` over the leading (component) axis."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.abs(a - b) / (np.abs(a) + np.abs(b) + floor)
    # 0/0 only arises for a == b == 0 with a zero floor
    ratio = np.where(np.isnan(ratio) & (a == b), 0.0, ratio)
    out = np.max(ratio, axis=0)
    return float(out) if np.ndim(out) == 0 else out


def velocity_exact(v0, params, tau):
    """Closed-form velocities after ``tau`` seconds of friction.

    ``u1 - u2`` decays at ``k_vel = lambda*(1/m1 + 1/m2)`` while
    ``m1*u1 + m2*u2`` is unchanged.
    """
    v0 = _as_states(v0)
    m1, m2 = params.m1, params.m2
    k_vel = params.lambda_fric * (1.0 / m1 + 1.0 / m2)
    d0 = v0[U1] - v0[U2]
    decay = np.expm1(-k_vel * np.asarray(tau, dtype=float))
    msum = m1 + m2
    u1 = v0[U1] + (m2 / msum) * d0 * decay
    u2 = v0[U2] - (m1 / msum) * d0 * decay
    if np.ndim(u1) == 0:
        return float(u1), float(u2)
    return u1, u2


# ---------------------------------------------------------------------------
# linearised operator


@dataclass(frozen=True)
class LinearOperator:
    """Affine relaxation operator frozen at a linearisation state.

    Pressure equations read ``dp1/dt = kp1*(p2 - p1) + ku1*(uI - u1)*(u2 - u1)``
    and ``dp2/dt = kp2*(p1 - p2) + ku2*(uI - u2)*(u1 - u2)``, with
    ``uI = w1*u1 + (1 - w1)*u2`` and all coefficients constant.
    """

    k_vel: np.ndarray
    kp1: np.ndarray
    kp2: np.ndarray
    ku1: np.ndarray
    ku2: np.ndarray
    w1: np.ndarray
    p_interface: np.ndarray
    nu: np.ndarray
    lam: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    v_star: np.ndarray = field(repr=False)

    def forcing_amplitudes(self, v_n):
        """``(g1, g2)``: the pressure forcings are ``g_k * exp(-2*k_vel*t)``."""
        v_n = _as_states(v_n)
        d0sq = (v_n[U1] - v_n[U2]) ** 2
        return self.ku1 * (1.0 - self.w1) * d0sq, self.ku2 * self.w1 * d0sq

    def rhs(self, v):
        """Right-hand side of the affine system at state ``v``."""
        u1, u2, p1, p2, a1 = _as_states(v)
        du = u2 - u1
        return np.stack([
            self.lam / self.m1 * du,
            -self.lam / self.m2 * du,
            self.kp1 * (p2 - p1) + self.ku1 * (1.0 - self.w1) * du * du,
            self.kp2 * (p1 - p2) + self.ku2 * self.w1 * du * du,
            self.nu * (p1 - p2) + 0.0 * a1,
        ])


def _operator(v_star, params, p_i, w1):
    u1, u2, p1, p2, a1 = v_star
    a2 = 1.0 - a1
    e1, e2 = params.eos1, params.eos2
    lam, nu = params.lambda_fric, params.nu_press
    return LinearOperator(
        k_vel=lam * (1.0 / params.m1 + 1.0 / params.m2) + 0.0 * a1,
        kp1=nu * (p_i + e1.ka * p1 + e1.kb) / (a1 * e1.ka),
        kp2=nu * (p_i + e2.ka * p2 + e2.kb) / (a2 * e2.ka),
        ku1=lam / (a1 * e1.ka),
        ku2=lam / (a2 * e2.ka),
        w1=w1,
        p_interface=p_i,
        nu=nu + 0.0 * a1,
        lam=lam + 0.0 * a1,
        m1=params.m1 + 0.0 * a1,
        m2=params.m2 + 0.0 * a1,
        v_star=v_star,
    )


def _build(v_star, params):
    rho1, rho2 = params.densities(v_star[A1])
    p_i, w1 = interface_weights(v_star[P1], v_star[P2], rho1, rho2, params.eos1, params.eos2,
                                params.interface_closure, params.interface_velocity)
    return _operator(v_star, params, p_i, w1)


def build_linear_operator(v_star, params):
    """Linearise the relaxation source about ``v_star``.

    Raises
    ------
    InadmissibleStateError
        If ``v_star`` is not admissible.
    """
    v_star = _as_states(v_star)
    ok, _ = admissible_mask(v_star, params)
    if not np.all(ok):
        raise InadmissibleStateError("linearisation state is not admissible", "v_star")
    return _build(v_star, params)


def exact_linear_solution(op, v_n, params, tau):
    """Exact solution at time ``tau`` of the affine IVP defined by ``op``."""
    v_n = _as_states(v_n)
    tau = np.asarray(tau, dtype=float)
    u1, u2 = velocity_exact(v_n, params, tau)

    k2 = 2.0 * op.k_vel
    big_k = op.kp1 + op.kp2
    x_k = -big_k * tau
    x_2 = -k2 * tau
    g1, g2 = op.forcing_amplitudes(v_n)
    dp0 = v_n[P1] - v_n[P2]

    # int_0^tau exp(-2 k_vel s) ds
    forced = tau * exp_dd1(x_2, 0.0)
    # int_0^tau (p1 - p2) ds
    int_dp = dp0 * tau * exp_dd1(x_k, 0.0) + (g1 - g2) * tau * tau * exp_dd2(x_k, x_2, 0.0)

    p1 = v_n[P1] + g1 * forced - op.kp1 * int_dp
    p2 = v_n[P2] + g2 * forced + op.kp2 * int_dp
    a1 = v_n[A1] + op.nu * int_dp
    return np.stack(np.broadcast_arrays(u1, u2, p1, p2, a1))


def pressure_difference_exact(op, v_n, tau):
    """``p1 - p2`` of the affine solution, from its own scalar ODE."""
    v_n = _as_states(v_n)
    tau = np.asarray(tau, dtype=float)
    big_k = op.kp1 + op.kp2
    g1, g2 = op.forcing_amplitudes(v_n)
    dp0 = v_n[P1] - v_n[P2]
    return dp0 * np.exp(-big_k * tau) + (g1 - g2) * tau * exp_dd1(-big_k * tau, -2.0 * op.k_vel * tau)


# ---------------------------------------------------------------------------
# coefficient vector


def _coeffs_from(op, v, params, coeff_set):
    if coeff_set == "operator":
        return np.stack([op.kp1, op.kp2, op.ku1, op.ku2])
    u_i = op.w1 * v[U1] + (1.0 - op.w1) * v[U2]
    s = op.rhs(v)
    return np.stack([op.kp1, op.kp2,
                     op.ku1 * (u_i - v[U1]), op.ku2 * (u_i - v[U2]),
                     s[0], s[1], s[2], s[3], s[4]])


def coeff_vector(v_star, params, coeff_set="operator"):
    """Indicator vector summarising the linearised operator at ``v_star``.

    ``"operator"`` (default): ``[kp1, kp2, ku1, ku2]``, the coefficients of
    the linear pressure system.
    ``"full"``: ``[kp1, kp2, ku1*(uI-u1), ku2*(uI-u2)]`` followed by the five
    source components at ``v_star``.
    """
    v_star = _as_states(v_star)
    op = build_linear_operator(v_star, params)
    return _coeffs_from(op, v_star, params, coeff_set)


# ---------------------------------------------------------------------------
# batched stepping


def _forcing_centroid(params, dt):
    """Centroid of the friction forcing ``exp(-2*k_vel*t)`` over a step, as a fraction of ``dt``.

    Equals 1/2 without friction and tends to ``1/(2*k_vel*dt)`` when the
    velocity transient is much shorter than the step.
    """
    a = 2.0 * params.lambda_fric * (1.0 / params.m1 + 1.0 / params.m2) * np.asarray(dt, dtype=float)
    return np.broadcast_to(exp_dd2(-a, -a, 0.0) / exp_dd1(-a, 0.0), np.shape(dt)).copy()


def _combine(op_mid, op_frc):
    """Pressure coefficients from ``op_mid``, friction forcing from ``op_frc``."""
    return dataclasses.replace(op_mid, ku1=op_frc.ku1, ku2=op_frc.ku2, w1=op_frc.w1)


def _linearise(v_n, v_end, params, dt, theta, mode):
    """Affine operator for one iteration and the state its coefficients came from."""
    v_mid = 0.5 * (v_n + v_end)
    if mode == "average":
        return _build(v_mid, params), v_mid
    op_frc = _build(v_n + theta * (v_end - v_n), params)
    g1, g2 = op_frc.forcing_amplitudes(v_n)
    # move the pressures past the share of friction heat released before
    # the forcing centroid; O(dt^2) when the transient is resolved
    heat = 0.5 * (1.0 - 2.0 * theta) * dt * exp_dd1(-2.0 * op_frc.k_vel * dt, 0.0)
    v_mid = v_mid.copy()
    v_mid[P1] = v_mid[P1] + g1 * heat
    v_mid[P2] = v_mid[P2] + g2 * heat
    return _combine(_build(v_mid, params), op_frc), v_mid


def _batch_attempt(v_n, c_n, dt, params, cfg, guess=None):
    """One timestep attempt for every column of ``v_n``.

    Returns ``(v_new, c_new, code, delta, dt_next, iterations)`` where
    ``code`` is 0 for accepted cells and the 1-based index into
    :data:`REASONS` otherwise.
    """
    n = v_n.shape[1]
    v_new = np.array(v_n, copy=True)
    c_new = np.array(c_n, copy=True)
    c_mid = np.array(c_n, copy=True)
    code = np.full(n, _REASON_CODE[MAX_ITERATIONS], dtype=np.int8)
    iterations = np.full(n, cfg.k_max, dtype=np.int16)
    prev = np.array(v_n if guess is None else guess, copy=True)
    theta = _forcing_centroid(params, dt)

    active = np.arange(n)
    for k in range(1, cfg.k_max + 1):
        if active.size == 0:
            break
        sub_params = params if active.size == n else _take_params(params, active)
        vn_a = v_n[:, active]
        prev_a = prev[:, active]
        h = dt[active]
        with np.errstate(all="ignore"):
            op, v_mid = _linearise(vn_a, prev_a, sub_params, h, theta[active], cfg.linearisation)
            cm = _coeffs_from(op, v_mid, sub_params, cfg.coeff_set)
            cand = exact_linear_solution(op, vn_a, sub_params, h)
            ok, nonfinite = admissible_mask(cand, sub_params)
            nonfinite |= ~np.all(np.isfinite(cm), axis=0)
            ok &= ~nonfinite
            r = relative_change(cand, prev_a, cfg.eps_r)
            r = np.atleast_1d(r)

        bad = ~ok
        if np.any(bad):
            idx = active[bad]
            code[idx] = np.where(nonfinite[bad], _REASON_CODE[FLOATING_POINT_FAULT], _REASON_CODE[INADMISSIBLE])
            iterations[idx] = k

        done = ok & (r <= cfg.r_max)
        if np.any(done):
            idx = active[done]
            v_new[:, idx] = cand[:, done]
            c_mid[:, idx] = cm[:, done]
            code[idx] = 0
            iterations[idx] = k

        keep = ok & ~done
        prev[:, active[keep]] = cand[:, keep]
        # cells hitting k_max keep their last iterate for diagnostics
        if k == cfg.k_max and np.any(keep):
            v_new[:, active[keep]] = cand[:, keep]
        active = active[keep]

    delta = np.full(n, np.inf)
    dt_next = dt * 0.5
    conv = np.flatnonzero(code == 0)
    if conv.size:
        sub_params = params if conv.size == n else _take_params(params, conv)
        with np.errstate(all="ignore"):
            v_c = v_new[:, conv]
            op = _build(v_c, sub_params)
            c_end = _coeffs_from(op, v_c, sub_params, cfg.coeff_set)
            finite = np.all(np.isfinite(c_end), axis=0)
            c_ref = c_n[:, conv]
            d = np.maximum(
                np.atleast_1d(relative_change(c_mid[:, conv], c_ref, cfg.eps_delta)),
                np.atleast_1d(relative_change(c_end, c_ref, cfg.eps_delta)),
            )
        c_new[:, conv] = c_end
        delta[conv] = d
        code[conv[~finite]] = _REASON_CODE[FLOATING_POINT_FAULT]
        over = finite & (d > cfg.delta_max)
        code[conv[over]] = _REASON_CODE[DELTA_EXCEEDED]
        acc = finite & ~over
        h = dt[conv]
        grown = h * cfg.safety * cfg.delta_max / (d + cfg.eps_dt)
        dt_next[conv[acc]] = np.minimum(grown, cfg.growth_cap * h)[acc]
    rejected = code != 0
    dt_next[rejected] = 0.5 * dt[rejected]
    return v_new, c_new, code, delta, dt_next, iterations


def attempt_step(v_n, c_n, dt, params, cfg):
    """Attempt one timestep of size ``dt`` from ``v_n``.

    ``c_n`` is the reference coefficient vector of the step start. Returns
    :class:`Accepted` (state, proposed next step, iteration count, delta and
    the endpoint coefficients that become the next reference) or
    :class:`Rejected` with half the attempted step.
    """
    v = _as_states(v_n).reshape(5, 1)
    c = np.asarray(c_n, dtype=float).reshape(-1, 1)
    v_new, c_new, code, delta, dt_next, its = _batch_attempt(v, c, np.array([float(dt)]), params, cfg)
    if code[0] == 0:
        return Accepted(_to_primitive(v_new[:, 0]), float(dt_next[0]), int(its[0]), float(delta[0]), c_new[:, 0])
    return Rejected(0.5 * float(dt), REASONS[code[0] - 1])


@dataclass
class Trajectory:
    """Accepted states of an adaptive run plus step statistics."""

    times: np.ndarray
    states: np.ndarray  # (n_points, 5)
    dts: np.ndarray
    iterations: np.ndarray
    deltas: np.ndarray
    rejected: int = 0
    rejections: dict = field(default_factory=dict)

    @property
    def accepted(self):
        return len(self.dts)

    @property
    def final_state(self):
        return PrimitiveState(*(float(x) for x in self.states[-1]))

    def __iter__(self):
        return iter(zip(self.times, (PrimitiveState(*s) for s in self.states)))


def integrate(v_0, t0, t_end, params, cfg=None):
    """Adaptive march from ``t0`` to ``t_end`` for a single state.

    Raises
    ------
    InadmissibleStateError
        If ``v_0`` is not admissible.
    RelaxationError
        If the step size falls below ``cfg.dt_min``.
    """
    cfg = cfg or SolverConfig()
    v = _as_states(v_0).reshape(5)
    ok, why = admissible(v, params)
    if not ok:
        raise InadmissibleStateError(f"initial state not admissible: {why}", "v_0")
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    span = t_end - t0
    dt = cfg.dt0 if cfg.dt0 is not None else 1e-3 * span
    dt_min = cfg.dt_min if cfg.dt_min is not None else 1e-15 * span

    times, states, dts, its, deltas = [t0], [v.copy()], [], [], []
    rejections = {}
    c = coeff_vector(v, params, cfg.coeff_set)
    t = t0
    prev_v, prev_dt = None, None
    while t < t_end:
        last = dt >= t_end - t
        h = t_end - t if last else dt
        guess = None
        if cfg.warm_start and prev_v is not None:
            guess = (v + (h / prev_dt) * (v - prev_v)).reshape(5, 1)
            if not admissible_mask(guess, params)[0].all():
                guess = None
        v_new, c_new, code, delta, dt_next, it = _batch_attempt(
            v.reshape(5, 1), c.reshape(-1, 1), np.array([h]), params, cfg, guess)
        if code[0] != 0:
            reason = REASONS[code[0] - 1]
            rejections[reason] = rejections.get(reason, 0) + 1
            dt = 0.5 * h
            if dt < dt_min:
                raise RelaxationError(
                    f"timestep {dt:.3e} s below minimum {dt_min:.3e} s at t = {t:.6e} s ({reason})",
                    state=PrimitiveState(*v), time=t)
            continue
        prev_v, prev_dt = v, h
        v = v_new[:, 0]
        c = c_new[:, 0]
        t = t_end if last else t + h
        times.append(t)
        states.append(v.copy())
        dts.append(h)
        its.append(int(it[0]))
        deltas.append(float(delta[0]))
        dt = float(dt_next[0])
    return Trajectory(np.array(times), np.array(states), np.array(dts), np.array(its),
                      np.array(deltas), sum(rejections.values()), rejections)


def integrate_fixed(v_0, t0, t_end, n_steps, params, cfg=None):
    """March with uniform steps, bypassing acceptance control.

    ``n_steps`` may be an int or a sequence; a sequence runs one
    independent march per entry (vectorised) and returns shape ``(5, m)``.
    The iteration still stops at ``r_max`` or ``k_max``, taking the last
    iterate either way.
    """
    cfg = cfg or SolverConfig()
    counts = np.atleast_1d(np.asarray(n_steps, dtype=np.int64))
    if np.any(counts < 1):
        raise ValueError("n_steps must be >= 1")
    m = counts.size
    v = np.repeat(_as_states(v_0).reshape(5, 1), m, axis=1)
    h_all = (t_end - t0) / counts.astype(float)
    theta_all = _forcing_centroid(params, h_all)
    for i in range(int(counts.max())):
        cols = np.flatnonzero(counts > i)
        vc = v[:, cols]
        h = h_all[cols]
        theta = theta_all[cols]
        prev = vc.copy()
        for _k in range(cfg.k_max):
            with np.errstate(all="ignore"):
                op, _ = _linearise(vc, prev, params, h, theta, cfg.linearisation)
                cand = exact_linear_solution(op, vc, params, h)
            r = relative_change(cand, prev, cfg.eps_r)
            prev = cand
            if np.all(r <= cfg.r_max):
                break
        v[:, cols] = prev
    return v[:, 0] if np.ndim(n_steps) == 0 else v


@dataclass
class BatchStats:
    accepted: np.ndarray
    rejected: np.ndarray
    iterations: np.ndarray


def integrate_batch(v_0, span, params, cfg=None, dt0=None):
    """Advance every cell of ``v_0`` (shape ``(5, n)``) by ``span`` seconds.

    Cells march independently with their own step sizes; per-cell
    ``params`` entries (``m1``, ``m2``, ...) may be arrays of length ``n``.
    Returns ``(v_end, BatchStats)``.
    """
    cfg = cfg or SolverConfig()
    v = np.array(v_0, dtype=float, copy=True)
    n = v.shape[1]
    dt_start = dt0 if dt0 is not None else (cfg.dt0 if cfg.dt0 is not None else 1e-3 * span)
    dt_min = cfg.dt_min if cfg.dt_min is not None else 1e-15 * span
    t = np.zeros(n)
    dt = np.full(n, float(dt_start))
    accepted = np.zeros(n, dtype=np.int64)
    rejected = np.zeros(n, dtype=np.int64)
    iters = np.zeros(n, dtype=np.int64)

    ok, _ = admissible_mask(v, params)
    if not np.all(ok):
        cell = int(np.flatnonzero(~ok)[0])
        raise InadmissibleStateError(f"cell {cell} enters relaxation inadmissible", "v_0", cell)
    with np.errstate(all="ignore"):
        c = _coeffs_from(_build(v, params), v, params, cfg.coeff_set)

    active = np.arange(n)
    while active.size:
        sub = params if active.size == n else _take_params(params, active)
        remaining = span - t[active]
        last = dt[active] >= remaining
        h = np.where(last, remaining, dt[active])
        v_new, c_new, code, _, dt_next, its = _batch_attempt(v[:, active], c[:, active], h, sub, cfg)
        acc = code == 0
        ia = active[acc]
        v[:, ia] = v_new[:, acc]
        c[:, ia] = c_new[:, acc]
        t[ia] = np.where(last[acc], span, t[ia] + h[acc])
        accepted[ia] += 1
        iters[active] += its
        rejected[active[~acc]] += 1
        dt[active] = dt_next
        small = ~acc & (dt_next < dt_min)
        if np.any(small):
            cell = int(active[small][0])
            reason = REASONS[code[small][0] - 1]
            raise RelaxationError(
                f"cell {cell}: relaxation timestep below {dt_min:.3e} s at local time {t[cell]:.6e} s ({reason})",
                state=PrimitiveState(*v[:, cell]), time=float(t[cell]), cell=cell)
        active = active[t[active] < span]
    return v, BatchStats(accepted, rejected, iters)
