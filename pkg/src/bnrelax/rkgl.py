"""Three-stage Gauss-Legendre Runge-Kutta (order 6) reference integrator.

Used as an independent oracle for the linearised exponential scheme in
:mod:`bnrelax.relaxation`. The stage equations are solved with a simplified
Newton iteration (finite-difference Jacobian frozen over the step) and the
step size is chosen by step doubling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eos import InadmissibleStateError
from .relaxation import RelaxationError, Trajectory, admissible, source_rhs

_S15 = math.sqrt(15.0)


@dataclass(frozen=True)
class GaussLegendreTableau:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int = 6


def gauss_legendre3():
    """Butcher arrays of the 3-stage Gauss-Legendre collocation method.

    The nodes are the roots of the shifted degree-3 Legendre polynomial,
    ``c = 1/2 - sqrt(15)/10, 1/2, 1/2 + sqrt(15)/10``.
    """
    A = np.array([
        [5.0 / 36.0, 2.0 / 9.0 - _S15 / 15.0, 5.0 / 36.0 - _S15 / 30.0],
        [5.0 / 36.0 + _S15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - _S15 / 24.0],
        [5.0 / 36.0 + _S15 / 30.0, 2.0 / 9.0 + _S15 / 15.0, 5.0 / 36.0],
    ])
    b = np.array([5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0])
    c = np.array([0.5 - _S15 / 10.0, 0.5, 0.5 + _S15 / 10.0])
    return GaussLegendreTableau(A, b, c)


TABLEAU = gauss_legendre3()


def order_condition_residuals(tab=TABLEAU):
    """Residuals of the simplifying assumptions B(6), C(3), D(3).

    Together these imply order 6 for a 3-stage method. Returns a dict of
    maximum absolute residuals.
    """
    A, b, c = tab.A, tab.b, tab.c
    res = {}
    res["B"] = max(abs(b @ c ** (k - 1) - 1.0 / k) for k in range(1, 7))
    res["C"] = max(np.max(np.abs(A @ c ** (q - 1) - c ** q / q)) for q in range(1, 4))
    res["D"] = max(
        np.max(np.abs((b * c ** (q - 1)) @ A - b * (1.0 - c ** q) / q)) for q in range(1, 4)
    )
    res["row_sums"] = float(np.max(np.abs(A.sum(axis=1) - c)))
    return res


@dataclass
class NewtonSettings:
    """Stage solver and step-size controller settings."""

    tol: float = 1e-13
    max_iter: int = 30
    fd_rel: float = 1e-7
    step_tol: float = 1e-10
    dt0: float | None = None
    dt_min: float | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.step_tol > 0:
            raise ValueError("step_tol must be positive")


class NewtonFailure(RuntimeError):
    """Stage iteration did not converge; the caller should shrink the step."""


def fd_jacobian(f, v, rel=1e-7):
    """Forward-difference Jacobian of ``f`` at ``v``."""
    v = np.asarray(v, dtype=float)
    f0 = f(v)
    jac = np.empty((f0.size, v.size))
    for j in range(v.size):
        h = rel * max(abs(v[j]), 1.0)
        # keep alpha1 inside (0, 1)
        if j == 4 and v[j] + h >= 1.0:
            h = -h
        vp = v.copy()
        vp[j] += h
        jac[:, j] = (f(vp) - f0) / h
    return jac


def rkgl3_step(v_n, dt, params, settings=None, jac=None):
    """One Gauss-Legendre step of the relaxation ODE.

    Returns ``(v_next, newton_iterations)``.

    Raises
    ------
    NewtonFailure
        If the stage residual does not drop below ``settings.tol`` or an
        iterate leaves the admissible set.
    """
    settings = settings or NewtonSettings()
    v_n = np.asarray(v_n, dtype=float)
    if not dt > 0:
        raise ValueError("dt must be positive")
    A, b = TABLEAU.A, TABLEAU.b
    f = lambda v: source_rhs(v, params)  # noqa: E731
    if jac is None:
        jac = fd_jacobian(f, v_n, settings.fd_rel)
    n = v_n.size
    M = np.eye(3 * n) - dt * np.kron(A, jac)
    z = np.zeros((3, n))
    scale = np.abs(v_n) + 1e-300
    for it in range(1, settings.max_iter + 1):
        with np.errstate(all="ignore"):
            fz = np.array([f(v_n + z[i]) for i in range(3)])
        if not np.all(np.isfinite(fz)):
            raise NewtonFailure("non-finite stage derivative")
        g = z - dt * (A @ fz)
        dz = np.linalg.solve(M, -g.ravel()).reshape(3, n)
        z = z + dz
        if np.max(np.abs(dz) / (scale + np.abs(z))) <= settings.tol:
            break
    else:
        raise NewtonFailure(f"stage iteration stalled after {settings.max_iter} iterations")
    # recover the update from the stage increments, z = dt*A*F  =>  dt*F = A^-1 z
    v_next = v_n + b @ np.linalg.solve(A, z)
    if not admissible(v_next, params)[0]:
        raise NewtonFailure("inadmissible update")
    return v_next, it


def rkgl3_integrate(v_0, t0, t_end, params, settings=None):
    """Adaptive Gauss-Legendre march controlled by step doubling.

    A step of size ``h`` is compared with two steps of ``h/2``; it is
    accepted when the componentwise relative difference is below
    ``settings.step_tol``. The more accurate two-half-step result is kept.

    Raises
    ------
    RelaxationError
        If the step size underflows ``dt_min``.
    """
    settings = settings or NewtonSettings()
    v = np.asarray(v_0, dtype=float).reshape(5).copy()
    ok, why = admissible(v, params)
    if not ok:
        raise InadmissibleStateError(f"initial state not admissible: {why}", "v_0")
    span = t_end - t0
    if not span > 0:
        raise ValueError("t_end must exceed t0")
    dt = settings.dt0 if settings.dt0 is not None else 1e-6 * span
    dt_min = settings.dt_min if settings.dt_min is not None else 1e-18 * span
    tol = settings.step_tol
    f = lambda x: source_rhs(x, params)  # noqa: E731

    t = t0
    times, states, dts, its, errs = [t0], [v.copy()], [], [], []
    rejected = 0
    while t < t_end:
        last = dt >= t_end - t
        h = t_end - t if last else dt
        jac = fd_jacobian(f, v, settings.fd_rel)
        try:
            full, n1 = rkgl3_step(v, h, params, settings, jac)
            half, n2 = rkgl3_step(v, 0.5 * h, params, settings, jac)
            half, n3 = rkgl3_step(half, 0.5 * h, params, settings)
            err = float(np.max(np.abs(full - half) / (np.abs(half) + 1e-300)))
        except NewtonFailure:
            err = math.inf
        if not err <= tol:
            rejected += 1
            dt = 0.5 * h
            if dt < dt_min:
                raise RelaxationError(f"reference step {dt:.3e} s below minimum at t = {t:.6e} s",
                                      state=v, time=t)
            continue
        v = half
        t = t_end if last else t + h
        times.append(t)
        states.append(v.copy())
        dts.append(h)
        its.append(n1 + n2 + n3)
        errs.append(err)
        grow = 2.0 if err == 0 else min(2.0, 0.9 * (tol / err) ** (1.0 / 7.0))
        dt = h * max(grow, 0.2)
    return Trajectory(np.array(times), np.array(states), np.array(dts), np.array(its),
                      np.array(errs), rejected, {"step_doubling": rejected} if rejected else {})


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    degenerate: bool


def fit_order(step_sizes, errors, noise=1e-14):
    """Least-squares slope of ``log(error)`` against ``log(step)``.

    The fit is flagged ``degenerate`` (slope NaN) when every error sits at
    or below ``noise``.
    """
    h = np.asarray(step_sizes, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.size < 2 or h.size != e.size:
        raise ValueError("need matching step sizes and errors, at least two of each")
    if np.all(e <= noise):
        return OrderFit(math.nan, math.nan, True)
    keep = e > 0
    slope, intercept = np.polyfit(np.log(h[keep]), np.log(e[keep]), 1)
    return OrderFit(float(slope), float(intercept), False)


def observed_order(advance, exact, step_sizes, noise=1e-14):
    """Observed convergence order of a one-parameter family of solvers.

    ``advance(h)`` returns the approximate solution obtained with step
    ``h`` and ``exact`` the reference value; the error is the maximum
    componentwise relative deviation.
    """
    exact = np.asarray(exact, dtype=float)
    errs = []
    for h in step_sizes:
        approx = np.asarray(advance(h), dtype=float)
        errs.append(float(np.max(np.abs(approx - exact) / np.maximum(np.abs(exact), 1e-300))))
    return fit_order(step_sizes, errs, noise), np.array(errs)
