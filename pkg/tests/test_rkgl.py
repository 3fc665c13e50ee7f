import math

import numpy as np
import pytest

from bnrelax.eos import EosPhase, OdeParams, PrimitiveState
from bnrelax.relaxation import mixture_momentum, source_rhs, velocity_exact
from bnrelax.rkgl import (
    TABLEAU,
    NewtonSettings,
    fit_order,
    observed_order,
    order_condition_residuals,
    rkgl3_integrate,
    rkgl3_step,
)


def test_tableau_order_conditions():
    res = order_condition_residuals()
    assert max(res.values()) <= 1e-14
    assert abs(TABLEAU.b.sum() - 1.0) <= 1e-15


def test_nodes_are_shifted_legendre_roots():
    # P3 on [0, 1]: 20c^3 - 30c^2 + 12c - 1
    c = TABLEAU.c
    assert np.max(np.abs(20 * c ** 3 - 30 * c ** 2 + 12 * c - 1)) <= 1e-14


def test_zero_source_leaves_state_unchanged():
    params = OdeParams(1.0, 4.0, EosPhase(6.0, 0.0), EosPhase(1.4, 0.0), 0.0, 0.0)
    v = np.array([-5.0, 5.0, 0.1, 20.0, 0.9])
    out, _ = rkgl3_step(v, 1e-3, params)
    assert np.array_equal(out, v)


def _velocity_problem():
    params = OdeParams(1.0, 4.0, EosPhase(6.0, 0.0), EosPhase(1.4, 0.0), 1e6, 0.0)
    return params, 1e6 * 1.25, np.array([-5.0, 5.0, 0.1, 20.0, 0.9])


@pytest.mark.parametrize("kdt", [1e-3, 1e-2, 0.05])
def test_velocity_step_matches_closed_form(kdt):
    params, k, v = _velocity_problem()
    out, _ = rkgl3_step(v, kdt / k, params)
    u1, u2 = velocity_exact(v, params, kdt / k)
    assert abs(out[0] - u1) / abs(u1) <= 1e-12 and abs(out[1] - u2) / abs(u2) <= 1e-12


@pytest.mark.parametrize("kdt", [0.1, 0.5, 1.0, 2.0])
def test_velocity_step_error_is_pade_constant(kdt):
    """One step damps u1 - u2 by the (3,3) Pade approximant of exp(-z), error ~ z^7/100800."""
    params, k, v = _velocity_problem()
    out, _ = rkgl3_step(v, kdt / k, params)
    u1, u2 = velocity_exact(v, params, kdt / k)
    err = abs((out[0] - out[1]) - (u1 - u2)) / abs(u1 - u2)
    pade = kdt ** 7 / 100800
    assert 0.5 * pade <= err <= 1.5 * pade + 1e-12


def _rk4(v, dt, params):
    f = lambda x: source_rhs(x, params)  # noqa: E731
    k1 = f(v)
    k2 = f(v + 0.5 * dt * k1)
    k3 = f(v + 0.5 * dt * k2)
    k4 = f(v + dt * k3)
    return v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def test_a1_tiny_step_agrees_with_rk4(a1):
    v = np.asarray(a1.v0)
    out, _ = rkgl3_step(v, 1e-12, a1.params)
    ref = _rk4(v, 1e-12, a1.params)
    assert np.max(np.abs(out - ref) / np.abs(ref)) <= 1e-10


def test_a_stability_smoke():
    # du/dt = -k (u1 - u2)/m1 with k*dt = 1e6 stays bounded
    params = OdeParams(1.0, 1e12, EosPhase(1.4, 0.0), EosPhase(1.4, 0.0), 1.0, 0.0)
    v = np.array([1.0, 0.0, 1.0, 1.0, 0.5])
    out, _ = rkgl3_step(v, 1e6, params)
    assert abs(out[0] - out[1]) < abs(v[0] - v[1])


def test_a1_reaches_momentum_equilibrium(a1):
    traj = rkgl3_integrate(a1.v0, 0.0, a1.t_end, a1.params)
    u1, u2 = traj.states[-1][:2]
    assert u1 == pytest.approx(3.0, rel=1e-8) and u2 == pytest.approx(3.0, rel=1e-8)
    m0 = mixture_momentum(a1.v0, a1.params)
    drift = np.abs(mixture_momentum(traj.states.T, a1.params) - m0) / abs(m0)
    assert drift.max() <= 1e-10


def test_a2_reaches_pressure_equilibrium(a2):
    traj = rkgl3_integrate(a2.v0, 0.0, a2.t_end, a2.params)
    p1, p2 = traj.states[-1][2:4]
    assert abs(p1 - p2) / (p1 + p2) <= 1e-6


def test_equilibrium_trajectory_is_constant(a1):
    v = PrimitiveState(3.0, 3.0, 7.0, 7.0, 0.4)
    traj = rkgl3_integrate(v, 0.0, 1e-3, a1.params)
    assert np.all(traj.states == np.asarray(v))


def test_velocity_subsystem_observed_order_six():
    params = OdeParams(1.0, 4.0, EosPhase(6.0, 0.0), EosPhase(1.4, 0.0), 1e6, 0.0)
    v0 = np.array([-5.0, 5.0, 0.1, 20.0, 0.9])
    t_end = 4e-6
    exact = velocity_exact(v0, params, t_end)

    def advance(h):
        v = v0.copy()
        for _ in range(int(round(t_end / h))):
            v, _ = rkgl3_step(v, h, params)
        return v[:2]

    fit, _ = observed_order(advance, exact, [t_end / n for n in (4, 5, 6, 8, 10)])
    assert not fit.degenerate and fit.slope >= 5.5


def test_exact_method_gives_degenerate_fit():
    params = OdeParams(1.0, 4.0, EosPhase(6.0, 0.0), EosPhase(1.4, 0.0), 1e6, 0.0)
    v0 = np.array([-5.0, 5.0, 0.1, 20.0, 0.9])
    exact = velocity_exact(v0, params, 1e-6)
    fit, errs = observed_order(lambda h: velocity_exact(v0, params, 1e-6), exact, [1e-7, 2e-7, 5e-7])
    assert fit.degenerate and math.isnan(fit.slope)
    assert np.all(errs == 0.0)


def test_fit_order_recovers_power_law():
    h = np.geomspace(1e-3, 1e-1, 7)
    fit = fit_order(h, 3.0 * h ** 2)
    assert fit.slope == pytest.approx(2.0, abs=1e-12)


def test_settings_validation():
    with pytest.raises(ValueError):
        NewtonSettings(tol=0.0)
