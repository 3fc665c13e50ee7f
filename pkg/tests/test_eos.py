import math

import numpy as np
import pytest

from bnrelax.eos import (
    EosPhase,
    InadmissibleStateError,
    OdeParams,
    PrimitiveState,
    cons_to_prim,
    interface_state,
    interface_weights,
    phase_internal_energy,
    prim_to_cons,
    sound_speed,
)


def test_eos_derived_constants():
    e = EosPhase(2.35, 4.0e8)
    assert e.ka == pytest.approx(1 / 1.35, rel=1e-15)
    assert e.kb == pytest.approx(2.35 * 4.0e8 / 1.35, rel=1e-15)


@pytest.mark.parametrize("gamma,pi", [(1.0, 0.0), (0.5, 0.0), (1.4, -1.0)])
def test_eos_rejects_invalid_constants(gamma, pi):
    with pytest.raises(ValueError):
        EosPhase(gamma, pi)


@pytest.mark.parametrize("p,gamma,pi,expected", [
    (0.0, 1.4, 0.0, 0.0),
    (1.0, 2.0, 2.0, 5.0),
    (1e8, 2.35, 4e8, (1e8 + 2.35 * 4e8) / 1.35),
])
def test_phase_internal_energy(p, gamma, pi, expected):
    assert phase_internal_energy(p, EosPhase(gamma, pi)) == pytest.approx(expected, rel=1e-14, abs=0)


def test_internal_energy_sign_tracks_admissibility():
    e = EosPhase(2.0, 2.0)
    assert phase_internal_energy(-3.9, e) > 0
    assert phase_internal_energy(-4.1, e) < 0


def test_pressure_inverts_internal_energy():
    e = EosPhase(2.35, 4e8)
    p = np.array([-3e8, 1e5, 1e8])
    assert np.allclose(e.pressure(phase_internal_energy(p, e)), p, rtol=1e-13, atol=1e-6)


@pytest.mark.parametrize("rho,p,gamma,pi,expected", [
    (1.4, 1.0, 1.4, 0.0, 1.0),
    (1.0, 1.0, 2.0, 2.0, math.sqrt(6.0)),
])
def test_sound_speed(rho, p, gamma, pi, expected):
    assert sound_speed(rho, p, EosPhase(gamma, pi)) == pytest.approx(expected, rel=1e-15)


def test_sound_speed_inadmissible():
    e = EosPhase(2.0, 2.0)
    with pytest.raises(InadmissibleStateError):
        sound_speed(1.0, -2.0, e)
    with pytest.raises(InadmissibleStateError):
        sound_speed(np.array([1.0, 0.0]), np.array([1.0, 1.0]), e)


def test_prim_to_cons_rest_state_has_no_momentum():
    q = prim_to_cons([0.3, 1.0, 2.0, 0.0, 0.0, 1e5, 1e5], EosPhase(1.4, 0), EosPhase(2.0, 1e3))
    assert q[2] == 0.0 and q[3] == 0.0


def test_prim_to_cons_rp3_left_partial_density():
    q = prim_to_cons([0.55, 1.0, 0.2, 0.0, 0.0, 1.0, 1.0], EosPhase(2.0, 2.0), EosPhase(1.4, 0.0))
    assert q[0] == pytest.approx(0.55, rel=1e-15)
    assert q[1] == pytest.approx(0.45 * 0.2, rel=1e-15)
    # a1 * rhoe1 = 0.55 * (1 + 4) / 1
    assert q[4] == pytest.approx(0.55 * 5.0, rel=1e-15)


def _random_primitive(rng, n):
    return np.stack([
        rng.uniform(1e-6, 1 - 1e-6, n), rng.uniform(100, 1000, n), rng.uniform(0.1, 10, n),
        rng.uniform(-500, 500, n), rng.uniform(-500, 500, n),
        10 ** rng.uniform(3, 9, n), 10 ** rng.uniform(3, 9, n),
    ])


def _pressure_scale(w, e, rho, u, p):
    # p is recovered from the total phase energy, so its absolute error is
    # bounded by (gamma - 1) times that energy, not by |p|
    return np.abs(w[p]) + e.gamma * e.pi_inf + (e.gamma - 1) * 0.5 * w[rho] * w[u] ** 2


@pytest.mark.parametrize("e1,e2", [
    (EosPhase(1.4, 0.0), EosPhase(1.025, 0.0)),
    (EosPhase(2.35, 4e8), EosPhase(1.025, 0.0)),
    (EosPhase(6.0, 100.0), EosPhase(1.4, 0.0)),
])
def test_round_trip_random_states(e1, e2):
    rng = np.random.default_rng(1)
    w = _random_primitive(rng, 500)
    back = cons_to_prim(prim_to_cons(w, e1, e2), e1, e2)
    exact = [0, 1, 2, 3, 4]
    assert np.max(np.abs(back[exact] - w[exact]) / np.abs(w[exact])) <= 1e-12
    assert np.max(np.abs(back[5] - w[5]) / _pressure_scale(w, e1, 1, 3, 5)) <= 1e-12
    assert np.max(np.abs(back[6] - w[6]) / _pressure_scale(w, e2, 2, 4, 6)) <= 1e-12


def test_round_trip_at_rest_is_relative():
    rng = np.random.default_rng(4)
    e1, e2 = EosPhase(1.4, 0.0), EosPhase(2.0, 2.0)
    w = _random_primitive(rng, 500)
    w[3:5] = 0.0
    w[5:7] = 10 ** rng.uniform(0, 6, (2, 500))
    back = cons_to_prim(prim_to_cons(w, e1, e2), e1, e2)
    nz = [0, 1, 2, 5, 6]
    assert np.max(np.abs(back[nz] - w[nz]) / np.abs(w[nz])) <= 1e-12
    assert np.all(back[3:5] == 0.0)


@pytest.mark.parametrize("index,value,component", [
    (0, 0.0, "alpha1_rho1"), (1, -1.0, "alpha2_rho2"), (6, 1.0, "alpha1"),
])
def test_cons_to_prim_names_bad_component(index, value, component):
    e1, e2 = EosPhase(1.4, 0.0), EosPhase(1.4, 0.0)
    q = prim_to_cons([0.5, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0], e1, e2)
    q[index] = value
    with pytest.raises(InadmissibleStateError) as info:
        cons_to_prim(q, e1, e2)
    assert info.value.component == component


def test_cons_to_prim_negative_internal_energy():
    e1, e2 = EosPhase(1.4, 0.0), EosPhase(1.4, 0.0)
    q = prim_to_cons([0.5, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0], e1, e2)
    q[2] = 10.0  # kinetic energy exceeds total energy
    with pytest.raises(InadmissibleStateError) as info:
        cons_to_prim(q, e1, e2)
    assert info.value.component == "internal_energy1"


def test_simple_closure():
    p_i, w1 = interface_weights(3.0, 7.0, 1.0, 1.0, EosPhase(1.4, 0), EosPhase(1.4, 0))
    assert p_i == 7.0 and w1 == 1.0


def test_impedance_closure_arithmetic():
    e1, e2 = EosPhase(2.0, 2.0), EosPhase(1.4, 0.0)
    rho1, rho2, p1, p2 = 1.0, 0.2, 1.0, 2.0
    z1 = rho1 * math.sqrt(2.0 * 3.0 / rho1)
    z2 = rho2 * math.sqrt(1.4 * 2.0 / rho2)
    p_i, w1 = interface_weights(p1, p2, rho1, rho2, e1, e2, "impedance", "impedance")
    assert p_i == pytest.approx((z2 * p1 + z1 * p2) / (z1 + z2), rel=1e-15)
    assert w1 == pytest.approx(z1 / (z1 + z2), rel=1e-15)


def test_impedance_closure_equal_pressures():
    e1, e2 = EosPhase(2.35, 4e8), EosPhase(1.025, 0.0)
    p_i, _ = interface_weights(1e5, 1e5, 500.0, 2.0, e1, e2, "impedance")
    assert p_i == pytest.approx(1e5, rel=1e-15)


def test_interface_state_uses_frozen_partial_densities():
    params = OdeParams(1.0, 4.0, EosPhase(2.0, 2.0), EosPhase(1.4, 0.0), 1.0, 1.0, "impedance", "u2")
    v = PrimitiveState(1.0, -2.0, 1.0, 2.0, 0.25)
    p_i, u_i = interface_state(v, params)
    ref = interface_weights(1.0, 2.0, 4.0, 4.0 / 0.75, params.eos1, params.eos2, "impedance")[0]
    assert p_i == pytest.approx(ref, rel=1e-15)
    assert u_i == -2.0


def test_ode_params_validation():
    e = EosPhase(1.4, 0.0)
    with pytest.raises(ValueError):
        OdeParams(0.0, 1.0, e, e)
    with pytest.raises(ValueError):
        OdeParams(1.0, 1.0, e, e, lambda_fric=-1.0)
    with pytest.raises(ValueError):
        OdeParams(1.0, 1.0, e, e, interface_closure="mean")
