"""Named test problems: two relaxation ODE cases and three shock tubes.

Each preset is a flat ``{key: value}`` dict so that configuration files and
command-line flags can override single entries before the problem objects
are built with :func:`build_ode_problem` / :func:`build_riemann_problem`.
"""

from __future__ import annotations

from dataclasses import dataclass

from .eos import EosPhase, OdeParams, PrimitiveState
from .fv1d import RiemannProblem, TwoPhaseModel

ODE_PRESETS = {
    "A1": {
        "u1": -5.0, "u2": 5.0, "p1": 0.1, "p2": 20.0, "alpha1": 0.9,
        "m1": 1.0, "m2": 4.0, "gamma1": 6.0, "gamma2": 1.4, "pi1": 0.0, "pi2": 0.0,
        "lambda": 1e9, "nu": 10.0, "t_end": 1e-3,
        "closure": "simple", "velocity": "u1",
    },
    "A2": {
        "u1": 0.0, "u2": 0.0, "p1": 2.0e8, "p2": 1.0, "alpha1": 0.4,
        "m1": 780.0, "m2": 0.22, "gamma1": 6.0, "gamma2": 1.4, "pi1": 100.0, "pi2": 0.0,
        "lambda": 1e9, "nu": 10.0, "t_end": 1e-3,
        "closure": "simple", "velocity": "u1",
    },
}

_RP_COMMON = {"x_min": 0.0, "x_max": 1.0, "closure": "impedance", "velocity": "u1"}

RP_PRESETS = {
    "RP1": dict(_RP_COMMON, **{
        "alpha1_L": 1.0 - 1e-8, "rho1_L": 500.0, "rho2_L": 2.0, "u_L": 0.0, "p1_L": 1.0e8, "p2_L": 1.0e8,
        "alpha1_R": 1e-8, "rho1_R": 500.0, "rho2_R": 2.0, "u_R": 0.0, "p1_R": 1.0e5, "p2_R": 1.0e5,
        "x_jump": 0.75, "t_end": 473e-6,
        "gamma1": 2.35, "gamma2": 1.025, "pi1": 4.0e8, "pi2": 0.0,
        "lambda": 1e9, "nu": 1e20,
    }),
    "RP2": dict(_RP_COMMON, **{
        "alpha1_L": 0.99, "rho1_L": 1150.0, "rho2_L": 0.63, "u_L": -2.0, "p1_L": 1.0e5, "p2_L": 1.0e5,
        "alpha1_R": 0.99, "rho1_R": 1150.0, "rho2_R": 0.63, "u_R": 2.0, "p1_R": 1.0e5, "p2_R": 1.0e5,
        "x_jump": 0.5, "t_end": 3.2e-3,
        "gamma1": 2.35, "gamma2": 1.43, "pi1": 1.0e9, "pi2": 0.0,
        "lambda": 1e9, "nu": 1e20,
    }),
    "RP3": dict(_RP_COMMON, **{
        "alpha1_L": 0.55, "rho1_L": 1.0, "rho2_L": 0.2, "u_L": 0.0, "p1_L": 1.0, "p2_L": 1.0,
        "alpha1_R": 0.45, "rho1_R": 0.125, "rho2_R": 2.0, "u_R": 0.0, "p1_R": 0.1, "p2_R": 0.1,
        "x_jump": 0.6, "t_end": 0.15,
        "gamma1": 2.0, "gamma2": 1.4, "pi1": 2.0, "pi2": 0.0,
        # velocities stay equal without a velocity jump, so no friction is needed
        "lambda": 0.0, "nu": 1e20,
    }),
}

RP3_NU_SWEEP = (1e-8, 1e0, 1e20)

PRESETS = {**ODE_PRESETS, **RP_PRESETS}


def preset(name):
    """A fresh copy of the named preset dict."""
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PRESETS)}") from None


def is_ode(name):
    return name in ODE_PRESETS


@dataclass(frozen=True)
class OdeProblem:
    name: str
    v0: PrimitiveState
    params: OdeParams
    t_end: float


def build_ode_problem(name, values=None):
    """ODE problem from a preset name, optionally with overriding ``values``."""
    d = preset(name) if values is None else dict(values)
    eos1 = EosPhase(d["gamma1"], d["pi1"])
    eos2 = EosPhase(d["gamma2"], d["pi2"])
    params = OdeParams(d["m1"], d["m2"], eos1, eos2, d["lambda"], d["nu"], d["closure"], d["velocity"])
    v0 = PrimitiveState(d["u1"], d["u2"], d["p1"], d["p2"], d["alpha1"])
    return OdeProblem(name, v0, params, d["t_end"])


def build_riemann_problem(name, values=None):
    """Shock-tube problem from a preset name, optionally with overriding ``values``."""
    d = preset(name) if values is None else dict(values)
    model = TwoPhaseModel(EosPhase(d["gamma1"], d["pi1"]), EosPhase(d["gamma2"], d["pi2"]),
                          d["lambda"], d["nu"], d["closure"], d["velocity"])

    def side(s):
        return (d[f"alpha1_{s}"], d[f"rho1_{s}"], d[f"rho2_{s}"], d[f"u_{s}"], d[f"u_{s}"],
                d[f"p1_{s}"], d[f"p2_{s}"])

    if not d["x_min"] < d["x_jump"] < d["x_max"]:
        raise ValueError("x_jump must lie inside the domain")
    return RiemannProblem(name, side("L"), side("R"), d["x_jump"], d["t_end"], model, d["x_min"], d["x_max"])


def equilibrium_velocity(problem):
    """Momentum-weighted velocity the friction relaxes an ODE problem towards."""
    p = problem.params
    return float((p.m1 * problem.v0.u1 + p.m2 * problem.v0.u2) / (p.m1 + p.m2))


__all__ = ["ODE_PRESETS", "RP_PRESETS", "RP3_NU_SWEEP", "PRESETS", "OdeProblem", "preset", "is_ode",
           "build_ode_problem", "build_riemann_problem", "equilibrium_velocity"]
