"""Shared fixtures: preset problems and cached shock-tube runs."""

import time

import numpy as np
import pytest

from bnrelax.eos import EosPhase, OdeParams, PrimitiveState
from bnrelax.fv1d import HyperbolicConfig, run_riemann_problem
from bnrelax.problems import build_ode_problem, build_riemann_problem, preset

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def a1():
    return build_ode_problem("A1")


@pytest.fixture(scope="session")
def a2():
    return build_ode_problem("A2")


def random_params(rng, lam=None, nu=None, closure="simple", velocity="u1"):
    """Moderately stiff random parameters with O(1) rates."""
    e1 = EosPhase(rng.uniform(1.2, 6.0), rng.uniform(0.0, 2.0))
    e2 = EosPhase(rng.uniform(1.1, 3.0), rng.uniform(0.0, 1.0))
    return OdeParams(rng.uniform(0.5, 5.0), rng.uniform(0.5, 5.0), e1, e2,
                     rng.uniform(0.0, 5.0) if lam is None else lam,
                     rng.uniform(0.0, 1.0) if nu is None else nu, closure, velocity)


def random_state(rng):
    return PrimitiveState(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 5.0),
                          rng.uniform(0.5, 5.0), rng.uniform(0.1, 0.9))


class Run:
    """A finished shock-tube run with its wall time."""

    def __init__(self, name, cells, riemann="hllem", nu=None):
        values = preset(name)
        if nu is not None:
            values["nu"] = nu
        self.problem = build_riemann_problem(name, values)
        start = time.perf_counter()
        self.result = run_riemann_problem(self.problem, cells, HyperbolicConfig(riemann=riemann))
        self.wall = time.perf_counter() - start
        snap = self.result.snapshots[-1]
        self.x = snap.x
        self.w = snap.primitive
        self.p_mix = snap.p_mix
        self.time = snap.time


_RUNS = {}


def shock_tube(name, cells, riemann="hllem", nu=None):
    """Run once per session and share between modules."""
    key = (name, cells, riemann, nu)
    if key not in _RUNS:
        _RUNS[key] = Run(name, cells, riemann, nu)
    return _RUNS[key]


def mirror_error(values, odd=False):
    """``max |f(x) -+ f(1 - x)|`` relative to ``max |f|``."""
    values = np.asarray(values)
    flipped = -values[::-1] if odd else values[::-1]
    return float(np.max(np.abs(values - flipped)) / np.max(np.abs(values)))
