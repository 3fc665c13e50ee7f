"""Acceptance criteria 1 to 10, one test each.

Every test records ``(ok, detail)`` in ``conftest.ACCEPTANCE`` before it
asserts, and the session summary prints one PASS/FAIL line per criterion.
Run standalone with ``python tests/test_acceptance.py``.
"""

import json
import sys
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE, mirror_error, random_params, random_state, shock_tube

from bnrelax.cli import main
from bnrelax.eos import EosPhase, OdeParams, PrimitiveState
from bnrelax.fv1d import l1_difference, pressure_disequilibrium
from bnrelax.problems import build_ode_problem
from bnrelax.relaxation import (
    Accepted,
    Rejected,
    SolverConfig,
    admissible,
    attempt_step,
    build_linear_operator,
    coeff_vector,
    exact_linear_solution,
    integrate,
    mixture_momentum,
    velocity_exact,
)
from bnrelax.rkgl import observed_order, order_condition_residuals, rkgl3_step

COMPONENTS = ("u1", "u2", "p1", "p2", "alpha1")


def record(number, checks):
    """``checks`` maps a label to ``(ok, text)``; returns the combined verdict."""
    ok = all(c for c, _ in checks.values())
    detail = "; ".join(f"{k} {t}{'' if c else ' [FAIL]'}" for k, (c, t) in checks.items())
    ACCEPTANCE[number] = (ok, detail)
    return ok, detail


def cli_report(out_dir, *args):
    code = main([*args, "--out-dir", str(out_dir), "--quiet"])
    assert code == 0, f"exit code {code}"
    problem, command = args[args.index("--problem") + 1], args[0]
    return json.loads((out_dir / f"{problem}_{command}_report.json").read_text())


@pytest.fixture(scope="module")
def out(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


# 1-4: relaxation ODE ----------------------------------------------------------------


def test_criterion_01_a1_step_counts(out):
    fine = cli_report(out / "fine", "ode", "--problem", "A1", "--delta-max", "0.5")
    coarse = cli_report(out / "coarse", "ode", "--problem", "A1", "--delta-max", "100")
    checks = {
        "delta 0.5": (10 <= fine["accepted_steps"] <= 30, f"{fine['accepted_steps']} steps (10 to 30)"),
        "delta 100": (coarse["accepted_steps"] <= 8, f"{coarse['accepted_steps']} steps (<= 8)"),
        "runtime": (max(fine["wall_time_s"], coarse["wall_time_s"]) < 1.0,
                    f"{fine['wall_time_s']:.3f} s and {coarse['wall_time_s']:.3f} s (< 1 s)"),
    }
    ok, detail = record(1, checks)
    assert ok, detail


def test_criterion_02_a2_step_count(out):
    rep = cli_report(out / "a2", "ode", "--problem", "A2", "--delta-max", "1.1")
    checks = {
        "delta 1.1": (6 <= rep["accepted_steps"] <= 22, f"{rep['accepted_steps']} steps (6 to 22)"),
        "runtime": (rep["wall_time_s"] < 1.0, f"{rep['wall_time_s']:.3f} s (< 1 s)"),
    }
    ok, detail = record(2, checks)
    assert ok, detail


def test_criterion_03_oracle_agreement(out):
    checks = {}
    for delta, tol in (("0.5", 0.01), ("100", 0.10)):
        rep = cli_report(out / f"oracle{delta}", "ode", "--problem", "A1", "--delta-max", delta, "--oracle")
        errs = rep["oracle"]["relative_error"]
        worst = max(errs, key=errs.get)
        checks[f"delta {delta}"] = (all(errs[c] <= tol for c in COMPONENTS),
                                    f"max rel err {errs[worst]:.2e} in {worst} (<= {tol:g})")
    ok, detail = record(3, checks)
    assert ok, detail


def test_criterion_04_convergence_order(out):
    rep = cli_report(out / "conv", "convergence", "--problem", "A1")
    slopes = rep["slopes"]
    checks = {
        c: (slopes[c] is not None and slopes[c] >= 1.9, f"slope {slopes[c]:.3f} (>= 1.9)")
        for c in ("p1", "alpha1")
    }
    checks["runs"] = (rep["runs"] == 40, f"{rep['runs']} runs")
    checks["runtime"] = (rep["wall_time_s"] < 30.0, f"{rep['wall_time_s']:.2f} s (< 30 s)")
    ok, detail = record(4, checks)
    assert ok, detail


# 5-6: structural properties of the relaxation step -------------------------------------


def _trajectories():
    a1, a2 = build_ode_problem("A1"), build_ode_problem("A2")
    runs = [(a1.v0, a1.t_end, a1.params, d) for d in (0.5, 100.0)] + [(a2.v0, a2.t_end, a2.params, 1.1)]
    rng = np.random.default_rng(2024)
    for _ in range(20):
        runs.append((random_state(rng), 2.0, random_params(rng), 0.5))
    for v0, t_end, params, delta in runs:
        yield integrate(v0, 0.0, t_end, params, SolverConfig(delta_max=delta)), v0, params


def test_criterion_05_exact_velocity_subsystem():
    vel_err, mom_err = 0.0, 0.0
    for traj, v0, params in _trajectories():
        u_exact = np.array(velocity_exact(v0, params, traj.times))
        u = traj.states[:, :2].T
        vel_err = max(vel_err, float(np.max(np.abs(u - u_exact) / np.maximum(np.abs(u_exact), 1e-300))))
        m = mixture_momentum(traj.states.T, params)
        scale = params.m1 * np.abs(u[0]) + params.m2 * np.abs(u[1])
        scale = max(float(scale.max()), abs(mixture_momentum(v0, params)))
        drift = np.abs(m - mixture_momentum(v0, params))
        mom_err = max(mom_err, 0.0 if scale == 0 and not drift.any() else float(drift.max() / scale))
    checks = {
        "velocities vs closed form": (vel_err <= 1e-12, f"max rel err {vel_err:.1e} (<= 1e-12)"),
        "momentum": (mom_err <= 1e-12, f"max rel drift {mom_err:.1e} (<= 1e-12)"),
    }
    ok, detail = record(5, checks)
    assert ok, detail


def _residual_ratio(rng):
    """Central-difference derivative of the exact affine solution vs the affine RHS at h and h/2."""
    params = random_params(rng)
    v_star, v_n = np.asarray(random_state(rng)), np.asarray(random_state(rng))
    op = build_linear_operator(v_star, params)
    tau = 0.5 / float(op.k_vel + op.kp1 + op.kp2)

    def residual(h):
        deriv = (exact_linear_solution(op, v_n, params, tau + h)
                 - exact_linear_solution(op, v_n, params, tau - h)) / (2 * h)
        rhs = op.rhs(exact_linear_solution(op, v_n, params, tau))
        return float(np.max(np.abs(deriv - rhs)) / np.max(np.abs(rhs)))

    return residual(2e-2 * tau) / residual(1e-2 * tau)


def test_criterion_06_property_suite():
    rng = np.random.default_rng(6)
    checks = {}

    fixed = True
    for _ in range(50):
        params = random_params(rng)
        u, p = rng.uniform(-1, 1), rng.uniform(0.5, 5.0)
        v = PrimitiveState(u, u, p, p, rng.uniform(0.1, 0.9))
        out = attempt_step(v, coeff_vector(v, params), rng.uniform(0.1, 10.0), params, SolverConfig())
        traj = integrate(v, 0.0, 5.0, params)
        fixed &= isinstance(out, Accepted) and tuple(out.state) == tuple(v)
        fixed &= bool(np.all(traj.states == np.asarray(v)))
    checks["equilibrium fixed point"] = (fixed, "exact on 50 random states")

    n_states, bad = 0, 0
    for traj, _, params in _trajectories():
        for s in traj.states:
            n_states += 1
            bad += not admissible(s, params)[0]
    checks["admissible"] = (bad == 0, f"{n_states - bad}/{n_states} accepted states")

    halved, rejected = True, 0
    a1 = build_ode_problem("A1")
    c0 = coeff_vector(a1.v0, a1.params)
    for dt in (1.0, 1e-3, 3.7e-5, 1e-6):
        out = attempt_step(a1.v0, c0, dt, a1.params, SolverConfig(delta_max=0.5))
        if isinstance(out, Rejected):
            rejected += 1
            halved &= out.dt_retry == 0.5 * dt
    checks["rejection halves"] = (halved and rejected > 0, f"{rejected} rejections, retry = dt/2 exactly")

    ratios = np.array([_residual_ratio(rng) for _ in range(100)])
    checks["residual O(h^2)"] = (bool(np.all((ratios > 3.5) & (ratios < 4.5))),
                                 f"halving ratio {ratios.min():.4f} to {ratios.max():.4f} on 100 states (4 expected)")
    ok, detail = record(6, checks)
    assert ok, detail


# 7-9: shock tubes -----------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_07_rp1_equilibrium_and_mesh_convergence():
    runs = {n: shock_tube("RP1", n) for n in (2000, 4000, 20000)}
    diseq = float(np.max(pressure_disequilibrium(runs[2000].w)))
    ref = runs[20000]
    l1 = {n: l1_difference(runs[n].x, runs[n].w[0], ref.x, ref.w[0]) for n in (2000, 4000)}
    checks = {
        "equilibrium": (diseq <= 1e-6, f"max |p1-p2|/(|p1|+|p2|) {diseq:.1e} at 2000 cells (<= 1e-6)"),
        "L1 alpha1 vs 20000": (l1[2000] > l1[4000], f"{l1[2000]:.3e} (2000) > {l1[4000]:.3e} (4000)"),
        "runtime 2000": (runs[2000].wall <= 120.0, f"{runs[2000].wall:.0f} s (<= 120 s)"),
        "runtime 20000": (ref.wall <= 1800.0, f"{ref.wall:.0f} s (<= 1800 s)"),
    }
    ok, detail = record(7, checks)
    assert ok, detail


@pytest.mark.slow
def test_criterion_08_rp2_symmetry_and_rarefactions():
    checks = {}
    for riemann in ("rusanov", "hll"):
        r = shock_tube("RP2", 2000, riemann)
        sym = max(max(mirror_error(r.w[k]) for k in (0, 1, 2, 5, 6)),
                  max(mirror_error(r.w[k], odd=True) for k in (3, 4)))
        diseq = float(np.max(pressure_disequilibrium(r.w)))
        mid = len(r.x) // 2
        u = r.w[3]
        p_centre = 0.5 * (r.p_mix[mid - 1] + r.p_mix[mid])
        checks[riemann] = (
            sym <= 1e-8 and diseq <= 1e-6 and u[mid - 1] < 0.0 < u[mid] and p_centre < 1e5,
            f"mirror {sym:.1e} (<= 1e-8), diseq {diseq:.1e} (<= 1e-6), "
            f"u1 {u[mid - 1]:.3f} | {u[mid]:.3f}, p centre {p_centre:.4g} Pa (< 1e5)",
        )
    ok, detail = record(8, checks)
    assert ok, detail


@pytest.mark.slow
def test_criterion_09_rp3_nu_sweep():
    sweep = (1e-8, 1.0, 1e20)
    runs = {nu: shock_tube("RP3", 2000, nu=nu) for nu in (0.0, *sweep)}
    gap = [float(np.max(np.abs(runs[nu].w[5] - runs[nu].w[6]))) for nu in sweep]
    base, weak = runs[0.0].w, runs[1e-8].w
    match = max(float(np.max(np.abs(weak[k] - base[k])) / np.max(np.abs(base[k]))) for k in range(7))
    stiff = float(np.max(pressure_disequilibrium(runs[1e20].w)))
    checks = {
        "ordering": (gap[0] > gap[1] > gap[2], " > ".join(f"{g:.3e}" for g in gap)),
        "nu 1e-8 vs 0": (match <= 1e-3, f"max rel diff {match:.1e} (<= 1e-3)"),
        "nu 1e20": (stiff <= 1e-6, f"diseq {stiff:.1e} (<= 1e-6)"),
    }
    ok, detail = record(9, checks)
    assert ok, detail


# 10: reference integrator ------------------------------------------------------------


def test_criterion_10_rkgl3_self_test():
    # smooth and non-stiff: k_vel * t_end = 5 spread over 4 to 10 steps, pressure relaxation active
    params = OdeParams(1.0, 4.0, EosPhase(6.0, 0.0), EosPhase(1.4, 0.0), 1e6, 1e3)
    v0 = np.array([-5.0, 5.0, 0.1, 20.0, 0.9])
    t_end = 4e-6

    def advance(h):
        v = v0.copy()
        for _ in range(int(round(t_end / h))):
            v, _ = rkgl3_step(v, h, params)
        return v[:2]

    fit, _ = observed_order(advance, velocity_exact(v0, params, t_end), [t_end / n for n in (4, 5, 6, 8, 10)])
    worst = max(order_condition_residuals().values())
    checks = {
        "observed order": (not fit.degenerate and fit.slope >= 5.5, f"{fit.slope:.2f} (>= 5.5)"),
        "tableau": (worst <= 1e-14, f"max order-condition residual {worst:.1e} (<= 1e-14)"),
    }
    ok, detail = record(10, checks)
    assert ok, detail


if __name__ == "__main__":
    start = time.perf_counter()
    code = pytest.main([__file__, "-v", "-p", "no:cacheprovider"])
    print(f"acceptance suite finished in {time.perf_counter() - start:.0f} s")
    sys.exit(code)
