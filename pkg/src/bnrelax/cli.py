"""``bnrelax`` command line: ODE runs, the step-size convergence study and shock tubes.

Configuration is resolved in three layers, later ones winning: the named
preset, an optional flat ``key = value`` file (``--config``) and explicit
flags. The resolved configuration is written next to the outputs so that a
run can be repeated exactly.

Exit codes: 0 success, 1 configuration error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import collections
import csv
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .eos import InadmissibleStateError
from .fv1d import FiniteVolumeError, HyperbolicConfig, pressure_disequilibrium, run_riemann_problem
from .problems import ODE_PRESETS, RP_PRESETS, build_ode_problem, build_riemann_problem, is_ode, preset
from .relaxation import RelaxationError, SolverConfig, integrate, integrate_fixed
from .rkgl import NewtonFailure, NewtonSettings, fit_order, rkgl3_integrate

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2
ODE_COLUMNS = ("t", "u1", "u2", "p1", "p2", "alpha1", "dt", "iterations")
COMPONENTS = ("u1", "u2", "p1", "p2", "alpha1")
CONVERGENCE_R_MAX = 1e-10


class ConfigError(ValueError):
    """Bad configuration: unknown key, wrong type or invalid value."""


# typed keys -----------------------------------------------------------------

_FLOAT, _INT, _STR, _BOOL, _OPT_FLOAT, _FLOAT_LIST = "float", "int", "str", "bool", "float or none", "float list"

_SOLVER_KEYS = {
    "delta_max": _FLOAT, "eps_delta": _FLOAT, "r_max": _FLOAT, "eps_r": _FLOAT, "k_max": _INT,
    "safety": _FLOAT, "eps_dt": _FLOAT, "growth_cap": _FLOAT, "dt0": _OPT_FLOAT, "dt_min": _OPT_FLOAT,
    "coeff_set": _STR, "linearisation": _STR, "warm_start": _BOOL,
}
_HYPERBOLIC_KEYS = {
    "cells": _INT, "cfl": _FLOAT, "riemann": _STR, "limiter": _STR, "boundary": _STR,
    "alpha_min": _FLOAT, "splitting": _STR, "output_times": _FLOAT_LIST,
}
_REFERENCE_KEYS = {"oracle_tol": _FLOAT}
_CONVERGENCE_KEYS = {"runs": _INT, "min_steps": _INT, "max_steps": _INT}


def _preset_types(name):
    types = {}
    for key, value in preset(name).items():
        types[key] = _STR if isinstance(value, str) else _FLOAT
    if not is_ode(name):
        types["nu"] = _FLOAT_LIST
    return types


def key_types(problem, command):
    """Every key a config file may set for ``problem`` under ``command``."""
    types = {"problem": _STR}
    types.update(_preset_types(problem))
    types.update(_SOLVER_KEYS)
    if command == "rp":
        types.update(_HYPERBOLIC_KEYS)
    else:
        types.update(_REFERENCE_KEYS)
        if command == "convergence":
            types.update(_CONVERGENCE_KEYS)
    return types


def parse_value(text, kind):
    """Convert ``text`` to ``kind``; raises ``ValueError`` on mismatch."""
    text = text.strip()
    if kind == _FLOAT:
        return float(text)
    if kind == _INT:
        return int(text)
    if kind == _BOOL:
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(text)
    if kind == _OPT_FLOAT:
        return None if text.lower() in ("none", "") else float(text)
    if kind == _FLOAT_LIST:
        return tuple(float(part) for part in text.split(",")) if text else ()
    if not text:
        raise ValueError(text)
    return text


def read_config(path):
    """Raw ``{key: (value_text, line_number)}`` from a flat config file."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    entries = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: missing key")
        entries[key] = (value, lineno)
    return entries


def resolve_config(command, flags, config_path=None, default_problem=None):
    """Merge preset, file and flags into one flat dict.

    ``flags`` maps keys to already-typed values (``None`` means unset).
    """
    file_entries = read_config(config_path) if config_path else {}
    problem = flags.get("problem")
    if problem is None and "problem" in file_entries:
        problem = file_entries["problem"][0]
    problem = problem or default_problem
    if problem is None:
        raise ConfigError("no problem given; use --problem or set 'problem' in the config file")
    allowed = ODE_PRESETS if command in ("ode", "convergence") else RP_PRESETS
    if problem not in allowed:
        raise ConfigError(f"problem {problem!r} is not valid for '{command}'; choose from {sorted(allowed)}")

    types = key_types(problem, command)
    resolved = {"problem": problem}
    resolved.update(preset(problem))
    if command == "rp":
        resolved["nu"] = (resolved["nu"],)
    resolved.update(_defaults(command))

    for key, (text, lineno) in file_entries.items():
        if key not in types:
            raise ConfigError(f"{config_path}:{lineno}: unknown key {key!r}; valid keys: {', '.join(sorted(types))}")
        if key == "problem":
            continue
        try:
            resolved[key] = parse_value(text, types[key])
        except ValueError:
            raise ConfigError(f"{config_path}:{lineno}: {key} expects {types[key]}, got {text!r}") from None
    for key, value in flags.items():
        if value is not None and key != "problem":
            resolved[key] = value
    return resolved


def _defaults(command):
    out = {f.name: f.default for f in dataclasses.fields(SolverConfig)}
    if command == "rp":
        out.update({f.name: f.default for f in dataclasses.fields(HyperbolicConfig)})
        out["cells"] = 2000
        out["output_times"] = ()
    else:
        out["oracle_tol"] = NewtonSettings().step_tol
        if command == "convergence":
            # uniform steps measure the discretisation error only when the
            # inner iteration is converged, so the sweep tightens r_max
            out.update(runs=40, min_steps=30, max_steps=1000, r_max=CONVERGENCE_R_MAX)
    return out


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def write_config(path, resolved):
    """Echo ``resolved`` in the same format :func:`read_config` accepts."""
    lines = [f"# resolved by bnrelax {__version__}"]
    lines += [f"{key} = {_format(value)}" for key, value in resolved.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def solver_config(resolved):
    names = {f.name for f in dataclasses.fields(SolverConfig)}
    try:
        return SolverConfig(**{k: v for k, v in resolved.items() if k in names})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def hyperbolic_config(resolved):
    names = {f.name for f in dataclasses.fields(HyperbolicConfig)}
    try:
        return HyperbolicConfig(**{k: v for k, v in resolved.items() if k in names})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _problem_values(resolved):
    return {k: resolved[k] for k in preset(resolved["problem"])}


def _ode_problem(resolved):
    try:
        return build_ode_problem(resolved["problem"], _problem_values(resolved))
    except (ValueError, InadmissibleStateError) as exc:
        raise ConfigError(str(exc)) from None


# outputs --------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_trajectory(path, traj):
    """ODE trajectory CSV; the first row has ``dt = iterations = 0``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ODE_COLUMNS)
        dts = np.concatenate([[0.0], traj.dts])
        its = np.concatenate([[0], traj.iterations]).astype(int)
        for t, s, dt, it in zip(traj.times, traj.states, dts, its):
            writer.writerow([_fmt(t), *(_fmt(x) for x in s), _fmt(dt), str(int(it))])


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=False) + "\n", encoding="utf-8")


_PLOT_TEMPLATE = '''"""Plot the CSV files written by `bnrelax {command}` (needs matplotlib)."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent


def load(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {{key: [float(r[key]) for r in rows] for key in rows[0]}}


files = sorted(here.glob("{pattern}"))
if not files:
    sys.exit("no CSV files next to this script")
fig, axes = plt.subplots({nrows}, {ncols}, figsize=(11, 7), squeeze=False)
for path in files:
    data = load(path)
    for ax, name in zip(axes.flat, {columns!r}):
        ax.plot(data["{xcol}"], data[name], {style}, label=path.stem)
        ax.set_xlabel("{xcol}")
        ax.set_ylabel(name)
{extra}axes.flat[0].legend(fontsize="small")
fig.tight_layout()
fig.savefig(here / "{image}", dpi=150)
print("wrote", here / "{image}")
'''


def write_plot_script(out_dir, command, run_id):
    if command == "ode":
        kw = dict(pattern=f"{run_id}_trajectory.csv", nrows=2, ncols=3, columns=list(COMPONENTS) + ["dt"],
                  xcol="t", style='"o-", ms=3', extra="")
    elif command == "convergence":
        kw = dict(pattern=f"{run_id}_convergence.csv", nrows=1, ncols=2, columns=["err_p1", "err_alpha1"],
                  xcol="dt", style='"o"',
                  extra="for ax in axes.flat:\n    ax.set_xscale(\"log\")\n    ax.set_yscale(\"log\")\n")
    else:
        kw = dict(pattern=f"{run_id}*_t*.csv", nrows=2, ncols=3,
                  columns=["alpha1", "rho1", "rho2", "u1", "p1", "p2"], xcol="x", style='"-"', extra="")
    script = _PLOT_TEMPLATE.format(command=command, image=f"{run_id}.png", **kw)
    path = Path(out_dir) / f"plot_{run_id}.py"
    path.write_text(script, encoding="utf-8")
    return path


# commands -------------------------------------------------------------------

def _relative_errors(approx, ref):
    approx = np.asarray(approx, dtype=float)
    ref = np.asarray(ref, dtype=float)
    return np.abs(approx - ref) / np.maximum(np.abs(ref), 1e-300)


def _reference(problem, tol):
    settings = NewtonSettings(step_tol=tol)
    return rkgl3_integrate(problem.v0, 0.0, problem.t_end, problem.params, settings)


def run_ode(resolved, out_dir, oracle=False, log=print):
    """Adaptive relaxation run; returns the report dict."""
    problem = _ode_problem(resolved)
    cfg = solver_config(resolved)
    run_id = resolved["problem"]
    start = time.perf_counter()
    traj = integrate(problem.v0, 0.0, problem.t_end, problem.params, cfg)
    wall = time.perf_counter() - start
    write_trajectory(out_dir / f"{run_id}_trajectory.csv", traj)
    final = dict(zip(COMPONENTS, (float(x) for x in traj.states[-1])))
    report = {
        "command": "ode",
        "problem": run_id,
        "accepted_steps": traj.accepted,
        "rejected_steps": traj.rejected,
        "rejections": traj.rejections,
        "iterations_histogram": {str(k): v for k, v in sorted(collections.Counter(traj.iterations.tolist()).items())},
        "wall_time_s": wall,
        "t_end": float(traj.times[-1]),
        "final_state": final,
    }
    log(f"{run_id}: {traj.accepted} accepted, {traj.rejected} rejected steps to t = {traj.times[-1]:.6g} s "
        f"({wall:.3f} s)")
    if oracle:
        ref = _reference(problem, resolved["oracle_tol"])
        err = _relative_errors(traj.states[-1], ref.states[-1])
        report["oracle"] = {
            "method": "RKGL3",
            "reference_steps": ref.accepted,
            "final_state": dict(zip(COMPONENTS, (float(x) for x in ref.states[-1]))),
            "relative_error": dict(zip(COMPONENTS, (float(e) for e in err))),
            "max_relative_error": float(err.max()),
        }
        log(f"  max relative error vs RKGL3 at t_end: {err.max():.3e}")
    return report


def _sweep_counts(resolved):
    runs, lo, hi = resolved["runs"], resolved["min_steps"], resolved["max_steps"]
    if runs < 6:
        raise ConfigError("runs must be >= 6")
    if not 1 <= lo < hi:
        raise ConfigError("need 1 <= min_steps < max_steps")
    counts = np.unique(np.rint(np.geomspace(lo, hi, runs)).astype(np.int64))
    if counts.size < 6:
        raise ConfigError("the step range yields fewer than 6 distinct step counts")
    return counts


def run_convergence(resolved, out_dir, mode="dt", log=print):
    """Error at ``t_end`` against RKGL3 for a sweep of runs, with fitted slopes.

    ``mode="dt"`` sweeps uniform step counts with the acceptance control
    bypassed; ``mode="delta"`` sweeps ``delta_max`` with the adaptive
    controller and uses the mean step as abscissa.
    """
    problem = _ode_problem(resolved)
    cfg = solver_config(resolved)
    run_id = resolved["problem"]
    span = problem.t_end
    start = time.perf_counter()
    ref = _reference(problem, resolved["oracle_tol"]).states[-1]
    if mode == "dt":
        counts = _sweep_counts(resolved)
        finals = integrate_fixed(problem.v0, 0.0, span, counts, problem.params, cfg).T
        steps = span / counts
        labels = counts
    else:
        if resolved["runs"] < 6:
            raise ConfigError("runs must be >= 6")
        deltas = np.geomspace(1e-3, 1e2, resolved["runs"])
        finals, steps, labels = [], [], []
        for d in deltas:
            traj = integrate(problem.v0, 0.0, span, problem.params, dataclasses.replace(cfg, delta_max=float(d)))
            finals.append(traj.states[-1])
            steps.append(span / traj.accepted)
            labels.append(traj.accepted)
        finals, steps, labels = np.array(finals), np.array(steps), np.array(labels)
    errs = np.array([_relative_errors(f, ref) for f in finals])
    wall = time.perf_counter() - start

    with open(out_dir / f"{run_id}_convergence.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dt", "n_steps"] + [f"err_{c}" for c in COMPONENTS])
        for h, n, e in zip(steps, labels, errs):
            writer.writerow([_fmt(h), str(int(n)), *(_fmt(x) for x in e)])
    fits = {c: fit_order(steps, errs[:, i]) for i, c in enumerate(COMPONENTS)}
    report = {
        "command": "convergence",
        "problem": run_id,
        "mode": mode,
        "runs": int(len(steps)),
        "wall_time_s": wall,
        "slopes": {c: (None if f.degenerate else f.slope) for c, f in fits.items()},
        "degenerate": [c for c, f in fits.items() if f.degenerate],
    }
    log(f"{run_id}: {len(steps)} runs, slope p1 = {_slope_text(fits['p1'])}, "
        f"slope alpha1 = {_slope_text(fits['alpha1'])} ({wall:.2f} s)")
    return report


def _slope_text(fit):
    return "degenerate (errors at round-off)" if fit.degenerate else f"{fit.slope:.3f}"


def _rp_job(args):
    resolved, nu, out_dir, run_id, track = args
    values = _problem_values(resolved)
    values["nu"] = nu
    problem = build_riemann_problem(resolved["problem"], values)
    res = run_riemann_problem(problem, resolved["cells"], hyperbolic_config(resolved), solver_config(resolved),
                              output_times=resolved["output_times"], out_dir=out_dir, run_id=run_id,
                              track_equilibrium=track)
    w = res.snapshots[-1].primitive
    final = {
        "max_pressure_disequilibrium": float(np.max(pressure_disequilibrium(w))),
        "max_abs_p1_minus_p2": float(np.max(np.abs(w[5] - w[6]))),
        "min_alpha1": float(w[0].min()),
        "max_alpha1": float(w[0].max()),
    }
    out = {
        "nu": nu,
        "run_id": run_id,
        "steps": res.steps,
        "wall_time_s": res.wall_time,
        "relaxation": dataclasses.asdict(res.relaxation),
        "final": final,
        "snapshots": [f"{run_id}_t{s.index}.csv" for s in res.snapshots],
    }
    if track:
        out["max_disequilibrium_over_run"] = max(res.max_disequilibrium) if res.max_disequilibrium else 0.0
    return out


def worker_count(n_jobs):
    """Parallel workers for independent runs, capped by ``BNRELAX_THREADS``."""
    cap = os.environ.get("BNRELAX_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = min(limit, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"BNRELAX_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, n_jobs))


def run_rp(resolved, out_dir, track=False, log=print):
    """Shock-tube run, one per entry of ``nu``; returns the report dict."""
    if resolved["cells"] < 100:
        raise ConfigError("cells must be >= 100")
    hyperbolic_config(resolved)
    solver_config(resolved)
    nus = tuple(resolved["nu"])
    if not nus or any(not (nu >= 0 and math.isfinite(nu)) for nu in nus):
        raise ConfigError("nu needs at least one finite, non-negative value")
    try:
        build_riemann_problem(resolved["problem"], dict(_problem_values(resolved), nu=nus[0]))
    except (ValueError, InadmissibleStateError) as exc:
        raise ConfigError(str(exc)) from None
    name = resolved["problem"]
    jobs = [(resolved, nu, str(out_dir), name if len(nus) == 1 else f"{name}_nu{nu:g}", track) for nu in nus]
    workers = worker_count(len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_rp_job, jobs))
    else:
        runs = [_rp_job(job) for job in jobs]
    for r in runs:
        log(f"{r['run_id']}: {resolved['cells']} cells, {r['steps']} steps, nu = {r['nu']:g}, "
            f"max |p1-p2|/(|p1|+|p2|) = {r['final']['max_pressure_disequilibrium']:.3e} ({r['wall_time_s']:.1f} s)")
    return {"command": "rp", "problem": name, "cells": resolved["cells"], "runs": runs}


# argument handling ------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return parse_value(text, _FLOAT_LIST)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def build_parser():
    parser = _Parser(prog="bnrelax", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, problems):
        p.add_argument("--problem", choices=sorted(problems), help="named preset to start from")
        p.add_argument("--config", help="flat 'key = value' file; '#' starts a comment")
        p.add_argument("--out-dir", default="bnrelax-output", help="directory for CSV, report and config echo")
        p.add_argument("--delta-max", type=float, help="linearisation tolerance of the relaxation integrator")
        p.add_argument("--dt0", type=float, help="initial relaxation step [s]")
        p.add_argument("--lambda", dest="lambda_", type=float, help="velocity relaxation rate")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")

    p = sub.add_parser("ode", help="adaptive run of a relaxation ODE test problem")
    common(p, ODE_PRESETS)
    p.add_argument("--nu", type=float, help="pressure relaxation rate")
    p.add_argument("--oracle", action="store_true", help="also run the RKGL3 reference and report errors")

    p = sub.add_parser("convergence", help="error against RKGL3 for a sweep of step sizes")
    common(p, ODE_PRESETS)
    p.add_argument("--nu", type=float, help="pressure relaxation rate")
    p.add_argument("--runs", type=int, help="number of runs (default 40)")
    p.add_argument("--mode", choices=("dt", "delta"), default="dt",
                   help="sweep uniform step sizes (default) or delta_max")
    p.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)  # the sweep always uses it

    p = sub.add_parser("rp", help="shock-tube run of the split finite-volume scheme")
    common(p, RP_PRESETS)
    p.add_argument("--nu", type=_float_list, help="pressure relaxation rate; a comma list runs a sweep")
    p.add_argument("--cells", type=int, help="number of cells (default 2000)")
    p.add_argument("--riemann", choices=("rusanov", "hll", "hllem"), help="interface solver")
    p.add_argument("--cfl", type=float, help="CFL number")
    p.add_argument("--times", type=_float_list, help="extra snapshot times [s], comma separated")
    p.add_argument("--track-equilibrium", action="store_true",
                   help="record the worst pressure disequilibrium after every step")
    p.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)
    return parser


def _flags(args):
    flags = {
        "problem": args.problem,
        "delta_max": args.delta_max,
        "dt0": args.dt0,
        "lambda": args.lambda_,
        "nu": args.nu,
    }
    if args.command == "convergence":
        flags["runs"] = args.runs
    if args.command == "rp":
        flags.update(cells=args.cells, riemann=args.riemann, cfl=args.cfl, output_times=args.times)
    return flags


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    log = (lambda *a, **k: None) if args.quiet else print
    default = {"ode": "A1", "convergence": "A1", "rp": "RP1"}[args.command]
    try:
        resolved = resolve_config(args.command, _flags(args), args.config, default)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        run_id = resolved["problem"]
        write_config(out_dir / f"{run_id}_{args.command}_config.txt", resolved)
        if args.command == "ode":
            report = run_ode(resolved, out_dir, oracle=args.oracle, log=log)
        elif args.command == "convergence":
            report = run_convergence(resolved, out_dir, mode=args.mode, log=log)
        else:
            report = run_rp(resolved, out_dir, track=args.track_equilibrium, log=log)
    except ConfigError as exc:
        print(f"bnrelax: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RelaxationError, FiniteVolumeError, InadmissibleStateError, NewtonFailure) as exc:
        print(f"bnrelax: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"bnrelax: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write_json(out_dir / f"{run_id}_{args.command}_report.json", report)
    write_plot_script(out_dir, args.command, run_id)
    log(f"outputs in {out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
