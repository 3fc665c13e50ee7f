"""RP3 with growing pressure relaxation rate: the phase pressures lock together as nu grows.

Run with ``python demos/rp3_nu_sweep.py [cells]`` (default 400 cells, a few seconds).
"""

import sys

import numpy as np

from bnrelax.fv1d import pressure_disequilibrium, run_riemann_problem
from bnrelax.problems import build_riemann_problem, preset

cells = int(sys.argv[1]) if len(sys.argv) > 1 else 400
print(f"RP3 on {cells} cells, t_end = {preset('RP3')['t_end']} s")
print(f"{'nu':>8} {'steps':>6} {'max|p1-p2|':>12} {'max rel diseq':>14} {'alpha1 range':>20}")
for nu in (0.0, 1e-8, 1.0, 1e20):
    problem = build_riemann_problem("RP3", dict(preset("RP3"), nu=nu))
    result = run_riemann_problem(problem, cells)
    w = result.snapshots[-1].primitive
    print(f"{nu:8.0e} {result.steps:6d} {np.max(np.abs(w[5] - w[6])):12.4e} "
          f"{np.max(pressure_disequilibrium(w)):14.3e} {w[0].min():9.4f} .. {w[0].max():.4f}")
