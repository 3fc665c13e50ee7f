"""Walk through the A1 relaxation: adaptive steps, the RKGL3 reference and the step-size sweep.

Run with ``python demos/relaxation_a1.py``; it prints a short table per stage.
"""

import numpy as np

from bnrelax.problems import build_ode_problem
from bnrelax.relaxation import SolverConfig, integrate, integrate_fixed
from bnrelax.rkgl import fit_order, rkgl3_integrate

NAMES = ("u1", "u2", "p1", "p2", "alpha1")

a1 = build_ode_problem("A1")
ref = rkgl3_integrate(a1.v0, 0.0, a1.t_end, a1.params).states[-1]
print("reference at t_end:", ", ".join(f"{k} = {v:.6g}" for k, v in zip(NAMES, ref)))

for delta in (0.5, 100.0):
    traj = integrate(a1.v0, 0.0, a1.t_end, a1.params, SolverConfig(delta_max=delta))
    err = np.abs(traj.states[-1] - ref) / np.abs(ref)
    print(f"\ndelta_max = {delta:g}: {traj.accepted} accepted, {traj.rejected} rejected")
    print("  first steps [s]:", ", ".join(f"{h:.2e}" for h in traj.dts[:5]))
    print("  worst relative error vs reference:", f"{err.max():.2e} ({NAMES[int(err.argmax())]})")

# uniform steps with a converged inner iteration isolate the discretisation error
counts = np.unique(np.rint(np.geomspace(30, 1000, 12)).astype(int))
finals = integrate_fixed(a1.v0, 0.0, a1.t_end, counts, a1.params, SolverConfig(r_max=1e-10))
h = a1.t_end / counts
print("\nuniform-step sweep")
for k in (2, 4):
    fit = fit_order(h, np.abs(finals[k] - ref[k]) / abs(ref[k]))
    print(f"  {NAMES[k]}: observed order {fit.slope:.2f}")
