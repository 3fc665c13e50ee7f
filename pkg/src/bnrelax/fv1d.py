"""One-dimensional finite-volume solver for the seven-equation two-phase model.

The homogeneous system is advanced with a path-conservative MUSCL-Hancock
scheme (straight-line paths in conserved variables, three-point Gauss
quadrature) and the relaxation sources with the per-cell adaptive integrator
of :mod:`bnrelax.relaxation`, combined by operator splitting.

Arrays are ``(7, n_cells + 4)``: two ghost columns on each side, interior
columns ``2 .. n_cells + 1``. The compiled sweeps live in
:mod:`bnrelax._kernels`; this module holds configuration, validation,
error reporting and I/O.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _kernels as K
from .eos import CLOSURES, VELOCITY_PAIRINGS, EosPhase, InadmissibleStateError, cons_to_prim, prim_to_cons
from .relaxation import COEFF_SETS, LINEARISATIONS, REASONS, RelaxationError, SolverConfig

NG = 2  # ghost layers per side

RIEMANN_SOLVERS = ("rusanov", "hll", "hllem")
LIMITERS = ("zero", "minmod")
BOUNDARIES = ("transmissive", "periodic")
SPLITTINGS = ("godunov", "strang")

# Floor for the inner relaxation step as a fraction of the substep, used when the
# solver config leaves dt_min unset. Stiff pressure relaxation (nu ~ 1e20) has
# transients near 1e-29 s that must be resolved, far below the ODE default.
RELAX_DT_MIN_FRACTION = 1e-40

SNAPSHOT_HEADER = "x,alpha1,rho1,rho2,u1,u2,p1,p2,p_mix"

_COMPONENTS = ("alpha1_rho1", "alpha2_rho2", "alpha1_rho1_u1", "alpha2_rho2_u2",
               "alpha1_E1", "alpha2_E2", "alpha1")


class FiniteVolumeError(RuntimeError):
    """A sweep produced an inadmissible state.

    ``cell`` is the zero-based interior cell index (negative or
    ``>= n_cells`` for ghost cells) and ``component`` the offending quantity.
    """

    def __init__(self, message, cell=None, component=None, time=None):
        super().__init__(message)
        self.cell = cell
        self.component = component
        self.time = time


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 4:
            raise ValueError(f"n_cells must be >= 4, got {self.n_cells}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self):
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass(frozen=True)
class TwoPhaseModel:
    """EOS pair, relaxation rates and interface closure of a run."""

    eos1: EosPhase
    eos2: EosPhase
    lambda_fric: float = 0.0
    nu_press: float = 0.0
    closure: str = "impedance"
    velocity: str = "u1"

    def __post_init__(self):
        if not (self.lambda_fric >= 0 and self.nu_press >= 0):
            raise ValueError("relaxation rates must be non-negative")
        if self.closure not in CLOSURES:
            raise ValueError(f"closure must be one of {CLOSURES}")
        if self.velocity not in VELOCITY_PAIRINGS:
            raise ValueError(f"velocity must be one of {VELOCITY_PAIRINGS}")

    def eos_array(self):
        e1, e2 = self.eos1, self.eos2
        return np.array([e1.gamma, e1.pi_inf, e1.ka, e1.kb, e2.gamma, e2.pi_inf, e2.ka, e2.kb])

    @property
    def codes(self):
        return CLOSURES.index(self.closure), VELOCITY_PAIRINGS.index(self.velocity)

    @property
    def stiff_free(self):
        return self.lambda_fric == 0 and self.nu_press == 0


@dataclass(frozen=True)
class HyperbolicConfig:
    cfl: float = 0.95
    riemann: str = "hllem"
    limiter: str = "minmod"
    boundary: str = "transmissive"
    alpha_min: float = 1e-12
    splitting: str = "godunov"

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise ValueError(f"cfl must lie in (0, 1), got {self.cfl}")
        for name, value, allowed in (("riemann", self.riemann, RIEMANN_SOLVERS),
                                     ("limiter", self.limiter, LIMITERS),
                                     ("boundary", self.boundary, BOUNDARIES),
                                     ("splitting", self.splitting, SPLITTINGS)):
            if value not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {value!r}")
        if not 0 <= self.alpha_min < 0.5:
            raise ValueError("alpha_min must lie in [0, 0.5)")


@dataclass
class CellField:
    """Conserved variables on a grid, ghost columns included."""

    q: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        self.q = np.ascontiguousarray(self.q, dtype=float)
        if self.q.shape != (7, self.grid.n_cells + 2 * NG):
            raise ValueError(f"q must have shape (7, {self.grid.n_cells + 2 * NG}), got {self.q.shape}")

    @classmethod
    def from_primitive(cls, grid, w, model):
        """Build from interior primitives ``[a1, r1, r2, u1, u2, p1, p2]`` of shape (7, n)."""
        w = np.asarray(w, dtype=float)
        q = np.empty((7, grid.n_cells + 2 * NG))
        q[:, NG:-NG] = prim_to_cons(w, model.eos1, model.eos2)
        K.fill_ghosts(q, grid.n_cells, 0)
        return cls(q, grid)

    @property
    def interior(self):
        return self.q[:, NG:-NG]

    def primitive(self, model):
        """Interior primitive variables; raises on inadmissible cells."""
        return cons_to_prim(self.interior, model.eos1, model.eos2)

    def copy(self):
        return CellField(self.q.copy(), self.grid)


def _locate(q_col, model, cell, time=None, what="inadmissible state"):
    """Raise a :class:`FiniteVolumeError` naming the bad component of one column."""
    try:
        cons_to_prim(q_col.reshape(7, 1), model.eos1, model.eos2)
        component = "path"
    except InadmissibleStateError as exc:
        component = exc.component
    if not np.all(np.isfinite(q_col)):
        bad = int(np.flatnonzero(~np.isfinite(q_col))[0])
        component = _COMPONENTS[bad]
    raise FiniteVolumeError(f"{what} in cell {cell} ({component})", cell, component, time)


# thin wrappers over the kernels, for single states ----------------------------


def physical_flux(q, model):
    """Conservative flux of a single conserved state (seventh entry zero)."""
    w = cons_to_prim(np.asarray(q, dtype=float), model.eos1, model.eos2)
    f = np.empty(7)
    K.flux_full(np.ascontiguousarray(w), model.eos_array(), f)
    return f


def noncons_product(q_left, q_right, model):
    """Path integral of ``B(Q) dQ`` along the straight segment from left to right."""
    ql = np.ascontiguousarray(q_left, dtype=float)
    qr = np.ascontiguousarray(q_right, dtype=float)
    for q in (ql, qr):
        cons_to_prim(q, model.eos1, model.eos2)
    out = np.empty(7)
    closure, velocity = model.codes
    if not K.path_integral(ql, qr, model.eos_array(), closure, velocity, out, np.empty(7), np.empty(7)):
        raise InadmissibleStateError("straight path leaves the admissible set", "path")
    return out


def max_wavespeed(q, model):
    """``max_k |u_k| + a_k`` over the cells of ``q`` (shape (7,) or (7, n))."""
    q = np.asarray(q, dtype=float)
    q2 = np.ascontiguousarray(q.reshape(7, -1))
    s = K.max_speed(q2, 0, q2.shape[1], model.eos_array())
    if s < 0:
        _locate(q2[:, int(-1 - s)], model, int(-1 - s))
    return s


def riemann_flux(q_left, q_right, cfg, model):
    """Numerical flux and the left/right nonconservative fluctuations.

    Returns ``(fhat, d_minus, d_plus)`` where ``d_minus`` acts on the left
    cell and ``d_plus`` on the right one; their sum is
    :func:`noncons_product`.
    """
    ql = np.ascontiguousarray(q_left, dtype=float)
    qr = np.ascontiguousarray(q_right, dtype=float)
    wl = np.ascontiguousarray(cons_to_prim(ql, model.eos1, model.eos2))
    wr = np.ascontiguousarray(cons_to_prim(qr, model.eos1, model.eos2))
    fhat, dm, dp = np.empty(7), np.empty(7), np.empty(7)
    closure, velocity = model.codes
    ok = K.riemann(ql, qr, wl, wr, model.eos_array(), RIEMANN_SOLVERS.index(cfg.riemann),
                   closure, velocity, fhat, dm, dp, np.empty((5, 7)))
    if not ok:
        raise InadmissibleStateError("straight path leaves the admissible set", "path")
    return fhat, dm, dp


# time stepping ----------------------------------------------------------------


def stable_dt(field, cfg, model):
    """Largest ``dt`` allowed by the CFL condition on the interior cells."""
    s = K.max_speed(field.q, NG, NG + field.grid.n_cells, model.eos_array())
    if s < 0:
        i = int(-1 - s)
        _locate(field.q[:, i], model, i - NG)
    return cfg.cfl * field.grid.dx / s


@lru_cache(maxsize=4)
def _muscl_workspace(n):
    return K.muscl_workspace(n)


def muscl_hancock_step(field, dt, cfg, model, t=None):
    """Advance the homogeneous system by ``dt`` in place and return ``field``.

    Raises
    ------
    FiniteVolumeError
        Naming the cell and component if a state becomes inadmissible.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    closure, velocity = model.codes
    n = field.grid.n_cells
    work, flags = _muscl_workspace(n)
    status, cell = K.muscl_step(field.q, n, dt, field.grid.dx, model.eos_array(),
                                RIEMANN_SOLVERS.index(cfg.riemann), LIMITERS.index(cfg.limiter),
                                closure, velocity, BOUNDARIES.index(cfg.boundary), cfg.alpha_min, work, flags)
    if status == 0:
        return field
    backup = work[0].T.copy()  # the kernel's copy of the starting state
    col = (backup if status == 1 else field.q)[:, cell].copy()
    what = {1: "inadmissible state before the sweep",
            2: "interface path leaves the admissible set",
            3: "inadmissible updated state"}[status]
    field.q[:] = backup
    _locate(col, model, cell - NG, t, what)


@dataclass
class RelaxationStats:
    accepted: int = 0
    rejected: int = 0
    iterations: int = 0


def _solver_arrays(rcfg, span):
    dt_min = rcfg.dt_min if rcfg.dt_min is not None else RELAX_DT_MIN_FRACTION * span
    fs = np.array([rcfg.delta_max, rcfg.eps_delta, rcfg.r_max, rcfg.eps_r, rcfg.safety,
                   rcfg.eps_dt, rcfg.growth_cap, dt_min])
    return fs, COEFF_SETS.index(rcfg.coeff_set), LINEARISATIONS.index(rcfg.linearisation)


def relax_step(field, span, model, rcfg, stats=None, t=None, boundary="transmissive"):
    """Integrate the relaxation sources over ``span`` in every interior cell.

    Partial densities are frozen per cell. The initial inner step is
    ``rcfg.dt0`` if set, else a quarter of ``span``.
    """
    if model.stiff_free:
        return field
    fs, coeff_set, mode = _solver_arrays(rcfg, span)
    dt0 = rcfg.dt0 if rcfg.dt0 is not None else 0.25 * span
    counters = np.zeros(3, dtype=np.int64)
    closure, velocity = model.codes
    status, cell = K.relax_field(field.q, NG, NG + field.grid.n_cells, model.eos_array(),
                                 model.lambda_fric, model.nu_press, closure, velocity, span, dt0, fs,
                                 rcfg.k_max, coeff_set, mode, counters)
    if stats is not None:
        stats.accepted += int(counters[0])
        stats.rejected += int(counters[1])
        stats.iterations += int(counters[2])
    if status == 1:
        _locate(field.q[:, cell].copy(), model, cell - NG, t, "inadmissible state before relaxation")
    elif status != 0:
        reason = REASONS[status - 11]
        raise RelaxationError(
            f"relaxation step underflow in cell {cell - NG} ({reason})", state=field.q[:, cell].copy(), time=t
        )
    K.fill_ghosts(field.q, field.grid.n_cells, BOUNDARIES.index(boundary))
    return field


def split_advance(field, t, dt, cfg, model, rcfg=None, stats=None):
    """Advance ``field`` from ``t`` to ``t + dt`` (in place) by operator splitting.

    Godunov: hyperbolic step then relaxation over ``dt``. Strang: half
    relaxation, hyperbolic step, half relaxation.
    """
    rcfg = rcfg or SolverConfig()
    bc = cfg.boundary
    if cfg.splitting == "godunov":
        muscl_hancock_step(field, dt, cfg, model, t)
        relax_step(field, dt, model, rcfg, stats, t, bc)
    else:
        relax_step(field, 0.5 * dt, model, rcfg, stats, t, bc)
        muscl_hancock_step(field, dt, cfg, model, t)
        relax_step(field, 0.5 * dt, model, rcfg, stats, t, bc)
    return field


# Riemann problems -------------------------------------------------------------


@dataclass(frozen=True)
class RiemannProblem:
    """Piecewise-constant initial data.

    ``left``/``right`` are primitive states ``[a1, r1, r2, u1, u2, p1, p2]``.
    """

    name: str
    left: tuple
    right: tuple
    x_jump: float
    t_end: float
    model: TwoPhaseModel
    x_min: float = 0.0
    x_max: float = 1.0

    def initial_field(self, n_cells):
        grid = Grid1D(self.x_min, self.x_max, n_cells)
        x = grid.centers
        w = np.where(x[None, :] < self.x_jump, np.asarray(self.left, float)[:, None],
                     np.asarray(self.right, float)[:, None])
        return CellField.from_primitive(grid, w, self.model)


@dataclass
class Snapshot:
    index: int
    time: float
    x: np.ndarray
    primitive: np.ndarray

    @property
    def p_mix(self):
        a1 = self.primitive[0]
        return a1 * self.primitive[5] + (1.0 - a1) * self.primitive[6]

    def table(self):
        w = self.primitive
        return np.column_stack([self.x, w[0], w[1], w[2], w[3], w[4], w[5], w[6], self.p_mix])


@dataclass
class RiemannResult:
    field: CellField
    snapshots: list
    steps: int
    wall_time: float
    relaxation: RelaxationStats = field(default_factory=RelaxationStats)
    max_disequilibrium: list = field(default_factory=list)


def pressure_disequilibrium(w):
    """Cellwise ``|p1 - p2| / (|p1| + |p2|)``."""
    p1, p2 = w[5], w[6]
    return np.abs(p1 - p2) / (np.abs(p1) + np.abs(p2))


def write_snapshot(path, snap):
    """CSV with full round-trip precision."""
    np.savetxt(path, snap.table(), delimiter=",", header=SNAPSHOT_HEADER, comments="", fmt="%.17g")


def run_riemann_problem(problem, n_cells, cfg=None, rcfg=None, output_times=None,
                        out_dir=None, run_id=None, track_equilibrium=False):
    """March ``problem`` to ``t_end`` and collect snapshots.

    ``output_times`` (default: only ``t_end``) are hit exactly. With
    ``out_dir`` each snapshot is written to ``<run_id>_t<index>.csv``.
    ``track_equilibrium`` records the maximum pressure disequilibrium after
    every step in ``RiemannResult.max_disequilibrium``.
    """
    cfg = cfg or HyperbolicConfig()
    rcfg = rcfg or SolverConfig()
    model = problem.model
    times = sorted(set(float(t) for t in (output_times or [])) | {problem.t_end})
    if times[0] <= 0 or times[-1] > problem.t_end:
        raise ValueError("output times must lie in (0, t_end]")
    field_ = problem.initial_field(n_cells)
    x = field_.grid.centers
    run_id = run_id or problem.name
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)

    stats = RelaxationStats()
    snaps, diseq = [], []
    t, steps = 0.0, 0
    start = time.perf_counter()
    for k, t_out in enumerate(times):
        while t < t_out:
            dt = stable_dt(field_, cfg, model)
            last = t + dt >= t_out
            if last:
                dt = t_out - t
            split_advance(field_, t, dt, cfg, model, rcfg, stats)
            t = t_out if last else t + dt
            steps += 1
            if track_equilibrium:
                diseq.append(float(np.max(pressure_disequilibrium(field_.primitive(model)))))
        snap = Snapshot(k, t, x, field_.primitive(model))
        snaps.append(snap)
        if out_dir is not None:
            write_snapshot(os.path.join(out_dir, f"{run_id}_t{k}.csv"), snap)
    return RiemannResult(field_, snaps, steps, time.perf_counter() - start, stats, diseq)


def l1_difference(coarse_x, coarse_values, fine_x, fine_values):
    """Grid-weighted L1 distance after averaging the fine profile onto the coarse cells.

    Requires the fine cell count to be an integer multiple of the coarse one.
    """
    ratio, rem = divmod(len(fine_x), len(coarse_x))
    if rem or ratio < 1:
        raise ValueError("fine grid must refine the coarse grid by an integer factor")
    restricted = np.asarray(fine_values).reshape(len(coarse_x), ratio).mean(axis=1)
    dx = (coarse_x[-1] - coarse_x[0]) / (len(coarse_x) - 1) if len(coarse_x) > 1 else 1.0
    return float(np.sum(np.abs(np.asarray(coarse_values) - restricted)) * dx)


__all__ = [
    "BOUNDARIES", "CellField", "FiniteVolumeError", "Grid1D", "HyperbolicConfig", "LIMITERS",
    "RIEMANN_SOLVERS", "RelaxationStats", "RiemannProblem", "RiemannResult", "SNAPSHOT_HEADER",
    "SPLITTINGS", "Snapshot", "TwoPhaseModel", "l1_difference", "max_wavespeed", "muscl_hancock_step",
    "noncons_product", "physical_flux", "pressure_disequilibrium", "relax_step", "riemann_flux",
    "run_riemann_problem", "split_advance", "stable_dt", "write_snapshot",
]
