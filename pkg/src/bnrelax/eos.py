"""Stiffened-gas thermodynamics and state conversions for the two-phase model.

Arrays follow a components-first layout so that every function accepts either a
single state (shape ``(n_comp,)``) or a batch of cells (shape ``(n_comp, n)``).

Conserved vector (7 components)::

    [a1*r1, a2*r2, a1*r1*u1, a2*r2*u2, a1*r1*E1, a2*r2*E2, a1]

Full primitive cell state (7 components)::

    [a1, r1, r2, u1, u2, p1, p2]

Relaxation unknowns (5 components, see :class:`PrimitiveState`)::

    [u1, u2, p1, p2, a1]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# indices into the full primitive cell state
ALPHA1, RHO1, RHO2, U1, U2, P1, P2 = range(7)

CLOSURES = ("simple", "impedance")
VELOCITY_PAIRINGS = ("u1", "u2", "impedance")


class InadmissibleStateError(ValueError):
    """Raised when a thermodynamic state violates positivity or bounds.

    ``component`` names the offending quantity and ``index`` (if not None)
    the flat position of the first offending entry in a batch.
    """

    def __init__(self, message, component=None, index=None):
        super().__init__(message)
        self.component = component
        self.index = index


@dataclass(frozen=True)
class EosPhase:
    """Stiffened-gas parameters of one phase.

    The volumetric internal energy is affine in pressure,
    ``rho*e = ka*p + kb`` with ``ka = 1/(gamma-1)`` and
    ``kb = gamma*pi_inf/(gamma-1)``.
    """

    gamma: float
    pi_inf: float = 0.0
    ka: float = field(init=False, repr=False)
    kb: float = field(init=False, repr=False)

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        if not self.pi_inf >= 0.0:
            raise ValueError(f"pi_inf must be >= 0, got {self.pi_inf}")
        object.__setattr__(self, "ka", 1.0 / (self.gamma - 1.0))
        object.__setattr__(self, "kb", self.gamma * self.pi_inf / (self.gamma - 1.0))

    def pressure(self, rho_e):
        """Pressure from volumetric internal energy."""
        return (rho_e - self.kb) / self.ka


class PrimitiveState(NamedTuple):
    """Unknowns of the relaxation ODE. Fields may be floats or arrays."""

    u1: float
    u2: float
    p1: float
    p2: float
    alpha1: float


@dataclass(frozen=True)
class OdeParams:
    """Quantities frozen during a relaxation step.

    ``m1``/``m2`` are the partial densities (may be per-cell arrays),
    ``lambda_fric`` the velocity relaxation rate and ``nu_press`` the pressure
    relaxation rate. ``interface_closure`` selects the interface pressure
    (``"simple"``: pI = p2, ``"impedance"``: acoustic-impedance average);
    ``interface_velocity`` selects uI (``"u1"``, ``"u2"`` or the impedance
    weighted average ``"impedance"``).
    """

    m1: float
    m2: float
    eos1: EosPhase
    eos2: EosPhase
    lambda_fric: float = 0.0
    nu_press: float = 0.0
    interface_closure: str = "simple"
    interface_velocity: str = "u1"

    def __post_init__(self):
        if not (np.all(np.asarray(self.m1) > 0) and np.all(np.asarray(self.m2) > 0)):
            raise ValueError("partial densities m1, m2 must be positive")
        if not (np.all(np.asarray(self.lambda_fric) >= 0) and np.all(np.asarray(self.nu_press) >= 0)):
            raise ValueError("relaxation rates must be non-negative")
        if self.interface_closure not in CLOSURES:
            raise ValueError(f"interface_closure must be one of {CLOSURES}")
        if self.interface_velocity not in VELOCITY_PAIRINGS:
            raise ValueError(f"interface_velocity must be one of {VELOCITY_PAIRINGS}")

    def densities(self, alpha1):
        """Phase densities implied by the frozen partial densities."""
        return self.m1 / alpha1, self.m2 / (1.0 - alpha1)


def phase_internal_energy(p, eos):
    """Volumetric internal energy ``rho*e = (p + gamma*Pi)/(gamma-1)``."""
    return eos.ka * p + eos.kb


def sound_speed_squared(rho, p, eos):
    """``gamma*(p + Pi)/rho`` without any admissibility check."""
    return eos.gamma * (p + eos.pi_inf) / rho


def sound_speed(rho, p, eos):
    """Stiffened-gas speed of sound.

    Raises
    ------
    InadmissibleStateError
        If ``p + Pi <= 0`` or ``rho <= 0`` anywhere.
    """
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    bad = ~((p + eos.pi_inf > 0) & (rho > 0))
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise InadmissibleStateError(
            "non-positive sound speed radicand (p + Pi <= 0 or rho <= 0)",
            component="sound_speed",
            index=idx,
        )
    c = np.sqrt(sound_speed_squared(rho, p, eos))
    return c if c.ndim else float(c)


def prim_to_cons(w, eos1, eos2):
    """Full primitive cell state ``[a1, r1, r2, u1, u2, p1, p2]`` to conserved."""
    w = np.asarray(w, dtype=float)
    a1 = w[ALPHA1]
    a2 = 1.0 - a1
    m1 = a1 * w[RHO1]
    m2 = a2 * w[RHO2]
    u1, u2 = w[U1], w[U2]
    en1 = 0.5 * m1 * u1 * u1 + a1 * phase_internal_energy(w[P1], eos1)
    en2 = 0.5 * m2 * u2 * u2 + a2 * phase_internal_energy(w[P2], eos2)
    return np.stack([m1, m2, m1 * u1, m2 * u2, en1, en2, a1])


def _first_bad(mask):
    return int(np.flatnonzero(np.atleast_1d(mask))[0])


def cons_to_prim(q, eos1, eos2, check=True):
    """Exact algebraic inverse of :func:`prim_to_cons`.

    With ``check=True`` an :class:`InadmissibleStateError` is raised for
    non-positive partial densities, volume fractions outside (0, 1), or
    non-positive phase internal energies.
    """
    q = np.asarray(q, dtype=float)
    m1, m2, mom1, mom2, en1, en2, a1 = q
    if check:
        if np.any(~(m1 > 0)):
            raise InadmissibleStateError("non-positive partial density a1*r1", "alpha1_rho1", _first_bad(~(m1 > 0)))
        if np.any(~(m2 > 0)):
            raise InadmissibleStateError("non-positive partial density a2*r2", "alpha2_rho2", _first_bad(~(m2 > 0)))
        bad = ~((a1 > 0) & (a1 < 1))
        if np.any(bad):
            raise InadmissibleStateError("volume fraction outside (0, 1)", "alpha1", _first_bad(bad))
    a2 = 1.0 - a1
    u1 = mom1 / m1
    u2 = mom2 / m2
    re1 = (en1 - 0.5 * mom1 * u1) / a1
    re2 = (en2 - 0.5 * mom2 * u2) / a2
    if check:
        for name, re in (("internal_energy1", re1), ("internal_energy2", re2)):
            if np.any(~(re > 0)):
                raise InadmissibleStateError(f"non-positive {name}", name, _first_bad(~(re > 0)))
    return np.stack([a1, m1 / a1, m2 / a2, u1, u2, eos1.pressure(re1), eos2.pressure(re2)])


def interface_weights(p1, p2, rho1, rho2, eos1, eos2, closure="simple", velocity="u1"):
    """Interface pressure and the weight ``w1`` such that ``uI = w1*u1 + (1-w1)*u2``.

    For the impedance closure ``Z_k = rho_k * a_k``; a NaN sound speed
    propagates into the result rather than raising.
    """
    if closure == "simple":
        p_i = p2 + 0.0 * p1
        z1 = z2 = None
    else:
        with np.errstate(invalid="ignore"):
            z1 = rho1 * np.sqrt(sound_speed_squared(rho1, p1, eos1))
            z2 = rho2 * np.sqrt(sound_speed_squared(rho2, p2, eos2))
        p_i = (z2 * p1 + z1 * p2) / (z1 + z2)
    if velocity == "u1":
        w1 = np.ones_like(p_i)
    elif velocity == "u2":
        w1 = np.zeros_like(p_i)
    else:
        if z1 is None:
            with np.errstate(invalid="ignore"):
                z1 = rho1 * np.sqrt(sound_speed_squared(rho1, p1, eos1))
                z2 = rho2 * np.sqrt(sound_speed_squared(rho2, p2, eos2))
        w1 = z1 / (z1 + z2)
    return p_i, w1


def interface_state(v, params, rho1=None, rho2=None):
    """Interface pressure and velocity ``(pI, uI)`` for relaxation unknowns ``v``.

    Densities default to those implied by ``params.m1``, ``params.m2`` and
    ``v.alpha1``.
    """
    u1, u2, p1, p2, a1 = np.asarray(v, dtype=float)
    if rho1 is None or rho2 is None:
        rho1, rho2 = params.densities(a1)
    p_i, w1 = interface_weights(
        p1, p2, rho1, rho2, params.eos1, params.eos2,
        params.interface_closure, params.interface_velocity,
    )
    u_i = w1 * u1 + (1.0 - w1) * u2
    if np.ndim(p_i) == 0:
        return float(p_i), float(u_i)
    return p_i, u_i
