"""Divided differences of the exponential, evaluated without cancellation.

The closed-form relaxation solution is built from integrals such as
``int_0^t exp(-a s) ds`` and ``int_0^t (exp(-b s) - exp(-a s))/(a - b) ds``.
Written naively these lose all accuracy when ``a ~ b`` or ``a*t ~ 0`` and
overflow when the exponents are large. Expressed as divided differences of
``exp`` at the points ``-a*t, -b*t, 0`` they stay well conditioned for every
non-negative rate, including coincident and zero rates.
"""

import math

import numpy as np

# below this node spread the second divided difference switches to a series
_SERIES_SPREAD = 0.2
_SERIES_TERMS = 14


def psi1(x):
    """``(1 - exp(-x)) / x`` for ``x >= 0``, equal to 1 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    return np.where(pos, -np.expm1(-xs) / xs, 1.0)


def exp_dd1(x, y):
    """First divided difference ``(e^x - e^y)/(x - y)``; ``e^x`` when ``x == y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(np.maximum(x, y)) * psi1(np.abs(x - y))


def _series(nodes):
    """``e^c * sum_j h_j(d) / (j+n)!`` about the node centroid ``c``.

    ``h_j`` are the complete homogeneous symmetric polynomials of the
    centred nodes ``d``, generated from the elementary symmetric ones.
    """
    m = len(nodes)
    c = sum(nodes) / m
    d = [x - c for x in nodes]
    # elementary symmetric polynomials e_1..e_m of d
    e = [np.ones_like(c)] + [np.zeros_like(c) for _ in range(m)]
    for di in d:
        for i in range(m, 0, -1):
            e[i] = e[i] + di * e[i - 1]
    h = [np.ones_like(c)]
    fact = math.factorial(m - 1)
    total = h[0] / fact
    for j in range(1, _SERIES_TERMS):
        hj = np.zeros_like(c)
        for i in range(1, min(j, m) + 1):
            hj = hj + (-1) ** (i - 1) * e[i] * h[j - i]
        h.append(hj)
        fact *= j + m - 1
        total = total + hj / fact
    return np.exp(c) * total


def exp_dd(*nodes):
    """Divided difference of ``exp`` at any number of (possibly repeated) nodes.

    Sorted nodes with spread above ``_SERIES_SPREAD`` use the recursive
    definition; tighter clusters use the series, which has no cancellation.
    """
    arrs = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in nodes))
    if len(arrs) == 1:
        return np.exp(arrs[0])
    if len(arrs) == 2:
        return exp_dd1(arrs[0], arrs[1])
    srt = np.sort(np.stack(arrs), axis=0)
    xs = list(srt)
    spread = xs[-1] - xs[0]
    wide = spread > _SERIES_SPREAD
    denom = np.where(wide, spread, 1.0)
    direct = (exp_dd(*xs[1:]) - exp_dd(*xs[:-1])) / denom
    return np.where(wide, direct, _series(xs))


def exp_dd2(x, y, z):
    """Second divided difference of ``exp`` at three (possibly equal) nodes."""
    return exp_dd(x, y, z)


def exp_dd3(w, x, y, z):
    """Third divided difference of ``exp`` at four (possibly equal) nodes."""
    return exp_dd(w, x, y, z)
