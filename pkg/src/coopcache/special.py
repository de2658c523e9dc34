"""Exponential integrals and a bracketed scalar root finder.

``E1`` is evaluated with a power series near the origin and a Lentz
continued fraction for larger positive arguments.  Negative arguments use
the principal-value continuation ``E1(-y) = -Ei(y)``, with ``Ei`` taken
from its (all positive) power series or its asymptotic expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "EULER_GAMMA",
    "BracketedProblem",
    "RootBracketError",
    "RootConvergenceError",
    "exp_integral_e1",
    "exp_integral_e1_flagged",
    "exp_integral_ei",
    "e1_array",
    "find_root",
]

EULER_GAMMA = 0.57721566490153286060651209
_EPS = 2.220446049250313e-16
_TINY = 1e-300
# e**x overflows past this argument
_EXP_LIMIT = 709.782712893384
_SATURATED = float(np.finfo(float).max)


def _e1_series(x: float) -> float:
    total = 0.0
    term = 1.0
    n = 1
    while True:
        term *= -x / n
        inc = term / n
        total += inc
        if abs(inc) <= _EPS * abs(total) or n > 500:
            break
        n += 1
    return -EULER_GAMMA - math.log(x) - total


def _e1_continued_fraction(x: float) -> float:
    b = x + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) <= _EPS:
            break
    return h * math.exp(-x)


def _ei_positive(y: float) -> float:
    if y <= 40.0:
        total = 0.0
        term = 1.0
        n = 1
        while True:
            term *= y / n
            inc = term / n
            total += inc
            if inc <= _EPS * total:
                break
            n += 1
        return EULER_GAMMA + math.log(y) + total
    # asymptotic series; terms shrink until k ~ y, stop at machine precision
    total = 1.0
    term = 1.0
    for k in range(1, int(y)):
        prev = term
        term *= k / y
        if term > prev:
            break
        total += term
        if term <= _EPS * total:
            break
    return math.exp(y) / y * total


def exp_integral_e1_flagged(x: float) -> tuple[float, bool]:
    """Return ``(E1(x), saturated)``.

    ``saturated`` is True when the true value lies outside the double range:
    ``E1`` underflows to 0 for large positive ``x`` and ``-Ei(-x)``
    overflows for ``x < -709.78``, where ``-max_float`` is returned.
    """
    x = float(x)
    if x == 0.0:
        raise ValueError("E1 has a logarithmic singularity at x = 0")
    if math.isnan(x):
        raise ValueError("E1 argument is NaN")
    if x > 0.0:
        if x <= 1.0:
            return _e1_series(x), False
        if x > 745.0:
            return 0.0, True
        return _e1_continued_fraction(x), False
    y = -x
    if y > _EXP_LIMIT:
        return -_SATURATED, True
    return -_ei_positive(y), False


def exp_integral_e1(x: float) -> float:
    """Exponential integral ``E1(x) = int_x^inf exp(-t)/t dt``.

    For ``x < 0`` the Cauchy principal value continuation ``-Ei(-x)`` is
    returned.  Out-of-range results saturate (see
    :func:`exp_integral_e1_flagged` for the flag).

    Raises
    ------
    ValueError
        If ``x == 0``.
    """
    return exp_integral_e1_flagged(x)[0]


def exp_integral_ei(y: float) -> float:
    """Exponential integral ``Ei(y)`` (principal value), ``y != 0``."""
    return -exp_integral_e1(-y)


e1_array = np.vectorize(exp_integral_e1, otypes=[float])


class RootBracketError(ValueError):
    """The objective does not change sign over the bracket."""


class RootConvergenceError(RuntimeError):
    """The iteration budget ran out; ``best`` holds the best iterate."""

    def __init__(self, message: str, best: float):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class BracketedProblem:
    objective: Callable[[float], float]
    lo: float
    hi: float
    tol_abs: float = 1e-12
    tol_rel: float = 4.0 * _EPS
    max_iter: int = 200

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty bracket [{self.lo}, {self.hi}]")


def find_root(problem: BracketedProblem) -> float:
    """Locate a sign change of ``problem.objective`` inside its bracket.

    Regula falsi steps are taken while they at least halve the bracket;
    otherwise the step falls back to bisection, so the bracket width at
    least halves every two evaluations.  Stops when ``|f(r)| <= tol_abs``
    or the bracket is narrower than ``tol_rel * |r| + tol_abs``; the
    returned point is the bracket end with the smaller residual.
    """
    f = problem.objective
    a, b = float(problem.lo), float(problem.hi)
    fa, fb = float(f(a)), float(f(b))
    if not (math.isfinite(fa) and math.isfinite(fb)):
        raise RootBracketError(f"objective not finite at bracket ends: f({a})={fa}, f({b})={fb}")
    tol = problem.tol_abs
    if abs(fa) <= tol:
        return a
    if abs(fb) <= tol:
        return b
    if (fa > 0) == (fb > 0):
        raise RootBracketError(f"no sign change on [{a}, {b}]: f={fa}, {fb}")

    secant = True
    for _ in range(problem.max_iter):
        width = b - a
        x = 0.5 * (a + b)
        if secant:
            s = a - fa * width / (fb - fa)
            if a < s < b:
                x = s
        fx = float(f(x))
        if not math.isfinite(fx):
            raise RootConvergenceError(f"objective returned {fx} at {x}", best=x)
        if abs(fx) <= tol:
            return x
        if (fx > 0) == (fa > 0):
            a, fa = x, fx
        else:
            b, fb = x, fx
        best = a if abs(fa) <= abs(fb) else b
        if b - a <= problem.tol_rel * abs(best) + tol:
            return best
        secant = (b - a) <= 0.5 * width
    best = a if abs(fa) <= abs(fb) else b
    raise RootConvergenceError(
        f"no convergence after {problem.max_iter} iterations, bracket [{a}, {b}]", best=best
    )
