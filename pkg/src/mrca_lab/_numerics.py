"""Root finding for monotone functions: bracket expansion plus safeguarded Newton."""

from __future__ import annotations

import math
from typing import Callable


class NumericError(ArithmeticError):
    """A numerical routine failed to converge."""


def expand_bracket(
    f: Callable[[float], float],
    y0: float,
    step: float = 1.0,
    max_steps: int = 200,
) -> tuple[float, float, float, float]:
    """Find ``lo < hi`` with ``f(lo) >= 0 >= f(hi)`` for a decreasing ``f``.

    Starts at ``y0`` and walks with doubling steps in the direction of the
    root. Returns ``(lo, f(lo), hi, f(hi))``.
    """
    f0 = f(y0)
    if f0 == 0:
        return y0, f0, y0, f0
    direction = 1.0 if f0 > 0 else -1.0
    a, fa = y0, f0
    for _ in range(max_steps):
        b = a + direction * step
        fb = f(b)
        if (fb <= 0) if direction > 0 else (fb >= 0):
            if direction > 0:
                return a, fa, b, fb
            return b, fb, a, fa
        a, fa = b, fb
        step *= 2.0
    raise NumericError(f"could not bracket root starting from {y0}")


def safeguarded_newton(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    lo: float,
    hi: float,
    f_lo: float,
    f_hi: float,
    xtol: float,
    x0: float | None = None,
    max_iter: int = 100,
) -> float:
    """Root of a decreasing function bracketed by ``[lo, hi]``.

    A Newton step is accepted only if it lands inside the current bracket and
    is at most half the step before last; otherwise the bracket is bisected.
    Stops once the last step is below ``xtol``.
    """
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if f_lo < 0 or f_hi > 0:
        raise NumericError("root is not bracketed")
    x = 0.5 * (lo + hi) if x0 is None or not lo < x0 < hi else x0
    dx_old = dx = hi - lo
    for _ in range(max_iter):
        fx = f(x)
        if fx == 0:
            return x
        if fx > 0:
            lo = x
        else:
            hi = x
        d = fprime(x)
        x_newton = x - fx / d if d != 0 and math.isfinite(d) else math.nan
        if not lo < x_newton < hi or abs(2.0 * fx) > abs(dx_old * d):
            dx_old, dx = dx, 0.5 * (hi - lo)
            x = lo + dx
        else:
            dx_old, dx = dx, x - x_newton
            x = x_newton
        if abs(dx) <= xtol:
            return x
    raise NumericError(f"safeguarded Newton did not converge in {max_iter} iterations")
