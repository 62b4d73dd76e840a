"""Bracketed root finding for monotone scalar functions.

Every equation solved in this package (Moran roots, the averaged Moran
equation, the family cascade) has a provably monotone left-hand side, so
the solvers here keep a sign-change bracket at all times and only accept a
Newton step when it stays inside the bracket.
"""

from __future__ import annotations

import math
from typing import Callable, Optional


class NoBracket(RuntimeError):
    """No sign change was found on the probed range."""

    def __init__(self, message: str, lo_value: float = math.nan, hi_value: float = math.nan):
        super().__init__(message)
        self.lo_value = lo_value
        self.hi_value = hi_value


def bisect_newton(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    fprime: Optional[Callable[[float], float]] = None,
    xtol: float = 1e-12,
    polish: int = 2,
    maxiter: int = 400,
    f_lo: Optional[float] = None,
    f_hi: Optional[float] = None,
    x0: Optional[float] = None,
) -> float:
    """Find the root of ``f`` inside ``[lo, hi]``.

    ``f(lo)`` and ``f(hi)`` must have opposite signs (zero at an endpoint
    returns that endpoint). Newton steps are taken when ``fprime`` is given
    and the step lands strictly inside the current bracket; otherwise the
    bracket is bisected. ``x0`` (inside the bracket) replaces the midpoint as
    the first iterate. After the bracket is narrower than ``xtol`` up to
    ``polish`` guarded Newton steps are applied.
    """
    if f_lo is None:
        f_lo = f(lo)
    if f_lo == 0.0:
        return lo
    if f_hi is None:
        f_hi = f(hi)
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise NoBracket(f"no sign change on [{lo}, {hi}]", f_lo, f_hi)
    increasing = f_hi > 0

    x = x0 if x0 is not None and lo < x0 < hi else 0.5 * (lo + hi)
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0.0:
            return x
        if (fx > 0) == increasing:
            hi = x
        else:
            lo = x
        if hi - lo <= xtol:
            break
        nxt = math.nan
        if fprime is not None:
            d = fprime(x)
            if d != 0.0 and math.isfinite(d):
                nxt = x - fx / d
        if lo < nxt < hi:
            if abs(nxt - x) <= 0.25 * xtol:
                return nxt
        else:
            nxt = 0.5 * (lo + hi)
        x = nxt
    else:
        return x

    x = 0.5 * (lo + hi)
    if fprime is not None:
        for _ in range(polish):
            fx = f(x)
            d = fprime(x)
            if fx == 0.0 or d == 0.0 or not math.isfinite(d):
                break
            nxt = x - fx / d
            if abs(nxt - x) > 4 * max(xtol, hi - lo):
                break
            x = nxt
    return x


def expand_bracket(
    f: Callable[[float], float],
    center: float = 0.0,
    width: float = 1.0,
    factor: float = 2.0,
    limit: float = 1e6,
) -> tuple[float, float, float, float]:
    """Grow ``[center - width, center + width]`` until ``f`` changes sign.

    Assumes ``f`` is increasing. Returns ``(lo, hi, f(lo), f(hi))``.
    Raises :class:`NoBracket` with the last endpoint values once the
    half-width exceeds ``limit``.
    """
    lo, hi = center - width, center + width
    f_lo, f_hi = f(lo), f(hi)
    while True:
        if f_lo <= 0.0 <= f_hi:
            return lo, hi, f_lo, f_hi
        if width > limit:
            raise NoBracket(
                f"no sign change within |x - {center}| <= {limit:g}", f_lo, f_hi
            )
        width *= factor
        if f_lo > 0.0:
            hi, f_hi = lo, f_lo
            lo = center - width
            f_lo = f(lo)
        else:
            lo, f_lo = hi, f_hi
            hi = center + width
            f_hi = f(hi)
