"""Scalar root helpers shared by the rate-function routines."""

from __future__ import annotations

import math
from typing import Callable

from scipy import optimize


class NoRoot(RuntimeError):
    """No positive root on the increasing branch of the function."""


def expand_upper(f: Callable[[float], float], hi: float, limit: float = 1e3) -> float:
    """Double ``hi`` until ``f(hi) > 0``."""
    while f(hi) <= 0:
        hi *= 2.0
        if hi > limit:
            raise NoRoot(f"function stays non-positive up to theta={limit}")
    return hi


def largest_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-6,
    xtol: float = 1e-13,
) -> tuple[float, float]:
    """Largest root of a convex ``f`` on (lo, inf) lying on its increasing branch.

    The minimizer is located by bounded golden-section/parabolic search, then
    the crossing to its right is bracketed and bisected (Brent).  Returns
    ``(root, argmin)``.  Raises :class:`NoRoot` if ``f`` is positive at the
    located minimum.
    """
    hi = expand_upper(f, hi)
    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": tol * 1e-2})
    tmin, fmin = float(res.x), float(res.fun)
    if f(lo) < fmin:
        tmin, fmin = lo, f(lo)
    if not fmin < 0:
        raise NoRoot(f"minimum {fmin:.3g} at theta={tmin:.6g} is not negative")
    root = optimize.brentq(f, tmin, hi, xtol=xtol, rtol=1e-15, maxiter=500)
    return float(root), tmin


def newton_polish(f: Callable[[float], float], df: Callable[[float], float], x: float, ftol: float, steps: int = 8) -> float:
    for _ in range(steps):
        fx = f(x)
        if abs(fx) <= ftol:
            break
        d = df(x)
        if d == 0 or not math.isfinite(d):
            break
        x -= fx / d
    return x
