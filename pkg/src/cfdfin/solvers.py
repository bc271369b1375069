"""One-dimensional bracketing root finder and minimizer."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class RootResult:
    lo: float
    hi: float
    f_lo: float
    f_hi: float
    iterations: int
    monotone: bool = True


def bisect_increasing(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float,
    max_iter: int = 200,
    f_lo: float | None = None,
    f_hi: float | None = None,
) -> RootResult:
    """Shrink [lo, hi] with f(lo) < 0 <= f(hi) until its width is below xtol.

    The returned ``hi`` always satisfies f(hi) >= 0.
    """
    f_lo = f(lo) if f_lo is None else f_lo
    f_hi = f(hi) if f_hi is None else f_hi
    if not (f_lo < 0 <= f_hi):
        raise ValueError(f"no sign change on [{lo}, {hi}]: f={f_lo}, {f_hi}")
    it = 0
    while it < max_iter and hi - lo > xtol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = f(mid)
        it += 1
        if f_mid >= 0:
            hi, f_hi = mid, f_mid
            if f_mid == 0:
                break
        else:
            lo, f_lo = mid, f_mid
    return RootResult(lo, hi, f_lo, f_hi, it)


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float,
                   max_iter: int = 200) -> tuple[float, float]:
    """Minimize a quasi-convex f on [lo, hi] to an interval narrower than tol."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass
class MinimizeResult:
    x: float
    fx: float
    audit_passed: bool
    evaluations: dict = field(repr=False, default_factory=dict)


def minimize_scalar_audited(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    grid_points: int = 21,
    candidates: Sequence[float] = (),
    label: str = "",
) -> MinimizeResult:
    """Golden-section search, local grid refinement, then a coarse grid audit.

    When the coarse grid finds a lower value than the golden-section result the
    objective is not quasi-convex; the search restarts around the grid minimum.
    Extra ``candidates`` are always evaluated, so the result never exceeds the
    objective at any of them.
    """
    cache: dict[float, float] = {}

    def fm(x: float) -> float:
        x = float(min(max(x, lo), hi))
        if x not in cache:
            cache[x] = float(f(x))
        return cache[x]

    x_best, f_best = golden_section(fm, lo, hi, tol)
    for x in np.linspace(x_best - 2 * tol, x_best + 2 * tol, 9):
        if fm(x) < f_best:
            x_best, f_best = float(min(max(x, lo), hi)), fm(x)

    grid = np.linspace(lo, hi, grid_points)
    values = np.array([fm(x) for x in grid])
    j = int(np.argmin(values))
    audit_passed = not values[j] < f_best - 1e-9 * max(1.0, abs(f_best))
    if not audit_passed:
        log.warning("%s objective not quasi-convex: grid minimum %.6g at %.4g below golden %.6g at %.4g",
                    label, values[j], grid[j], f_best, x_best)
        a, b = grid[max(j - 1, 0)], grid[min(j + 1, grid_points - 1)]
        x_loc, f_loc = golden_section(fm, a, b, tol)
        x_best, f_best = (x_loc, f_loc) if f_loc < values[j] else (float(grid[j]), float(values[j]))

    for x in candidates:
        if fm(x) < f_best:
            x_best, f_best = float(min(max(x, lo), hi)), fm(x)
    return MinimizeResult(float(x_best), float(f_best), audit_passed, cache)
