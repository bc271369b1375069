"""Capture prices, coefficient of variation and annual revenue summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .contracts import AnnualRevenueTable
from .errors import DataError, UndefinedMetricError
from .timeseries import FleetSeries, PriceSeries


def annual_capture_price(price: PriceSeries, fleet: FleetSeries, year: int) -> float:
    """Fleet-generation-weighted average spot price over one calendar year."""
    if not price.hours.equals(fleet.hours):
        raise DataError("capture price: price and fleet hour indices differ")
    mask = np.asarray(price.hours.year == year)
    if not mask.any():
        raise DataError(f"capture price: year {year} not present")
    q = fleet.generation[mask]
    total = q.sum()
    if total <= 0:
        raise DataError(f"capture price: zero fleet generation in {year}")
    return float(np.dot(q, price.price[mask]) / total)


def coefficient_of_variation(revenues: Sequence[float]) -> float:
    """Sample standard deviation (n-1) over the mean."""
    r = np.asarray(revenues, dtype=float)
    if r.size < 2:
        raise ValueError("coefficient of variation needs at least two years")
    mean = r.mean()
    if not mean > 0:
        raise UndefinedMetricError(f"coefficient of variation undefined for mean {mean:.6g}")
    return float(r.std(ddof=1) / mean)


@dataclass(frozen=True)
class AchievedPrice:
    by_year: tuple[float, ...]
    pooled: float


def achieved_price(table: AnnualRevenueTable) -> AchievedPrice:
    gen = table.generation_per_mw
    if (gen <= 0).any():
        bad = [y for y, g in zip(table.years, gen) if g <= 0]
        raise DataError(f"achieved price: zero generation in {bad}")
    by_year = tuple(float(r / g) for r, g in zip(table.revenue_per_mw, gen))
    return AchievedPrice(by_year, float(table.revenue_per_mw.sum() / gen.sum()))


@dataclass(frozen=True)
class RiskSummary:
    mean: float
    std: float
    cov: float  # nan when the mean is not positive
    min: float
    p10: float
    p50: float
    p90: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "cov": None if math.isnan(self.cov) else self.cov,
            "min": self.min,
            "p10": self.p10,
            "p50": self.p50,
            "p90": self.p90,
        }


def risk_summary(revenues: Sequence[float]) -> RiskSummary:
    r = np.asarray(revenues, dtype=float)
    if r.size == 0:
        raise ValueError("risk summary needs at least one year")
    p10, p50, p90 = np.percentile(r, [10, 50, 90], method="linear")
    mean = float(r.mean())
    if r.size == 1:
        return RiskSummary(mean, 0.0, math.nan if mean <= 0 else 0.0, float(r[0]),
                           float(p10), float(p50), float(p90), degenerate=True)
    try:
        cov = coefficient_of_variation(r)
    except UndefinedMetricError:
        cov = math.nan
    return RiskSummary(mean, float(r.std(ddof=1)), cov, float(r.min()),
                       float(p10), float(p50), float(p90))
