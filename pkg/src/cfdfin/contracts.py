"""Contract specifications, hourly dispatch and settlement, annual revenues.

Two evaluation routes exist and are kept deliberately separate:

* :func:`hourly_cashflows` settles every hour explicitly (vectorized), the
  reference route used for hourly outputs and as a test oracle.
* :class:`RevenueCurve` pre-sorts each year's hours by price so that annual
  revenue under any support level costs a binary search per year. The
  equilibrium solver calls it tens of times per park and contract.

All annual figures are normalized by the park's installed capacity.
"""

from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .timeseries import MarketDataset, ParkSeries


class Kind(str, enum.Enum):
    MERCHANT = "merchant"
    TWO_SIDED = "two_sided"
    ONE_SIDED = "one_sided"
    FINANCIAL = "financial"


class ReferenceMode(str, enum.Enum):
    HOURLY_SPOT = "hourly_spot"
    ANNUAL_CAPTURE = "annual_capture"


class AlphaMode(str, enum.Enum):
    FIXED = "fixed"
    FLEET_OPTIMAL = "fleet_optimal"
    TECH_ADJUSTED = "tech_adjusted"
    PARK_OPTIMAL = "park_optimal"


@dataclass(frozen=True)
class ContractSpec:
    kind: Kind
    reference_mode: ReferenceMode | None = None
    suspend_negative: bool = False
    alpha_mode: AlphaMode | None = None
    alpha: float | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.MERCHANT:
            if self.reference_mode or self.suspend_negative or self.alpha_mode or self.alpha is not None:
                raise ConfigError("merchant contract carries no parameters")
        elif kind is Kind.FINANCIAL:
            if self.reference_mode is not None or self.suspend_negative:
                raise ConfigError("financial CfD takes no reference mode or suspension flag")
            mode = AlphaMode(self.alpha_mode or AlphaMode.FIXED)
            object.__setattr__(self, "alpha_mode", mode)
            if mode is AlphaMode.FIXED:
                alpha = 1.0 if self.alpha is None else float(self.alpha)
                if not (math.isfinite(alpha) and alpha >= 0):
                    raise ConfigError(f"contract factor must be finite and >= 0, got {alpha}")
                object.__setattr__(self, "alpha", alpha)
            elif self.alpha is not None:
                raise ConfigError("only fixed contract factors take an explicit alpha")
        else:
            if self.alpha_mode is not None or self.alpha is not None:
                raise ConfigError("contract factors apply to financial CfDs only")
            ref = ReferenceMode(self.reference_mode or ReferenceMode.HOURLY_SPOT)
            object.__setattr__(self, "reference_mode", ref)

    @property
    def is_cfd(self) -> bool:
        return self.kind in (Kind.TWO_SIDED, Kind.ONE_SIDED)

    @property
    def contract_id(self) -> str:
        if self.kind is Kind.MERCHANT:
            return "merchant"
        if self.kind is Kind.FINANCIAL:
            if self.alpha_mode is AlphaMode.FIXED:
                return f"fcfd_fixed_{self.alpha:g}"
            return {
                AlphaMode.FLEET_OPTIMAL: "fcfd_fleet",
                AlphaMode.TECH_ADJUSTED: "fcfd_tech",
                AlphaMode.PARK_OPTIMAL: "fcfd_park",
            }[self.alpha_mode]
        prefix = "2cfd" if self.kind is Kind.TWO_SIDED else "1cfd"
        ref = "hourly" if self.reference_mode is ReferenceMode.HOURLY_SPOT else "annual"
        return f"{prefix}_{ref}" + ("_susp" if self.suspend_negative else "")

    @classmethod
    def from_id(cls, contract_id: str) -> "ContractSpec":
        if contract_id == "merchant":
            return MERCHANT
        if contract_id.startswith("fcfd_"):
            rest = contract_id[5:]
            named = {"fleet": AlphaMode.FLEET_OPTIMAL, "tech": AlphaMode.TECH_ADJUSTED,
                     "park": AlphaMode.PARK_OPTIMAL}
            if rest in named:
                return cls(Kind.FINANCIAL, alpha_mode=named[rest])
            if rest.startswith("fixed_"):
                try:
                    alpha = float(rest[6:])
                except ValueError:
                    raise ConfigError(f"unknown contract id {contract_id!r}") from None
                return cls(Kind.FINANCIAL, alpha_mode=AlphaMode.FIXED, alpha=alpha)
            raise ConfigError(f"unknown contract id {contract_id!r}")
        parts = contract_id.split("_")
        kinds = {"2cfd": Kind.TWO_SIDED, "1cfd": Kind.ONE_SIDED}
        refs = {"hourly": ReferenceMode.HOURLY_SPOT, "annual": ReferenceMode.ANNUAL_CAPTURE}
        if len(parts) in (2, 3) and parts[0] in kinds and parts[1] in refs:
            if len(parts) == 3 and parts[2] != "susp":
                raise ConfigError(f"unknown contract id {contract_id!r}")
            return cls(kinds[parts[0]], refs[parts[1]], suspend_negative=len(parts) == 3)
        raise ConfigError(f"unknown contract id {contract_id!r}")


MERCHANT = ContractSpec(Kind.MERCHANT)

# Merchant benchmark followed by the ten contract specifications, figure order.
STANDARD_SPECS: tuple[ContractSpec, ...] = (
    MERCHANT,
    ContractSpec(Kind.TWO_SIDED, ReferenceMode.HOURLY_SPOT),
    ContractSpec(Kind.TWO_SIDED, ReferenceMode.ANNUAL_CAPTURE),
    ContractSpec(Kind.TWO_SIDED, ReferenceMode.ANNUAL_CAPTURE, suspend_negative=True),
    ContractSpec(Kind.ONE_SIDED, ReferenceMode.HOURLY_SPOT),
    ContractSpec(Kind.ONE_SIDED, ReferenceMode.ANNUAL_CAPTURE),
    ContractSpec(Kind.ONE_SIDED, ReferenceMode.ANNUAL_CAPTURE, suspend_negative=True),
    ContractSpec(Kind.FINANCIAL, alpha_mode=AlphaMode.FIXED, alpha=1.0),
    ContractSpec(Kind.FINANCIAL, alpha_mode=AlphaMode.FLEET_OPTIMAL),
    ContractSpec(Kind.FINANCIAL, alpha_mode=AlphaMode.TECH_ADJUSTED),
    ContractSpec(Kind.FINANCIAL, alpha_mode=AlphaMode.PARK_OPTIMAL),
)
STANDARD_IDS = tuple(s.contract_id for s in STANDARD_SPECS)


def figure_order(specs: Sequence[ContractSpec]) -> list[ContractSpec]:
    """Sort specs into report order: merchant, 2CfD, 1CfD, financial."""
    def key(spec):
        cid = spec.contract_id
        if cid in STANDARD_IDS:
            return (STANDARD_IDS.index(cid), 0.0)
        return (len(STANDARD_IDS), spec.alpha or 0.0)
    return sorted(specs, key=key)


@dataclass(frozen=True)
class SupportLevel:
    strike: float | None = None
    fixed_rate: float | None = None

    def __post_init__(self):
        for name in ("strike", "fixed_rate"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.fixed_rate is not None and self.fixed_rate < 0:
            raise ValueError("fixed_rate must be non-negative")

    @property
    def value(self) -> float | None:
        return self.strike if self.strike is not None else self.fixed_rate


def support_for(spec: ContractSpec, x: float | None) -> SupportLevel:
    """Wrap a scalar support level in the field the contract kind uses."""
    if spec.kind is Kind.MERCHANT or x is None:
        return SupportLevel()
    if spec.kind is Kind.FINANCIAL:
        return SupportLevel(fixed_rate=x)
    return SupportLevel(strike=x)


@dataclass(frozen=True)
class HourState:
    price: float
    potential_mwh: float
    annual_capture: float | None = None


@dataclass(frozen=True)
class HourlyCashFlow:
    dispatched_mwh: float
    market_income: float
    support_payment: float

    @property
    def total(self) -> float:
        return self.market_income + self.support_payment


def contracted_capacity(alpha: float, capacity_mw: float) -> float:
    if alpha < 0:
        raise ValueError(f"contract factor must be non-negative, got {alpha}")
    if capacity_mw <= 0:
        raise ValueError("installed capacity must be positive")
    return alpha * capacity_mw


# --------------------------------------------------------------------------- scalar hour


def _strike(level: SupportLevel) -> float:
    if level.strike is None:
        raise ValueError("CfD contracts need a strike price")
    return level.strike


def _reference(spec: ContractSpec, hour: HourState) -> float:
    if spec.reference_mode is ReferenceMode.HOURLY_SPOT:
        return hour.price
    if hour.annual_capture is None:
        raise ValueError("annual-capture reference needs the annual capture price")
    return hour.annual_capture


def unit_revenue(spec: ContractSpec, level: SupportLevel, hour: HourState) -> float:
    """Revenue per MWh the generator earns by producing in this hour."""
    p = hour.price
    if spec.kind in (Kind.MERCHANT, Kind.FINANCIAL):
        return p
    if spec.suspend_negative and p <= 0:
        return p
    s = _strike(level)
    if spec.kind is Kind.TWO_SIDED:
        if spec.reference_mode is ReferenceMode.HOURLY_SPOT:
            return s
        return p + (s - _reference(spec, hour))
    if spec.reference_mode is ReferenceMode.HOURLY_SPOT:
        return max(p, s)
    return p + max(s - _reference(spec, hour), 0.0)


def dispatch_quantity(spec: ContractSpec, level: SupportLevel, hour: HourState) -> float:
    """Produce the full potential only at strictly positive unit revenue."""
    if hour.potential_mwh < 0:
        raise ValueError("potential generation must be non-negative")
    return hour.potential_mwh if unit_revenue(spec, level, hour) > 0 else 0.0


def hourly_cashflow(
    spec: ContractSpec,
    level: SupportLevel,
    hour: HourState,
    k: float = 0.0,
    g_ref: float | None = None,
) -> HourlyCashFlow:
    q = dispatch_quantity(spec, level, hour)
    p = hour.price
    market = q * p
    if spec.kind is Kind.MERCHANT:
        support = 0.0
    elif spec.kind is Kind.FINANCIAL:
        if g_ref is None:
            raise ValueError("financial CfD needs the reference capacity factor")
        a = level.fixed_rate if level.fixed_rate is not None else 0.0
        support = k * a - k * g_ref * p
    else:
        s = _strike(level)
        diff = s - _reference(spec, hour)
        if spec.kind is Kind.ONE_SIDED:
            diff = max(diff, 0.0)
        support = 0.0 if (spec.suspend_negative and p < 0) else q * diff
    return HourlyCashFlow(q, market, support)


# --------------------------------------------------------------------------- vectorized hours


def annual_capture_prices(dataset: MarketDataset) -> dict[int, float]:
    """Fleet-generation-weighted spot price per retained year."""
    from .riskmetrics import annual_capture_price

    return {y: annual_capture_price(dataset.price, dataset.fleet, y) for y in dataset.years}


def hourly_cashflows(
    spec: ContractSpec,
    level: SupportLevel,
    price: np.ndarray,
    potential: np.ndarray,
    annual_capture: np.ndarray | None = None,
    k: float = 0.0,
    g_ref: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Settle every hour; returns dispatched MWh, market income, support and total."""
    price = np.asarray(price, dtype=float)
    potential = np.asarray(potential, dtype=float)
    if (potential < 0).any():
        raise ValueError("potential generation must be non-negative")

    if spec.kind in (Kind.MERCHANT, Kind.FINANCIAL):
        unit = price
    else:
        s = _strike(level)
        if spec.reference_mode is ReferenceMode.HOURLY_SPOT:
            ref = price
        else:
            if annual_capture is None:
                raise ValueError("annual-capture reference needs annual capture prices")
            ref = np.asarray(annual_capture, dtype=float)
        diff = s - ref
        if spec.kind is Kind.ONE_SIDED:
            diff = np.maximum(diff, 0.0)
        if spec.kind is Kind.TWO_SIDED and spec.reference_mode is ReferenceMode.HOURLY_SPOT:
            unit = np.full_like(price, s)
        elif spec.reference_mode is ReferenceMode.HOURLY_SPOT:
            unit = np.maximum(price, s)
        else:
            unit = price + diff
        if spec.suspend_negative:
            unit = np.where(price <= 0, price, unit)

    q = np.where(unit > 0, potential, 0.0)
    market = q * price
    if spec.kind is Kind.MERCHANT:
        support = np.zeros_like(price)
    elif spec.kind is Kind.FINANCIAL:
        if g_ref is None:
            raise ValueError("financial CfD needs the reference capacity factor")
        a = level.fixed_rate if level.fixed_rate is not None else 0.0
        support = k * a - k * np.asarray(g_ref, dtype=float) * price
    else:
        support = q * diff
        if spec.suspend_negative:
            support = np.where(price < 0, 0.0, support)
    return {"dispatched": q, "market": market, "support": support, "total": market + support}


# --------------------------------------------------------------------------- annual tables


@dataclass(frozen=True, eq=False)
class AnnualRevenueTable:
    park_id: str
    contract_id: str
    years: tuple[int, ...]
    revenue_per_mw: np.ndarray
    generation_per_mw: np.ndarray

    def __post_init__(self):
        rev = np.array(self.revenue_per_mw, dtype=float)
        gen = np.array(self.generation_per_mw, dtype=float)
        if rev.shape != (len(self.years),) or gen.shape != rev.shape:
            raise ValueError("annual revenue table: one row per year required")
        if not np.isfinite(rev).all():
            raise ValueError("annual revenue table: non-finite revenue")
        rev.setflags(write=False)
        gen.setflags(write=False)
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        object.__setattr__(self, "revenue_per_mw", rev)
        object.__setattr__(self, "generation_per_mw", gen)

    def rows(self) -> list[dict]:
        return [
            {
                "park_id": self.park_id,
                "contract_id": self.contract_id,
                "year": y,
                "revenue_eur_per_mw": float(r),
                "generation_mwh_per_mw": float(g),
            }
            for y, r, g in zip(self.years, self.revenue_per_mw, self.generation_per_mw)
        ]


def resolve_fixed_alpha(spec: ContractSpec, alpha: float | None) -> float:
    if spec.kind is not Kind.FINANCIAL:
        return 0.0
    if alpha is None:
        if spec.alpha_mode is not AlphaMode.FIXED:
            raise ValueError(f"{spec.contract_id}: contract factor must be resolved first")
        alpha = spec.alpha
    if alpha < 0:
        raise ValueError("contract factor must be non-negative")
    return float(alpha)


def simulate_hourly(
    spec: ContractSpec,
    level: SupportLevel,
    dataset: MarketDataset,
    park: ParkSeries,
    alpha: float | None = None,
) -> dict[str, np.ndarray]:
    """Hour-by-hour settlement of one park over the whole dataset, in euros."""
    if park.park_id not in {p.park_id for p in dataset.parks}:
        raise DataError(f"park {park.park_id} is not part of the dataset")
    a = resolve_fixed_alpha(spec, alpha)
    k = contracted_capacity(a, park.installed_capacity_mw) if spec.kind is Kind.FINANCIAL else 0.0
    capture = None
    if spec.is_cfd and spec.reference_mode is ReferenceMode.ANNUAL_CAPTURE:
        by_year = annual_capture_prices(dataset)
        capture = np.array([by_year[int(y)] for y in dataset.year_index])
    return hourly_cashflows(
        spec, level, dataset.price.price, park.potential_generation,
        annual_capture=capture, k=k, g_ref=dataset.reference.capacity_factor,
    )


def simulate_annual_revenues_hourly(
    spec: ContractSpec,
    level: SupportLevel,
    dataset: MarketDataset,
    park: ParkSeries,
    alpha: float | None = None,
) -> AnnualRevenueTable:
    """Annual revenues by summing explicit hourly settlement."""
    flows = simulate_hourly(spec, level, dataset, park, alpha)
    codes = dataset.year_codes()
    n = len(dataset.years)
    k_inst = park.installed_capacity_mw
    revenue = np.bincount(codes, weights=flows["total"], minlength=n) / k_inst
    generation = np.bincount(codes, weights=flows["dispatched"], minlength=n) / k_inst
    return AnnualRevenueTable(park.park_id, spec.contract_id, dataset.years, revenue, generation)


class RevenueCurve:
    """Annual revenue of one park as a function of the support level.

    Each year's hours are sorted by price once; suffix sums of dispatchable
    energy and energy-weighted price then give the revenue of any dispatch
    threshold by binary search. Financial CfDs are affine in the fixed rate
    and are evaluated from three per-year aggregates.
    """

    def __init__(self, spec: ContractSpec, dataset: MarketDataset, park: ParkSeries,
                 alpha: float | None = None):
        self.spec = spec
        self.park_id = park.park_id
        self.years = dataset.years
        self.alpha = resolve_fixed_alpha(spec, alpha)
        codes = dataset.year_codes()
        price = dataset.price.price
        q = park.potential_generation / park.installed_capacity_mw
        capture = annual_capture_prices(dataset) if spec.is_cfd else None

        self._sorted_price = []
        self._suffix_q = []
        self._suffix_qp = []
        self._capture = []
        for i, y in enumerate(self.years):
            mask = codes == i
            p_y = price[mask]
            order = np.argsort(p_y, kind="stable")
            p_s = p_y[order]
            q_s = q[mask][order]
            self._sorted_price.append(p_s)
            self._suffix_q.append(np.append(np.cumsum(q_s[::-1])[::-1], 0.0))
            self._suffix_qp.append(np.append(np.cumsum((q_s * p_s)[::-1])[::-1], 0.0))
            self._capture.append(capture[y] if capture is not None else None)

        self._merchant = np.array([self._above(i, 0.0) for i in range(len(self.years))])
        if spec.kind is Kind.FINANCIAL:
            g = dataset.reference.capacity_factor
            self._hours = np.bincount(codes, minlength=len(self.years)).astype(float)
            self._ref_value = np.bincount(codes, weights=g * price, minlength=len(self.years))
            self.reference_mean = float(g.mean())

    def with_alpha(self, spec: ContractSpec, alpha: float | None = None) -> "RevenueCurve":
        """Financial curve for another contract factor, sharing the sorted data."""
        if self.spec.kind is not Kind.FINANCIAL or spec.kind is not Kind.FINANCIAL:
            raise ValueError("with_alpha applies to financial CfDs only")
        clone = copy.copy(self)
        clone.spec = spec
        clone.alpha = resolve_fixed_alpha(spec, alpha)
        return clone

    def _above(self, i: int, threshold: float) -> tuple[float, float]:
        """(energy, energy x price) over hours with price strictly above threshold."""
        j = int(np.searchsorted(self._sorted_price[i], threshold, side="right"))
        return self._suffix_q[i][j], self._suffix_qp[i][j]

    def _all(self, i: int) -> tuple[float, float]:
        return self._suffix_q[i][0], self._suffix_qp[i][0]

    def __call__(self, x: float | None) -> tuple[np.ndarray, np.ndarray]:
        """Return (revenue per MW, dispatched MWh per MW) by year at support level x."""
        spec = self.spec
        n = len(self.years)
        if spec.kind is Kind.MERCHANT:
            return self._merchant[:, 1].copy(), self._merchant[:, 0].copy()
        if spec.kind is Kind.FINANCIAL:
            a = 0.0 if x is None else float(x)
            extra = self.alpha * (a * self._hours - self._ref_value)
            return self._merchant[:, 1] + extra, self._merchant[:, 0].copy()

        s = float(x)
        rev = np.empty(n)
        gen = np.empty(n)
        for i in range(n):
            if spec.reference_mode is ReferenceMode.HOURLY_SPOT:
                lo = spec.suspend_negative or s <= 0
                base_q, base_qp = self._above(i, 0.0) if lo else self._all(i)
                if spec.kind is Kind.TWO_SIDED:
                    gen[i] = base_q if s > 0 else 0.0
                    rev[i] = s * gen[i]
                else:
                    # hours priced up to the strike earn the strike, the rest the spot price
                    hi_q, hi_qp = self._above(i, s) if s > 0 else (base_q, base_qp)
                    gen[i] = base_q
                    rev[i] = s * (base_q - hi_q) + hi_qp
            else:
                v = self._capture[i]
                premium = s - v if spec.kind is Kind.TWO_SIDED else max(s - v, 0.0)
                threshold = -premium
                if spec.suspend_negative:
                    threshold = max(threshold, 0.0)
                q_sum, qp_sum = self._above(i, threshold)
                gen[i] = q_sum
                rev[i] = qp_sum + premium * q_sum
        return rev, gen

    def table(self, x: float | None) -> AnnualRevenueTable:
        rev, gen = self(x)
        return AnnualRevenueTable(self.park_id, self.spec.contract_id, self.years, rev, gen)


def simulate_annual_revenues(
    spec: ContractSpec,
    level: SupportLevel,
    dataset: MarketDataset,
    park: ParkSeries,
    alpha: float | None = None,
) -> AnnualRevenueTable:
    """Annual revenue and dispatched energy per MW installed, one row per year."""
    if park.park_id not in {p.park_id for p in dataset.parks}:
        raise DataError(f"park {park.park_id} is not part of the dataset")
    return RevenueCurve(spec, dataset, park, alpha).table(level.value)


RevenueFunction = Callable[[float | None], tuple[np.ndarray, np.ndarray]]
