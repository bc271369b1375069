"""Project-finance model: debt sizing, equity participation, WACC, LCOE.

Every monetary quantity is per MW of installed capacity (cost inputs are
quoted per kW and converted on access). Debt is a level annuity over the
project life sized so the worst observed year still covers debt service.
Equity is valued on the mean dividend across observed years, each year
counted as an equally likely state held for the whole project life.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contracts import (
    AlphaMode,
    ContractSpec,
    Kind,
    RevenueCurve,
    SupportLevel,
    support_for,
)
from .errors import ConfigError, DataError, SolverError
from .solvers import bisect_increasing, minimize_scalar_audited
from .timeseries import MarketDataset, ParkSeries

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostParams:
    capex: float = 1500.0  # EUR/kW
    opex: float = 50.0  # EUR/kW/a
    cost_of_debt: float = 0.0115
    cost_of_equity: float = 0.10
    lifetime_years: int = 30

    def __post_init__(self):
        if not self.capex > 0:
            raise ConfigError("capex must be positive")
        if not self.opex >= 0:
            raise ConfigError("opex must be non-negative")
        if not 0 <= self.cost_of_debt < self.cost_of_equity:
            raise ConfigError("need 0 <= cost_of_debt < cost_of_equity")
        if int(self.lifetime_years) != self.lifetime_years or self.lifetime_years < 1:
            raise ConfigError("lifetime_years must be a positive integer")

    @property
    def capex_per_mw(self) -> float:
        return self.capex * 1000.0

    @property
    def opex_per_mw(self) -> float:
        return self.opex * 1000.0


BASELINE_COSTS = CostParams()


def annuity_factor(rate: float, years: int) -> float:
    """Level payment per unit of principal repaid over ``years``."""
    if years < 1:
        raise ValueError("years must be at least 1")
    if rate == 0:
        return 1.0 / years
    # expm1/log1p keeps tiny positive rates accurate instead of dividing by zero
    return rate / -math.expm1(-years * math.log1p(rate))


def annuity_payment(debt: float, rate: float, years: int) -> float:
    if debt < 0:
        raise ValueError("debt must be non-negative")
    if debt == 0:
        return 0.0
    return debt * annuity_factor(rate, years)


def amortization_schedule(debt: float, rate: float, years: int) -> np.ndarray:
    """Outstanding balance after each annual payment, ``years`` entries."""
    payment = annuity_payment(debt, rate, years)
    balances = np.empty(years)
    balance = debt
    for y in range(years):
        balance = balance * (1.0 + rate) - payment
        balances[y] = balance
    return balances


def max_debt(net_cash_flows: Sequence[float], costs: CostParams, investment_cap: float) -> float:
    """Largest annuity loan whose service every year's net cash flow covers."""
    cf = np.asarray(net_cash_flows, dtype=float)
    if cf.size == 0:
        return 0.0
    worst = float(cf.min())
    if worst <= 0:
        return 0.0
    return min(investment_cap, worst / annuity_factor(costs.cost_of_debt, costs.lifetime_years))


def equity_npv(expected_dividend: float, costs: CostParams) -> float:
    """Present value of a constant expected dividend over the project life."""
    r, years = costs.cost_of_equity, costs.lifetime_years
    if r == 0:
        return expected_dividend * years
    return expected_dividend * (1.0 - (1.0 + r) ** -years) / r


@dataclass(frozen=True)
class CapitalStructure:
    total_investment: float
    debt: float
    equity: float
    debt_service: float

    def __post_init__(self):
        if not 0 <= self.debt <= self.total_investment * (1 + 1e-12):
            raise ValueError("debt must lie between zero and total investment")

    @property
    def leverage(self) -> float:
        return self.debt / self.total_investment


def capital_structure(net_cash_flows: Sequence[float], costs: CostParams) -> CapitalStructure:
    invest = costs.capex_per_mw
    debt = max_debt(net_cash_flows, costs, invest)
    service = annuity_payment(debt, costs.cost_of_debt, costs.lifetime_years)
    return CapitalStructure(invest, debt, invest - debt, service)


def wacc(structure: CapitalStructure, costs: CostParams) -> float:
    return (
        structure.debt * costs.cost_of_debt + structure.equity * costs.cost_of_equity
    ) / structure.total_investment


def lcoe(structure: CapitalStructure, costs: CostParams, mean_generation: float) -> float:
    """Break-even price per MWh: O&M plus debt and equity each annualized at its own rate.

    Equals the WACC-annuity form at zero or full leverage; in between, it is
    the price at which the equity participation constraint binds exactly.
    """
    if not mean_generation > 0:
        raise DataError("LCOE needs positive mean generation")
    years = costs.lifetime_years
    capital = (
        structure.debt * annuity_factor(costs.cost_of_debt, years)
        + structure.equity * annuity_factor(costs.cost_of_equity, years)
    )
    return (capital + costs.opex_per_mw) / mean_generation


@dataclass(frozen=True)
class SolverSettings:
    strike_bracket: tuple[float, float] = (-50.0, 500.0)
    max_expansion: float = 10.0
    xtol: float = 1e-12
    max_iter: int = 200
    audit_points: int = 9
    scan_points: int = 1001
    gap_tol: float = 1e-6
    alpha_max: float = 2.0
    alpha_tol: float = 1e-3
    alpha_grid_points: int = 21


DEFAULT_SETTINGS = SolverSettings()


@dataclass(frozen=True, eq=False)
class FinanceResult:
    park_id: str
    contract_id: str
    alpha: float | None
    support: SupportLevel
    structure: CapitalStructure
    wacc: float
    lcoe: float
    equity_gap: float
    min_dscr: float | None
    years: tuple[int, ...]
    revenue_per_mw: np.ndarray = field(repr=False)
    generation_per_mw: np.ndarray = field(repr=False)
    dividends: np.ndarray = field(repr=False)
    flags: dict = field(default_factory=dict)

    @property
    def leverage(self) -> float:
        return self.structure.leverage

    @property
    def mean_generation(self) -> float:
        return float(self.generation_per_mw.mean())

    @property
    def achieved_price(self) -> float:
        """Pooled revenue per MWh dispatched across all years."""
        return float(self.revenue_per_mw.sum() / self.generation_per_mw.sum())

    def row(self) -> dict:
        return {
            "park_id": self.park_id,
            "contract_id": self.contract_id,
            "alpha": self.alpha,
            "support_level": self.support.value,
            "debt": self.structure.debt,
            "equity": self.structure.equity,
            "leverage": self.leverage,
            "wacc": self.wacc,
            "lcoe": self.lcoe,
            "min_dscr_year": self.min_dscr,
            "equity_gap": self.equity_gap,
        }


def _gap(revenue: np.ndarray, costs: CostParams) -> float:
    cf = revenue - costs.opex_per_mw
    invest = costs.capex_per_mw
    debt = max_debt(cf, costs, invest)
    service = annuity_payment(debt, costs.cost_of_debt, costs.lifetime_years)
    return equity_npv(float(cf.mean()) - service, costs) - (invest - debt)


def evaluate_financing(
    revenue_per_mw: np.ndarray,
    generation_per_mw: np.ndarray,
    costs: CostParams,
    *,
    park_id: str = "",
    contract_id: str = "",
    years: Sequence[int] = (),
    alpha: float | None = None,
    support: SupportLevel = SupportLevel(),
    settings: SolverSettings = DEFAULT_SETTINGS,
    flags: dict | None = None,
) -> FinanceResult:
    """Capital structure, WACC and LCOE implied by a given annual revenue path."""
    revenue = np.asarray(revenue_per_mw, dtype=float)
    generation = np.asarray(generation_per_mw, dtype=float)
    cf = revenue - costs.opex_per_mw
    structure = capital_structure(cf, costs)
    dividends = cf - structure.debt_service
    gap = equity_npv(float(dividends.mean()), costs) - structure.equity
    min_dscr = float(cf.min() / structure.debt_service) if structure.debt_service > 0 else None

    invest = structure.total_investment
    tol = settings.gap_tol * invest
    out_flags = {
        "no_debt": structure.debt == 0,
        "debt_capped": structure.debt >= invest,
        "dscr_binding": 0 < structure.debt < invest,
        "equity_binding": abs(gap) <= tol,
        "viable": gap >= -tol,
    }
    out_flags.update(flags or {})
    for arr in (revenue, generation, dividends):
        arr.setflags(write=False)
    return FinanceResult(
        park_id=park_id,
        contract_id=contract_id,
        alpha=alpha,
        support=support,
        structure=structure,
        wacc=wacc(structure, costs),
        lcoe=lcoe(structure, costs, float(generation.mean())),
        equity_gap=gap,
        min_dscr=min_dscr,
        years=tuple(years),
        revenue_per_mw=revenue,
        generation_per_mw=generation,
        dividends=dividends,
        flags=out_flags,
    )


# --------------------------------------------------------------------------- equilibrium


def _bracket(curve: RevenueCurve, settings: SolverSettings) -> tuple[float, float, bool]:
    """Initial support-level bracket; the bool marks a lower bound fixed at zero."""
    lo, hi = settings.strike_bracket
    if curve.spec.kind is Kind.FINANCIAL:
        # express the strike range as a capacity payment on the reference profile
        return 0.0, hi * curve.reference_mean / curve.alpha, True
    return lo, hi, False


def solve_support(curve: RevenueCurve, costs: CostParams,
                  settings: SolverSettings = DEFAULT_SETTINGS) -> tuple[float, dict]:
    """Support level at which the equity participation gap crosses zero."""

    def gap(x: float) -> float:
        return _gap(curve(x)[0], costs)

    lo0, hi0, fixed_lo = _bracket(curve, settings)
    centre, half = 0.5 * (lo0 + hi0), 0.5 * (hi0 - lo0)
    factors = [f for f in (1.0, 2.0, 4.0, 8.0) if f < settings.max_expansion] + [settings.max_expansion]
    tried = []
    for f in factors:
        lo, hi = (lo0, lo0 + f * (hi0 - lo0)) if fixed_lo else (centre - f * half, centre + f * half)
        g_lo, g_hi = gap(lo), gap(hi)
        tried.append((lo, hi, g_lo, g_hi))
        if g_lo < 0 <= g_hi:
            break
    else:
        lo, hi, g_lo, g_hi = tried[-1]
        raise SolverError(
            f"{curve.park_id}/{curve.spec.contract_id}: equity gap has no sign change on "
            f"[{lo:.6g}, {hi:.6g}] (gaps {g_lo:.6g}, {g_hi:.6g})"
        )

    info = {"nonmonotone_gap": False}
    grid = np.linspace(lo, hi, settings.audit_points)
    values = np.array([g_lo] + [gap(x) for x in grid[1:-1]] + [g_hi])
    slack = 1e-9 * costs.capex_per_mw
    if (np.diff(values) < -slack).any():
        info["nonmonotone_gap"] = True
        log.warning("%s/%s: equity gap not monotone in the support level; scanning",
                    curve.park_id, curve.spec.contract_id)
        fine = np.linspace(lo, hi, settings.scan_points)
        fine_vals = np.array([gap(x) for x in fine])
        j = int(np.flatnonzero(fine_vals >= 0)[0])
        lo, hi, g_lo, g_hi = fine[j - 1], fine[j], fine_vals[j - 1], fine_vals[j]
    else:
        j = int(np.flatnonzero(values >= 0)[0])
        lo, hi, g_lo, g_hi = grid[j - 1], grid[j], values[j - 1], values[j]

    root = bisect_increasing(gap, lo, hi, settings.xtol, settings.max_iter, g_lo, g_hi)
    info["iterations"] = root.iterations
    return root.hi, info


def tech_adjusted_alpha(park: ParkSeries, dataset: MarketDataset) -> tuple[float, bool]:
    """Park-to-fleet ratio of mean annual capacity factor over the first three observed years.

    The flag is true when the park was commissioned before the observation
    window, so the three years are not its first three years of operation.
    """
    years = dataset.years[:3]
    if len(years) < 3:
        raise DataError(f"park {park.park_id}: technology-adjusted factor needs three years")
    park_cf = park.capacity_factor
    fleet_cf = dataset.fleet.capacity_factor
    park_means, fleet_means = [], []
    for y in years:
        mask = dataset.year_index == y
        park_means.append(park_cf[mask].mean())
        fleet_means.append(fleet_cf[mask].mean())
    substituted = park.commissioning_year is None or park.commissioning_year + 1 < years[0]
    return float(np.mean(park_means) / np.mean(fleet_means)), substituted


class ParkModel:
    """Revenue curves for one park, built once and reused across solves."""

    def __init__(self, dataset: MarketDataset, park: ParkSeries):
        self.dataset = dataset
        self.park = park
        self._curves: dict[str, RevenueCurve] = {}

    def curve(self, spec: ContractSpec, alpha: float | None = None) -> RevenueCurve:
        if spec.kind is Kind.FINANCIAL:
            key = "financial"
            if key not in self._curves:
                self._curves[key] = RevenueCurve(
                    ContractSpec(Kind.FINANCIAL, alpha_mode=AlphaMode.FIXED, alpha=1.0),
                    self.dataset, self.park,
                )
            return self._curves[key].with_alpha(spec, alpha)
        key = spec.contract_id
        if key not in self._curves:
            self._curves[key] = RevenueCurve(spec, self.dataset, self.park)
        return self._curves[key]

    def equilibrium(self, spec: ContractSpec, costs: CostParams, alpha: float | None = None,
                    settings: SolverSettings = DEFAULT_SETTINGS, flags: dict | None = None
                    ) -> FinanceResult:
        if spec.kind is Kind.FINANCIAL and alpha is None:
            if spec.alpha_mode is not AlphaMode.FIXED:
                raise ValueError(f"{spec.contract_id}: resolve the contract factor first")
            alpha = spec.alpha
        curve = self.curve(spec, alpha)
        common = dict(park_id=self.park.park_id, contract_id=spec.contract_id,
                      years=curve.years, settings=settings)
        flags = dict(flags or {})
        if spec.kind is Kind.MERCHANT or (spec.kind is Kind.FINANCIAL and alpha == 0):
            rev, gen = curve(None)
            flags["solved"] = False
            return evaluate_financing(rev, gen, costs, alpha=alpha, flags=flags, **common)
        x, info = solve_support(curve, costs, settings)
        rev, gen = curve(x)
        flags.update(solved=True, nonmonotone_gap=info["nonmonotone_gap"])
        return evaluate_financing(rev, gen, costs, alpha=alpha, support=support_for(spec, x),
                                  flags=flags, **common)

    def lcoe_at_alpha(self, alpha: float, costs: CostParams,
                      settings: SolverSettings = DEFAULT_SETTINGS) -> float:
        spec = ContractSpec(Kind.FINANCIAL, alpha_mode=AlphaMode.FIXED, alpha=alpha)
        try:
            return self.equilibrium(spec, costs, alpha, settings).lcoe
        except SolverError as exc:
            log.info("alpha %.4g infeasible for %s: %s", alpha, self.park.park_id, exc)
            return math.inf


def solve_equilibrium(
    spec: ContractSpec,
    dataset: MarketDataset,
    park: ParkSeries,
    costs: CostParams = BASELINE_COSTS,
    alpha: float | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> FinanceResult:
    """Break-even support level with both financing constraints just binding.

    Merchant (and a financial CfD with zero contract factor) has no free
    parameter and is evaluated as is; its equity gap is reported, not zeroed.
    """
    model = ParkModel(dataset, park)
    flags = {}
    if spec.kind is Kind.FINANCIAL and alpha is None:
        if spec.alpha_mode is AlphaMode.TECH_ADJUSTED:
            alpha, flags["alpha_window_substituted"] = tech_adjusted_alpha(park, dataset)
        elif spec.alpha_mode is AlphaMode.PARK_OPTIMAL:
            alpha = optimize_park_alpha(model, costs, settings).x
        elif spec.alpha_mode is AlphaMode.FLEET_OPTIMAL:
            alpha = optimize_fleet_alpha(dataset, costs, settings).x
    return model.equilibrium(spec, costs, alpha, settings, flags)


def optimize_park_alpha(model: ParkModel, costs: CostParams,
                        settings: SolverSettings = DEFAULT_SETTINGS,
                        candidates: Sequence[float] = (1.0,)):
    return minimize_scalar_audited(
        lambda a: model.lcoe_at_alpha(a, costs, settings),
        0.0, settings.alpha_max, settings.alpha_tol,
        settings.alpha_grid_points, candidates, label=f"park {model.park.park_id}",
    )


def optimize_fleet_alpha(dataset: MarketDataset, costs: CostParams,
                         settings: SolverSettings = DEFAULT_SETTINGS,
                         models: Sequence[ParkModel] | None = None,
                         weights: Sequence[float] | None = None,
                         candidates: Sequence[float] = (1.0,)):
    """Common contract factor minimizing the fleet-average equilibrium LCOE."""
    models = list(models) if models is not None else [ParkModel(dataset, p) for p in dataset.parks]
    w = np.ones(len(models)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()

    def fleet_lcoe(a: float) -> float:
        return float(np.dot(w, [m.lcoe_at_alpha(a, costs, settings) for m in models]))

    return minimize_scalar_audited(fleet_lcoe, 0.0, settings.alpha_max, settings.alpha_tol,
                                   settings.alpha_grid_points, candidates, label="fleet")


def resolve_alpha(
    spec: ContractSpec,
    park: ParkSeries,
    dataset: MarketDataset,
    costs: CostParams = BASELINE_COSTS,
    settings: SolverSettings = DEFAULT_SETTINGS,
    candidates: Sequence[float] = (1.0,),
) -> float:
    if spec.kind is not Kind.FINANCIAL:
        raise ValueError("contract factors apply to financial CfDs only")
    mode = spec.alpha_mode
    if mode is AlphaMode.FIXED:
        return spec.alpha
    if mode is AlphaMode.TECH_ADJUSTED:
        return tech_adjusted_alpha(park, dataset)[0]
    if mode is AlphaMode.PARK_OPTIMAL:
        return optimize_park_alpha(ParkModel(dataset, park), costs, settings, candidates).x
    return optimize_fleet_alpha(dataset, costs, settings, candidates=candidates).x


# --------------------------------------------------------------------------- decomposition


@dataclass(frozen=True)
class GapDecomposition:
    merchant_gap: float
    derisking: float
    subsidy: float
    viable_merchant: bool = False


def _residual(total: float, part: float) -> float:
    """``total - part``, nudged by ulps so that ``part + result == total`` when reachable."""
    rest = total - part
    for _ in range(4):
        s = part + rest
        if s == total:
            break
        rest = math.nextafter(rest, math.inf if s < total else -math.inf)
    return rest


def decompose_merchant_gap(merchant_lcoe: float, merchant_price: float,
                           contract_lcoe: float) -> GapDecomposition:
    """Split the merchant gap into financing-cost reduction and price support.

    A non-positive gap means the project is viable merchant; de-risking is
    then reported as zero and the (non-positive) gap as the residual.
    """
    values = (merchant_lcoe, merchant_price, contract_lcoe)
    if not all(math.isfinite(v) for v in values):
        raise ValueError("gap decomposition needs finite inputs")
    gap = merchant_lcoe - merchant_price
    if gap <= 0:
        return GapDecomposition(gap, 0.0, gap, viable_merchant=True)
    derisking = merchant_lcoe - contract_lcoe
    subsidy = _residual(gap, derisking)
    # when no float subsidy closes the sum exactly, the reported gap moves by an ulp instead
    return GapDecomposition(derisking + subsidy, derisking, subsidy)


def decompose(merchant: FinanceResult, contract: FinanceResult) -> GapDecomposition:
    if merchant.park_id != contract.park_id:
        raise ValueError("decomposition needs results for the same park")
    return decompose_merchant_gap(merchant.lcoe, merchant.achieved_price, contract.lcoe)
