"""Scenario pipeline: data, equilibria for every park and contract, reports.

``run_scenario`` and ``sensitivity_grid`` both go through
:func:`evaluate_fleet`, so a grid cell at the baseline costs reproduces the
standalone run exactly.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from .config import LoadedConfig
from .contracts import MERCHANT, AlphaMode, ContractSpec, Kind
from .errors import CfdFinError, ConfigError
from .finance import (
    CostParams,
    FinanceResult,
    GapDecomposition,
    ParkModel,
    SolverSettings,
    decompose,
    optimize_fleet_alpha,
    optimize_park_alpha,
    tech_adjusted_alpha,
)
from .report import (
    OutputWriter,
    Table,
    decomposition_plot,
    emit_report,
    grid_heatmaps,
    whisker_plot,
)
from .riskmetrics import RiskSummary, risk_summary
from .synth import synthesize_market
from .timeseries import (
    MarketDataset,
    align_dataset,
    export_dataset,
    load_fleet_series,
    load_park_series,
    load_price_series,
)

log = logging.getLogger(__name__)

RISK_COLUMNS = ("park_id", "contract_id", "mean", "std", "cov", "min", "p10", "p50", "p90")
FINANCE_COLUMNS = ("park_id", "contract_id", "alpha", "support_level", "debt", "equity",
                   "leverage", "wacc", "lcoe", "min_dscr_year", "equity_gap")
LCOE_COLUMNS = ("park_id", "contract_id", "lcoe", "merchant_lcoe", "lcoe_reduction",
                "achieved_price", "mean_generation")
GAP_COLUMNS = ("park_id", "contract_id", "merchant_gap", "derisking", "subsidy", "viability_flag")
REVENUE_COLUMNS = ("park_id", "contract_id", "year", "revenue_eur_per_mw", "generation_mwh_per_mw")
FLEET_COLUMNS = ("contract_id", "metric", "n", "mean", "p10", "p90")
GRID_COLUMNS = ("capex", "opex", "contract_id", "fleet_lcoe", "fleet_merchant_lcoe",
                "lcoe_reduction", "baseline", "status")
FLEET_METRICS = ("cov", "leverage", "wacc", "lcoe", "lcoe_reduction", "merchant_gap",
                 "derisking", "subsidy")


class StageError(CfdFinError):
    """Wraps a pipeline failure with the stage, park and contract it came from."""

    def __init__(self, stage: str, cause: CfdFinError, park_id: str = "", contract_id: str = ""):
        where = ", ".join(x for x in (f"stage {stage}", park_id and f"park {park_id}",
                                      contract_id and f"contract {contract_id}") if x)
        super().__init__(f"{where}: {cause}")
        self.exit_code = cause.exit_code
        self.stage, self.park_id, self.contract_id = stage, park_id, contract_id


# --------------------------------------------------------------------------- data


def load_dataset(loaded: LoadedConfig) -> MarketDataset:
    sc = loaded.scenario
    data = sc.data
    try:
        if data.synthetic is not None:
            return synthesize_market(data.synth_config(), sc.seed)
        files = data.files
        paths = [loaded.resolve(files.price), loaded.resolve(files.fleet)]
        paths += [loaded.resolve(p.path) for p in files.parks]
        missing = [str(p) for p in paths if not p.is_file()]
        if missing:
            raise ConfigError(f"data files not found: {', '.join(missing)}")
        price = load_price_series(paths[0])
        fleet = load_fleet_series(paths[1])
        parks = [
            load_park_series(loaded.resolve(p.path), p.id, p.capacity_mw, p.commissioning_year)
            for p in files.parks
        ]
        return align_dataset(price, fleet, parks, data.min_valid_hours)
    except CfdFinError as exc:
        raise StageError("data", exc) from exc


# --------------------------------------------------------------------------- evaluation


@dataclass(frozen=True, eq=False)
class ContractOutcome:
    spec: ContractSpec
    finance: FinanceResult
    merchant: FinanceResult
    risk: RiskSummary
    decomposition: GapDecomposition
    weight: float

    @property
    def lcoe_reduction(self) -> float:
        return self.merchant.lcoe - self.finance.lcoe


@dataclass(eq=False)
class FleetEvaluation:
    costs: CostParams
    contract_ids: tuple[str, ...]
    park_ids: tuple[str, ...]
    outcomes: dict[tuple[str, str], ContractOutcome] = field(default_factory=dict)
    fleet_alpha: float | None = None
    fleet_alpha_audit: bool | None = None

    def ordered(self):
        """Outcomes in report order: contracts in figure order, parks within each."""
        for cid in self.contract_ids:
            for pid in self.park_ids:
                yield self.outcomes[(pid, cid)]


def _weights(dataset: MarketDataset, aggregation: str) -> np.ndarray:
    if aggregation == "capacity":
        w = np.array([p.installed_capacity_mw for p in dataset.parks], dtype=float)
    else:
        w = np.ones(len(dataset.parks))
    return w / w.sum()


def evaluate_fleet(
    dataset: MarketDataset,
    specs: Sequence[ContractSpec],
    costs: CostParams,
    settings: SolverSettings,
    aggregation: str = "simple",
) -> FleetEvaluation:
    """Equilibrium of every park under every contract, plus the merchant benchmark."""
    weights = _weights(dataset, aggregation)
    models = [ParkModel(dataset, p) for p in dataset.parks]
    ev = FleetEvaluation(costs, tuple(s.contract_id for s in specs), tuple(p.park_id for p in dataset.parks))

    merchant = {}
    for m in models:
        try:
            merchant[m.park.park_id] = m.equilibrium(MERCHANT, costs, settings=settings)
        except CfdFinError as exc:
            raise StageError("merchant", exc, m.park.park_id, "merchant") from exc

    modes = {s.alpha_mode for s in specs if s.kind is Kind.FINANCIAL}
    if modes & {AlphaMode.FLEET_OPTIMAL, AlphaMode.PARK_OPTIMAL}:
        try:
            opt = optimize_fleet_alpha(dataset, costs, settings, models, weights)
        except CfdFinError as exc:
            raise StageError("fleet alpha", exc) from exc
        ev.fleet_alpha, ev.fleet_alpha_audit = opt.x, opt.audit_passed

    for spec in specs:
        for m, w in zip(models, weights):
            pid = m.park.park_id
            try:
                result = _solve(spec, m, costs, settings, ev)
            except CfdFinError as exc:
                raise StageError("equilibrium", exc, pid, spec.contract_id) from exc
            ev.outcomes[(pid, spec.contract_id)] = ContractOutcome(
                spec=spec,
                finance=result,
                merchant=merchant[pid],
                risk=risk_summary(result.revenue_per_mw),
                decomposition=decompose(merchant[pid], result),
                weight=float(w),
            )
    return ev


def _solve(spec: ContractSpec, model: ParkModel, costs: CostParams, settings: SolverSettings,
           ev: FleetEvaluation) -> FinanceResult:
    if spec.kind is Kind.MERCHANT:
        return model.equilibrium(spec, costs, settings=settings)
    if spec.kind is not Kind.FINANCIAL or spec.alpha_mode is AlphaMode.FIXED:
        return model.equilibrium(spec, costs, settings=settings)
    mode = spec.alpha_mode
    flags = {}
    if mode is AlphaMode.TECH_ADJUSTED:
        alpha, flags["alpha_window_substituted"] = tech_adjusted_alpha(model.park, model.dataset)
    elif mode is AlphaMode.FLEET_OPTIMAL:
        alpha = ev.fleet_alpha
        flags["alpha_audit_passed"] = ev.fleet_alpha_audit
    else:
        opt = optimize_park_alpha(model, costs, settings, candidates=(1.0, ev.fleet_alpha))
        alpha = opt.x
        flags["alpha_audit_passed"] = opt.audit_passed
    return model.equilibrium(spec, costs, alpha, settings, flags)


# --------------------------------------------------------------------------- tables


def _nan_to_none(x: float | None):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def report_tables(ev: FleetEvaluation) -> list[Table]:
    risk, finance, lcoe, gap, revenue = [], [], [], [], []
    for o in ev.ordered():
        f = o.finance
        pid, cid = f.park_id, f.contract_id
        risk.append({"park_id": pid, "contract_id": cid, **o.risk.as_dict()})
        finance.append(f.row())
        lcoe.append({
            "park_id": pid, "contract_id": cid, "lcoe": f.lcoe, "merchant_lcoe": o.merchant.lcoe,
            "lcoe_reduction": o.lcoe_reduction, "achieved_price": f.achieved_price,
            "mean_generation": f.mean_generation,
        })
        d = o.decomposition
        gap.append({
            "park_id": pid, "contract_id": cid, "merchant_gap": d.merchant_gap,
            "derisking": d.derisking, "subsidy": d.subsidy, "viability_flag": d.viable_merchant,
        })
        for y, r, g in zip(f.years, f.revenue_per_mw, f.generation_per_mw):
            revenue.append({"park_id": pid, "contract_id": cid, "year": y,
                            "revenue_eur_per_mw": float(r), "generation_mwh_per_mw": float(g)})
    return [
        Table("risk_summary", RISK_COLUMNS, tuple(risk)),
        Table("finance_results", FINANCE_COLUMNS, tuple(finance)),
        Table("lcoe", LCOE_COLUMNS, tuple(lcoe)),
        Table("gap_decomposition", GAP_COLUMNS, tuple(gap)),
        Table("annual_revenues", REVENUE_COLUMNS, tuple(revenue)),
        Table("fleet_summary", FLEET_COLUMNS, tuple(fleet_summary(ev))),
    ]


def _metric(o: ContractOutcome, name: str) -> float:
    if name == "cov":
        return o.risk.cov
    if name == "leverage":
        return o.finance.leverage
    if name == "wacc":
        return o.finance.wacc
    if name == "lcoe":
        return o.finance.lcoe
    if name == "lcoe_reduction":
        return o.lcoe_reduction
    return getattr(o.decomposition, name)


def fleet_aggregate(values: Sequence[float], weights: Sequence[float]) -> tuple[int, float, float, float]:
    """(n, weighted mean, p10, p90) over finite values; percentiles are unweighted."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    ok = np.isfinite(v)
    if not ok.any():
        return 0, math.nan, math.nan, math.nan
    v, w = v[ok], w[ok]
    mean = float(np.dot(w, v) / w.sum())
    p10, p90 = np.percentile(v, [10, 90], method="linear")
    return int(ok.sum()), mean, float(p10), float(p90)


def fleet_summary(ev: FleetEvaluation) -> list[dict]:
    rows = []
    for cid in ev.contract_ids:
        outcomes = [ev.outcomes[(pid, cid)] for pid in ev.park_ids]
        weights = [o.weight for o in outcomes]
        for metric in FLEET_METRICS:
            n, mean, p10, p90 = fleet_aggregate([_metric(o, metric) for o in outcomes], weights)
            rows.append({"contract_id": cid, "metric": metric, "n": n,
                         "mean": _nan_to_none(mean), "p10": _nan_to_none(p10), "p90": _nan_to_none(p90)})
    return rows


def fleet_lcoe_reduction(ev: FleetEvaluation, contract_id: str) -> tuple[float, float, float]:
    """(fleet-average LCOE, fleet-average merchant LCOE, fleet-average reduction)."""
    outcomes = [ev.outcomes[(pid, contract_id)] for pid in ev.park_ids]
    w = [o.weight for o in outcomes]
    return (
        fleet_aggregate([o.finance.lcoe for o in outcomes], w)[1],
        fleet_aggregate([o.merchant.lcoe for o in outcomes], w)[1],
        fleet_aggregate([o.lcoe_reduction for o in outcomes], w)[1],
    )


# --------------------------------------------------------------------------- commands


def _manifest(loaded: LoadedConfig, command: str, started: datetime, dataset: MarketDataset,
              row_counts: dict, files: list[str], extra: dict | None = None) -> str:
    sc = loaded.scenario
    body = {
        "command": command,
        "scenario": sc.name,
        "config_hash": sc.config_hash(),
        "seed": sc.seed,
        "version": __version__,
        "started_at": started.isoformat(timespec="seconds"),
        "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "dataset": {"years": list(dataset.years), "parks": len(dataset.parks), "hours": len(dataset.hours)},
        "row_counts": row_counts,
        "files": files,
    }
    body.update(extra or {})
    return json.dumps(body, indent=2) + "\n"


@dataclass
class RunOutput:
    directory: Path
    evaluation: FleetEvaluation
    tables: list[Table]
    files: list[str]


def run_scenario(loaded: LoadedConfig, dataset: MarketDataset | None = None) -> RunOutput:
    sc = loaded.scenario
    started = datetime.now(timezone.utc)
    dataset = dataset if dataset is not None else load_dataset(loaded)
    ev = evaluate_fleet(dataset, sc.specs, sc.costs.params(), sc.solver_settings(), sc.aggregation)
    tables = report_tables(ev)
    order = list(ev.contract_ids)
    fleet_rows = next(t for t in tables if t.name == "fleet_summary").rows

    plot_builders = [
        lambda: [whisker_plot(fleet_rows, [("cov", "CoV of annual revenue")], order, "fig_cov.png")],
        lambda: [whisker_plot(fleet_rows, [("leverage", "leverage"), ("wacc", "WACC")], order,
                              "fig_financing.png")],
        lambda: [whisker_plot(fleet_rows, [("lcoe", "LCOE (EUR/MWh)")], order, "fig_lcoe.png")],
        lambda: [decomposition_plot(fleet_rows, order, "fig_gap.png")],
    ]
    writer = OutputWriter(loaded.output_dir())
    try:
        files = emit_report(tables, writer, sc.output.formats, sc.output.plots, plot_builders)
        counts = {t.name: len(t.rows) for t in tables}
        extra = {"fleet_alpha": ev.fleet_alpha, "aggregation": sc.aggregation}
        writer.write("manifest.json", _manifest(loaded, "run", started, dataset, counts, files, extra))
    except BaseException:
        writer.rollback()
        raise
    return RunOutput(writer.directory, ev, tables, list(writer.written))


def sensitivity_grid(loaded: LoadedConfig, dataset: MarketDataset | None = None,
                     capex_axis: Sequence[float] | None = None,
                     opex_axis: Sequence[float] | None = None) -> RunOutput:
    """Fleet-average LCOE reduction versus merchant over a (capex, opex) grid."""
    sc = loaded.scenario
    if capex_axis is None or opex_axis is None:
        if sc.grid is None:
            raise ConfigError("config has no grid section")
        capex_axis = capex_axis or sc.grid.capex
        opex_axis = opex_axis or sc.grid.opex
    capex_axis, opex_axis = list(capex_axis), list(opex_axis)
    if not capex_axis or not opex_axis:
        raise ConfigError("grid axes must be non-empty")
    if sc.costs.capex not in capex_axis or sc.costs.opex not in opex_axis:
        raise ConfigError("grid axes must contain the baseline capex and opex")

    started = datetime.now(timezone.utc)
    dataset = dataset if dataset is not None else load_dataset(loaded)
    settings = sc.solver_settings()
    rows, failed = [], 0
    for capex in capex_axis:
        for opex in opex_axis:
            baseline = capex == sc.costs.capex and opex == sc.costs.opex
            try:
                costs = sc.costs.params(capex, opex)
                ev = evaluate_fleet(dataset, sc.specs, costs, settings, sc.aggregation)
            except CfdFinError as exc:
                log.warning("grid cell capex=%g opex=%g failed: %s", capex, opex, exc)
                failed += 1
                rows += [
                    {"capex": capex, "opex": opex, "contract_id": cid, "fleet_lcoe": None,
                     "fleet_merchant_lcoe": None, "lcoe_reduction": None, "baseline": baseline,
                     "status": "failed"}
                    for cid in sc.contracts
                ]
                continue
            for cid in ev.contract_ids:
                lc, mlc, red = fleet_lcoe_reduction(ev, cid)
                rows.append({"capex": capex, "opex": opex, "contract_id": cid, "fleet_lcoe": lc,
                             "fleet_merchant_lcoe": mlc, "lcoe_reduction": red, "baseline": baseline,
                             "status": "ok"})
    table = Table("sensitivity_grid", GRID_COLUMNS, tuple(rows))

    writer = OutputWriter(loaded.output_dir())
    try:
        files = emit_report([table], writer, sc.output.formats, sc.output.plots,
                            [lambda: grid_heatmaps(rows, capex_axis, opex_axis, sc.contracts)])
        extra = {"capex_axis": capex_axis, "opex_axis": opex_axis, "failed_cells": failed}
        writer.write("grid_manifest.json",
                     _manifest(loaded, "grid", started, dataset, {table.name: len(rows)}, files, extra))
    except BaseException:
        writer.rollback()
        raise
    return RunOutput(writer.directory, None, [table], list(writer.written))


def export_synthetic(loaded: LoadedConfig, directory: Path | None = None) -> Path:
    """Write the configured synthetic dataset as ingestion CSVs plus a data block."""
    sc = loaded.scenario
    if sc.data.synthetic is None:
        raise ConfigError("synth needs a config with a data.synthetic section")
    dataset = load_dataset(loaded)
    directory = Path(directory) if directory is not None else loaded.output_dir() / "data"
    block = export_dataset(dataset, directory)
    data_section = {"files": block, "min_valid_hours": sc.data.min_valid_hours}
    (directory / "data.yaml").write_text(yaml.safe_dump({"data": data_section}, sort_keys=False))
    return directory
