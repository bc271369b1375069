"""Acceptance criteria 1-10, one test each.

Every test records a PASS/FAIL line into ``conftest.ACCEPTANCE``; the lines are
printed at the end of the pytest run. Run this file directly for just the
acceptance suite: ``python tests/test_acceptance.py``.
"""

import csv
import timeit
from pathlib import Path

import numpy as np
import pytest

import conftest
from conftest import ACCEPTANCE, TIMINGS, make_dataset
from cfdfin.config import parse_config
from cfdfin.contracts import (
    MERCHANT,
    AlphaMode,
    ContractSpec,
    Kind,
    RevenueCurve,
    SupportLevel,
    simulate_annual_revenues,
)
from cfdfin.finance import (
    BASELINE_COSTS,
    amortization_schedule,
    annuity_payment,
    decompose_merchant_gap,
    solve_equilibrium,
)
from cfdfin.riskmetrics import risk_summary
from cfdfin.runner import run_scenario, sensitivity_grid
from cfdfin.synth import SynthConfig, synthesize_market
from cfdfin.timeseries import ParkSeries, align_dataset


def _record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    assert passed, detail


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# 1 -----------------------------------------------------------------------------


def test_c01_annuity_oracle():
    payment = annuity_payment(1000.0, 0.0115, 30)
    balances = amortization_schedule(1000.0, 0.0115, 30)
    runs = timeit.repeat(
        lambda: (annuity_payment(1000.0, 0.0115, 30), amortization_schedule(1000.0, 0.0115, 30)),
        number=100, repeat=5,
    )
    per_call = min(runs) / 100
    ok = (abs(payment - 39.602) <= 1e-3 and len(balances) == 30
          and abs(balances[-1]) <= 1e-6 * 1000.0 and per_call < 1e-3)
    _record(1, ok, f"payment {payment:.6f} EUR/kW/a, final balance {balances[-1]:.2e}, "
                   f"{per_call * 1e6:.1f} us per call")


# 2 -----------------------------------------------------------------------------


def test_c02_deterministic_equilibrium():
    gen = 2000.0
    ds = make_dataset(price=40.0, fleet_cf=gen / 8760, park_cfs=[gen / 8760])
    assert np.allclose(simulate_annual_revenues(MERCHANT, SupportLevel(), ds, ds.parks[0]).generation_per_mw,
                       gen, rtol=1e-12)
    r = solve_equilibrium(ContractSpec.from_id("2cfd_hourly"), ds, ds.parks[0], BASELINE_COSTS)
    strike = r.support.strike
    ok = (abs(strike - 54.70) <= 0.01 and r.leverage == 1.0 and r.wacc == 0.0115
          and np.abs(r.dividends).max() <= 1e-6)
    _record(2, ok, f"S* {strike:.6f}, leverage {r.leverage}, WACC {r.wacc}, "
                   f"max |dividend| {np.abs(r.dividends).max():.1e}")


# 3 -----------------------------------------------------------------------------

_NUMERIC = ("wacc", "lcoe", "equity_gap", "min_dscr", "years")


def _same_result(a, b):
    if a.structure != b.structure or a.support != b.support:
        return False
    if any(getattr(a, f) != getattr(b, f) for f in _NUMERIC):
        return False
    return all(np.array_equal(getattr(a, f), getattr(b, f))
               for f in ("revenue_per_mw", "generation_per_mw", "dividends"))


def test_c03_merchant_limit():
    fin0 = ContractSpec(Kind.FINANCIAL, alpha_mode=AlphaMode.FIXED, alpha=0.0)
    checked, bad = 0, []
    for seed in (1, 2, 3, 4, 5):
        ds = synthesize_market(SynthConfig(n_years=4, n_parks=3), seed)
        for park in ds.parks:
            m = solve_equilibrium(MERCHANT, ds, park)
            f = solve_equilibrium(fin0, ds, park)
            rm, rf = risk_summary(m.revenue_per_mw), risk_summary(f.revenue_per_mw)
            same_cov = rm.cov == rf.cov or (np.isnan(rm.cov) and np.isnan(rf.cov))
            if not (same_cov and _same_result(m, f)):
                bad.append(f"seed {seed} {park.park_id}")
            checked += 1
    _record(3, not bad, f"{checked} parks over 5 seeds, mismatches: {bad or 'none'}")


# 4 -----------------------------------------------------------------------------


def test_c04_strike_collapse_and_representative_park():
    ds = synthesize_market(SynthConfig(n_years=3, n_parks=2, negative_price_share=0.05), 17)
    worst_exact = 0
    for park in ds.parks:
        curve = RevenueCurve(ContractSpec.from_id("2cfd_hourly"), ds, park)
        for s in (-5.0, 0.0, 33.3, 54.70204763520165, 120.0):
            rev, gen = curve(s)
            worst_exact += int(not np.array_equal(rev, s * gen))

    # park whose potential is a fixed share of the fleet output
    share = 2e-4
    fleet = ds.fleet
    proportional = ParkSeries("REP", float(share * fleet.capacity.max()), fleet.hours,
                              share * fleet.generation)
    rep = align_dataset(ds.price, fleet, [proportional])
    table = simulate_annual_revenues(ContractSpec.from_id("2cfd_annual"), SupportLevel(strike=200.0),
                                     rep, rep.parks[0])
    rel = np.abs(table.revenue_per_mw - 200.0 * table.generation_per_mw) / np.abs(table.revenue_per_mw)
    ok = worst_exact == 0 and rel.max() <= 1e-9
    _record(4, ok, f"strike collapse mismatches {worst_exact}, representative park "
                   f"max rel error {rel.max():.1e}")


# 5 -----------------------------------------------------------------------------


def test_c05_dominance(benchmark_run):
    ev = benchmark_run.evaluation
    tol = 1e-3
    worst = -np.inf
    for pid in ev.park_ids:
        park = ev.outcomes[(pid, "fcfd_park")].finance.lcoe
        best_other = min(ev.outcomes[(pid, "fcfd_fleet")].finance.lcoe,
                         ev.outcomes[(pid, "fcfd_fixed_1")].finance.lcoe)
        worst = max(worst, park - best_other)
    fleet_avg = lambda cid: float(np.mean([ev.outcomes[(p, cid)].finance.lcoe for p in ev.park_ids]))
    fleet_margin = fleet_avg("fcfd_fleet") - fleet_avg("fcfd_fixed_1")
    runtime = TIMINGS.get("synth", 0.0) + TIMINGS["run"]
    ok = worst <= tol and fleet_margin <= tol and runtime < 60.0
    _record(5, ok, f"{len(ev.park_ids)} parks, worst park-optimal excess {worst:.2e} EUR/MWh, "
                   f"fleet-optimal minus alpha=1 {fleet_margin:.3f}, alpha* {ev.fleet_alpha:.4f}, "
                   f"synth+run {runtime:.1f} s")


# 6 -----------------------------------------------------------------------------


def test_c06_binding_constraints(benchmark_run):
    ev = benchmark_run.evaluation
    interior = dscr_worst = gap_worst = price_worst = 0.0
    n_solved = 0
    for o in ev.outcomes.values():
        f = o.finance
        if not f.flags.get("solved"):
            continue
        n_solved += 1
        s = f.structure
        if 0 < s.debt < s.total_investment:
            interior += 1
            dscr_worst = max(dscr_worst, abs(f.min_dscr - 1.0))
        # relative to equity; an all-debt structure has no equity, so use the investment
        scale = s.equity if s.equity > 0 else s.total_investment
        gap_worst = max(gap_worst, abs(f.equity_gap) / scale)
        price_worst = max(price_worst, abs(f.achieved_price - f.lcoe))
    ok = n_solved > 0 and dscr_worst <= 1e-6 and gap_worst <= 1e-6 and price_worst <= 0.01
    _record(6, ok, f"{n_solved} solved equilibria ({int(interior)} interior debt): "
                   f"|DSCR-1| {dscr_worst:.1e}, rel gap {gap_worst:.1e}, "
                   f"|price-LCOE| {price_worst:.1e} EUR/MWh")


# 7 -----------------------------------------------------------------------------


def test_c07_cov_ordering(benchmark_run):
    ev = benchmark_run.evaluation
    bad, margin = [], np.inf
    for pid in ev.park_ids:
        two = ev.outcomes[(pid, "2cfd_hourly")].risk.cov
        one = ev.outcomes[(pid, "1cfd_hourly")].risk.cov
        merchant = ev.outcomes[(pid, "merchant")].risk.cov
        if not (two <= one <= merchant):
            bad.append(pid)
        margin = min(margin, one - two, merchant - one)
    _record(7, not bad, f"{len(ev.park_ids) - len(bad)}/{len(ev.park_ids)} parks ordered, "
                        f"smallest margin {margin:.4f}, violations {bad or 'none'}")


# 8 -----------------------------------------------------------------------------


def test_c08_decomposition_closure(benchmark_run):
    ev = benchmark_run.evaluation
    open_rows = [key for key, o in ev.outcomes.items()
                 if o.decomposition.derisking + o.decomposition.subsidy != o.decomposition.merchant_gap]
    csv_open = [r for r in _rows(benchmark_run.directory / "gap_decomposition.csv")
                if float(r["derisking"]) + float(r["subsidy"]) != float(r["merchant_gap"])]
    d = decompose_merchant_gap(merchant_lcoe=90.0, merchant_price=30.0, contract_lcoe=50.0)
    example = (d.merchant_gap, d.derisking, d.subsidy) == (60.0, 40.0, 20.0)
    ok = not open_rows and not csv_open and example
    _record(8, ok, f"{len(ev.outcomes)} rows, non-closing {len(open_rows)} (csv {len(csv_open)}), "
                   f"worked example {d.merchant_gap:g} = {d.derisking:g} + {d.subsidy:g}")


# 9 -----------------------------------------------------------------------------


@pytest.mark.slow
def test_c09_grid_coherence(benchmark_loaded, benchmark_dataset, benchmark_run):
    sc = benchmark_loaded.scenario
    grid = sensitivity_grid(benchmark_loaded, benchmark_dataset)
    rows = _rows(grid.directory / "sensitivity_grid.csv")
    run_means = {r["contract_id"]: r["mean"] for r in _rows(benchmark_run.directory / "fleet_summary.csv")
                 if r["metric"] == "lcoe_reduction"}
    base = {r["contract_id"]: r["lcoe_reduction"] for r in rows if r["baseline"] == "true"}
    baseline_ok = base == run_means

    corner = (max(sc.grid.capex), min(sc.grid.opex))
    tol = 1e-3
    misses = []
    for cid in sc.contracts:
        if cid == "merchant":
            continue
        cells = {(float(r["capex"]), float(r["opex"])): float(r["lcoe_reduction"])
                 for r in rows if r["contract_id"] == cid and r["status"] == "ok"}
        best_cell = max(cells, key=cells.get)
        if cells[corner] < cells[best_cell] - tol:
            misses.append(f"{cid} max at {best_cell[0]:g}/{best_cell[1]:g} "
                          f"(+{cells[best_cell] - cells[corner]:.2f})")
    ok = baseline_ok and not misses
    _record(9, ok, f"baseline bit-identical {baseline_ok}; corner {corner[0]:g}/{corner[1]:g} maximal "
                   f"for {len(sc.contracts) - 1 - len(misses)}/{len(sc.contracts) - 1} contracts"
                   + (f"; {'; '.join(misses)}" if misses else ""))


# 10 ----------------------------------------------------------------------------


def test_c10_end_to_end_determinism(tmp_path, monkeypatch):
    import yaml

    raw = yaml.safe_load(conftest.BENCHMARK_YAML.read_text())
    raw["data"]["synthetic"].update(n_years=4, n_parks=6)
    outputs = []
    for name in ("a", "b"):
        monkeypatch.setenv("CFDFIN_OUTPUT_ROOT", str(tmp_path / name))
        out = run_scenario(parse_config(raw, conftest.BENCHMARK_YAML.parent))
        outputs.append(out.directory)
    csvs = sorted(p.name for p in outputs[0].glob("*.csv"))
    differing = [n for n in csvs if (outputs[0] / n).read_bytes() != (outputs[1] / n).read_bytes()]
    ok = len(csvs) == 6 and not differing
    _record(10, ok, f"{len(csvs)} CSVs compared, differing: {differing or 'none'}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([str(Path(__file__)), "-q", "-p", "no:cacheprovider"]))
