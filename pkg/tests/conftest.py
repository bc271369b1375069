from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from cfdfin.config import parse_config
from cfdfin.synth import BENCHMARK_SEED, benchmark_config, synthesize_market
from cfdfin.timeseries import FleetSeries, ParkSeries, PriceSeries, align_dataset

ROOT = Path(__file__).resolve().parents[1]
BENCHMARK_YAML = ROOT / "configs" / "benchmark.yaml"

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
# wall-clock seconds of the session-scoped benchmark stages
TIMINGS: dict[str, float] = {}


def hours_for(years) -> pd.DatetimeIndex:
    years = list(years)
    return pd.date_range(f"{years[0]}-01-01", f"{years[-1] + 1}-01-01", freq="h", tz="UTC",
                         inclusive="left")


def make_dataset(price, fleet_cf, park_cfs, years=(2017, 2018, 2019), fleet_capacity=1000.0,
                 park_capacity=10.0, min_valid_hours=8000):
    """Dataset from per-hour arrays (or scalars broadcast over every hour)."""
    hours = hours_for(years)
    n = len(hours)
    full = lambda v: np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    price_s = PriceSeries(hours, full(price))
    fleet_s = FleetSeries(hours, full(fleet_cf) * fleet_capacity, np.full(n, fleet_capacity))
    parks = [
        ParkSeries(f"T{i + 1}", park_capacity, hours, full(cf) * park_capacity, years[0] - 2)
        for i, cf in enumerate(park_cfs)
    ]
    return align_dataset(price_s, fleet_s, parks, min_valid_hours)


def small_synth_config(n_years=3, n_parks=3, **kw):
    from cfdfin.synth import SynthConfig

    return SynthConfig(n_years=n_years, n_parks=n_parks, **kw)


@pytest.fixture(scope="session")
def benchmark_dataset():
    t0 = time.perf_counter()
    ds = synthesize_market(benchmark_config(), BENCHMARK_SEED)
    TIMINGS["synth"] = time.perf_counter() - t0
    return ds


@pytest.fixture(scope="session")
def benchmark_loaded(tmp_path_factory):
    raw = yaml.safe_load(BENCHMARK_YAML.read_text())
    out = tmp_path_factory.mktemp("bench")
    raw["output"]["dir"] = str(out)
    return parse_config(raw, BENCHMARK_YAML.parent)


@pytest.fixture(scope="session")
def benchmark_run(benchmark_loaded, benchmark_dataset):
    from cfdfin.runner import run_scenario

    t0 = time.perf_counter()
    out = run_scenario(benchmark_loaded, benchmark_dataset)
    TIMINGS["run"] = time.perf_counter() - t0
    return out


@pytest.fixture
def small_raw(tmp_path):
    return {
        "schema_version": 1,
        "name": "small",
        "seed": 11,
        "data": {"synthetic": {"n_years": 5, "n_parks": 3}},
        "contracts": ["merchant", "2cfd_hourly"],
        "output": {"dir": str(tmp_path / "out")},
    }


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
