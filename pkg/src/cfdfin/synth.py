"""Synthetic hourly markets: prices, a national wind fleet and correlated parks.

Stands in for proprietary operator data. The price process is a seasonal and
diurnal shape scaled by an annual level, depressed by fleet output (merit
order), plus a mean-reverting residual with Student-t innovations and rare
scarcity spikes. A floor mechanism then assigns exactly the configured share
of hours negative prices, picking the hours with the lowest raw price.

Park profiles mix the standardized fleet signal with an independent
persistent signal; the mixing weight is calibrated per park so the realized
correlation with the fleet capacity factor hits its target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .errors import ConfigError
from .timeseries import FleetSeries, MarketDataset, ParkSeries, PriceSeries, align_dataset

# Upper asymptote of the wind transform, keeps fleet capacity factor below 1.
CF_CEILING = 0.95

BENCHMARK_SEED = 20240601


@dataclass(frozen=True)
class SynthConfig:
    n_years: int = 10
    start_year: int = 2014
    n_parks: int = 20

    price_mean: float = 65.0
    price_volatility: float = 10.0
    price_mean_reversion: float = 0.08
    annual_level_volatility: float = 0.6
    annual_price_levels: tuple[float, ...] | None = None
    seasonal_amplitude: float = 0.12
    diurnal_amplitude: float = 0.12
    merit_order_slope: float = 0.3
    spike_probability: float = 0.002
    spike_scale: float = 80.0
    negative_price_share: float = 0.02
    negative_price_scale: float = 12.0

    fleet_mean_cf: float = 0.21
    fleet_capacity_mw: float = 40_000.0
    fleet_capacity_growth: float = 0.04
    wind_persistence_hours: float = 40.0
    wind_seasonal_amplitude: float = 0.45
    wind_interannual_std: float = 0.05

    park_correlation: float | tuple[float, float] = (0.3, 0.8)
    park_capacity_mw: tuple[float, float] = (4.0, 40.0)
    park_cf_scale: tuple[float, float] = (0.85, 1.05)
    outage_rate: float = 0.02
    outage_mean_hours: float = 36.0
    min_valid_hours: int = field(default=8000)

    def validate(self) -> None:
        if self.n_years < 1 or self.n_parks < 1:
            raise ConfigError("synth: n_years and n_parks must be at least 1")
        for name in ("price_volatility", "annual_level_volatility", "spike_scale",
                     "negative_price_scale", "wind_interannual_std", "outage_mean_hours"):
            if getattr(self, name) < 0:
                raise ConfigError(f"synth: {name} must be non-negative")
        if not 0 < self.price_mean_reversion <= 1:
            raise ConfigError("synth: price_mean_reversion must lie in (0, 1]")
        if not 0 <= self.negative_price_share < 0.5:
            raise ConfigError("synth: negative_price_share must lie in [0, 0.5)")
        if not 0 <= self.spike_probability <= 1 or not 0 <= self.outage_rate < 1:
            raise ConfigError("synth: probabilities must lie in [0, 1)")
        if not 0 < self.fleet_mean_cf < CF_CEILING:
            raise ConfigError(f"synth: fleet_mean_cf must lie in (0, {CF_CEILING})")
        if self.fleet_capacity_mw <= 0 or self.wind_persistence_hours <= 0:
            raise ConfigError("synth: fleet capacity and wind persistence must be positive")
        lo, hi = self._correlation_range()
        if not (0 <= lo <= hi <= 1):
            raise ConfigError("synth: park correlation targets must lie in [0, 1]")
        cap_lo, cap_hi = self.park_capacity_mw
        if not 0 < cap_lo <= cap_hi:
            raise ConfigError("synth: park capacity range must be positive and ordered")
        s_lo, s_hi = self.park_cf_scale
        if not 0 < s_lo <= s_hi or s_hi * CF_CEILING > 1:
            raise ConfigError(f"synth: park_cf_scale must lie in (0, {1 / CF_CEILING:.4f}]")
        if self.annual_price_levels is not None and len(self.annual_price_levels) != self.n_years:
            raise ConfigError("synth: annual_price_levels needs one entry per year")

    def _correlation_range(self) -> tuple[float, float]:
        c = self.park_correlation
        if isinstance(c, (int, float)):
            return float(c), float(c)
        lo, hi = c
        return float(lo), float(hi)


def _ar1(innovations: np.ndarray, phi: float) -> np.ndarray:
    """AR(1) filter normalized to unit stationary variance for unit innovations."""
    out = lfilter([math.sqrt(1.0 - phi * phi)], [1.0, -phi], innovations)
    # start from the stationary distribution rather than zero
    out += innovations[0] * (1.0 - math.sqrt(1.0 - phi * phi)) * phi ** np.arange(len(out))
    return out


def _logistic(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _wind_transform(z: np.ndarray, offset: float) -> np.ndarray:
    return CF_CEILING * _logistic(offset + 1.4 * z)


def _calibrate_offset(z: np.ndarray, target_mean: float) -> float:
    lo, hi = -10.0, 10.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _wind_transform(z, mid).mean() < target_mean:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _outage_mask(rng: np.random.Generator, n: int, rate: float, mean_hours: float) -> np.ndarray:
    mask = np.ones(n)
    if rate <= 0 or mean_hours <= 0:
        return mask
    n_events = rng.poisson(rate * n / mean_hours)
    starts = rng.integers(0, n, size=n_events)
    lengths = rng.geometric(1.0 / mean_hours, size=n_events)
    for s, length in zip(starts, lengths):
        mask[s : s + length] = 0.0
    return mask


def _hour_index(cfg: SynthConfig) -> pd.DatetimeIndex:
    start = pd.Timestamp(year=cfg.start_year, month=1, day=1, tz="UTC")
    end = pd.Timestamp(year=cfg.start_year + cfg.n_years, month=1, day=1, tz="UTC")
    return pd.date_range(start, end, freq="h", inclusive="left")


def _fleet_signal(cfg: SynthConfig, hours: pd.DatetimeIndex, rng: np.random.Generator) -> np.ndarray:
    n = len(hours)
    doy = hours.dayofyear.to_numpy(float)
    hod = hours.hour.to_numpy(float)
    year_pos = (hours.year - cfg.start_year).to_numpy()
    phi = math.exp(-1.0 / cfg.wind_persistence_hours)
    z = _ar1(rng.standard_normal(n), phi)
    z += cfg.wind_seasonal_amplitude * np.cos(2 * np.pi * (doy - 15.0) / 365.25)
    z += 0.1 * np.cos(2 * np.pi * (hod - 15.0) / 24.0)
    z += cfg.wind_interannual_std * rng.standard_normal(cfg.n_years)[year_pos]
    return (z - z.mean()) / z.std()


def _price(cfg: SynthConfig, hours: pd.DatetimeIndex, fleet_cf: np.ndarray,
           rng: np.random.Generator) -> np.ndarray:
    n = len(hours)
    year_pos = (hours.year - cfg.start_year).to_numpy()
    if cfg.annual_price_levels is not None:
        levels = np.asarray(cfg.annual_price_levels, dtype=float)
    else:
        s = cfg.annual_level_volatility
        levels = cfg.price_mean * np.exp(s * rng.standard_normal(cfg.n_years) - 0.5 * s * s)

    doy = hours.dayofyear.to_numpy(float)
    hod = hours.hour.to_numpy(float)
    diurnal = 0.5 * (np.cos(2 * np.pi * (hod - 8.0) / 24.0) + np.cos(2 * np.pi * (hod - 19.0) / 12.0))
    shape = (
        1.0
        + cfg.seasonal_amplitude * np.cos(2 * np.pi * (doy - 15.0) / 365.25)
        + cfg.diurnal_amplitude * diurnal
        - cfg.merit_order_slope * (fleet_cf - fleet_cf.mean()) / fleet_cf.mean()
    )
    t_innov = rng.standard_t(4, size=n) / math.sqrt(2.0)  # unit variance for df=4
    residual = cfg.price_volatility * _ar1(t_innov, 1.0 - cfg.price_mean_reversion)
    spikes = (rng.random(n) < cfg.spike_probability) * rng.exponential(cfg.spike_scale, size=n)
    raw = levels[year_pos] * shape + residual + spikes

    price = np.maximum(raw, 0.0)
    n_neg = int(round(cfg.negative_price_share * n))
    if n_neg:
        lowest = np.argsort(raw, kind="stable")[:n_neg]
        price[lowest] = -(0.01 + rng.exponential(cfg.negative_price_scale, size=n_neg))
    return price


def _calibrate_park(z_fleet, noise, fleet_cf, offset, scale, mask, target) -> np.ndarray:
    def build(rho):
        z = rho * z_fleet + math.sqrt(max(0.0, 1.0 - rho * rho)) * noise
        return scale * _wind_transform(z, offset) * mask

    def corr(cf):
        if cf.std() == 0:
            return 0.0
        return float(np.corrcoef(cf, fleet_cf)[0, 1])

    top = build(1.0)
    if corr(top) <= target:
        return top
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if corr(build(mid)) < target:
            lo = mid
        else:
            hi = mid
    return build(0.5 * (lo + hi))


def synthesize_market(config: SynthConfig, seed: int) -> MarketDataset:
    """Generate a full aligned dataset; deterministic for a given (config, seed)."""
    config.validate()
    root = np.random.SeedSequence(int(seed))
    wind_ss, price_ss, park_ss = root.spawn(3)
    hours = _hour_index(config)
    n = len(hours)

    wind_rng = np.random.default_rng(wind_ss)
    z_fleet = _fleet_signal(config, hours, wind_rng)
    offset = _calibrate_offset(z_fleet, config.fleet_mean_cf)
    fleet_cf = _wind_transform(z_fleet, offset)
    years_elapsed = (np.arange(n) / 8766.0)
    capacity = config.fleet_capacity_mw * (1.0 + config.fleet_capacity_growth) ** years_elapsed
    fleet = FleetSeries(hours, fleet_cf * capacity, capacity)

    price = PriceSeries(hours, _price(config, hours, fleet_cf, np.random.default_rng(price_ss)))

    phi = math.exp(-1.0 / config.wind_persistence_hours)
    c_lo, c_hi = config._correlation_range()
    parks = []
    width = max(2, len(str(config.n_parks)))
    for i, ss in enumerate(park_ss.spawn(config.n_parks)):
        rng = np.random.default_rng(ss)
        target = float(rng.uniform(c_lo, c_hi)) if c_hi > c_lo else c_lo
        cap = round(float(rng.uniform(*config.park_capacity_mw)), 1)
        scale = float(rng.uniform(*config.park_cf_scale))
        noise = _ar1(rng.standard_normal(n), phi)
        mask = _outage_mask(rng, n, config.outage_rate, config.outage_mean_hours)
        cf = _calibrate_park(z_fleet, noise, fleet_cf, offset, scale, mask, target)
        commissioning = config.start_year - int(rng.integers(1, 15))
        parks.append(ParkSeries(f"P{i + 1:0{width}d}", cap, hours, cf * cap, commissioning))

    return align_dataset(price, fleet, parks, config.min_valid_hours)


def park_fleet_correlation(dataset: MarketDataset) -> dict[str, float]:
    """Pearson correlation of each park's capacity factor with the fleet's."""
    fleet_cf = dataset.fleet.capacity_factor
    out = {}
    for park in dataset.parks:
        cf = park.capacity_factor
        out[park.park_id] = float(np.corrcoef(cf, fleet_cf)[0, 1]) if cf.std() > 0 else 0.0
    return out


def benchmark_config() -> SynthConfig:
    """Seeded 20-park, 10-year benchmark fleet used by reports and acceptance runs."""
    return SynthConfig()
