"""Hourly market and park data: loading, validation, alignment, export.

Every series is indexed by a UTC ``DatetimeIndex`` on whole hours. Arrays
are stored read-only so the containers can be shared freely between
threads and between contract evaluations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError

PRICE_HEADER = ("timestamp", "price_eur_mwh")
FLEET_HEADER = ("timestamp", "generation_mwh", "capacity_mw")
PARK_HEADER = ("timestamp", "generation_mwh")

DEFAULT_MIN_VALID_HOURS = 8000
# Relative headroom over nameplate absorbed as metering noise.
CAPACITY_TOLERANCE = 1e-3


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_index(hours: pd.DatetimeIndex, name: str) -> pd.DatetimeIndex:
    if not isinstance(hours, pd.DatetimeIndex):
        hours = pd.DatetimeIndex(hours)
    if hours.tz is None:
        hours = hours.tz_localize("UTC")
    else:
        hours = hours.tz_convert("UTC")
    if len(hours) and not hours.is_monotonic_increasing:
        raise DataError(f"{name}: timestamps are not sorted")
    if hours.has_duplicates:
        raise DataError(f"{name}: duplicate timestamps")
    if len(hours) and (hours != hours.floor("h")).any():
        raise DataError(f"{name}: timestamps must fall on whole hours")
    return hours


@dataclass(frozen=True, eq=False)
class PriceSeries:
    hours: pd.DatetimeIndex
    price: np.ndarray

    def __post_init__(self):
        hours = _check_index(self.hours, "price series")
        price = _frozen(self.price)
        if price.shape != (len(hours),):
            raise DataError("price series: length does not match the hour index")
        if not np.isfinite(price).all():
            raise DataError("price series: non-finite price")
        object.__setattr__(self, "hours", hours)
        object.__setattr__(self, "price", price)

    def __len__(self) -> int:
        return len(self.hours)

    def reindex(self, hours: pd.DatetimeIndex) -> "PriceSeries":
        pos = self.hours.get_indexer(hours)
        if (pos < 0).any():
            raise DataError("price series: requested hours not covered")
        return PriceSeries(hours, self.price[pos])


@dataclass(frozen=True, eq=False)
class FleetSeries:
    """National fleet generation (MWh per hour) and installed capacity (MW)."""

    hours: pd.DatetimeIndex
    generation: np.ndarray
    capacity: np.ndarray

    def __post_init__(self):
        hours = _check_index(self.hours, "fleet series")
        gen = _frozen(self.generation)
        cap = _frozen(self.capacity)
        if gen.shape != (len(hours),) or cap.shape != (len(hours),):
            raise DataError("fleet series: length does not match the hour index")
        if not (np.isfinite(gen).all() and np.isfinite(cap).all()):
            raise DataError("fleet series: non-finite value")
        if (gen < 0).any():
            raise DataError("fleet series: negative generation")
        if (cap <= 0).any():
            raise DataError("fleet series: capacity must be positive at every hour")
        if (gen > cap).any():
            raise DataError("fleet series: generation exceeds installed capacity")
        object.__setattr__(self, "hours", hours)
        object.__setattr__(self, "generation", gen)
        object.__setattr__(self, "capacity", cap)

    def __len__(self) -> int:
        return len(self.hours)

    @property
    def capacity_factor(self) -> np.ndarray:
        return self.generation / self.capacity

    def reindex(self, hours: pd.DatetimeIndex) -> "FleetSeries":
        pos = self.hours.get_indexer(hours)
        if (pos < 0).any():
            raise DataError("fleet series: requested hours not covered")
        return FleetSeries(hours, self.generation[pos], self.capacity[pos])


@dataclass(frozen=True, eq=False)
class ReferenceProfile:
    """Reference capacity factor used by financial CfDs, zero at negative prices."""

    hours: pd.DatetimeIndex
    capacity_factor: np.ndarray

    def __post_init__(self):
        hours = _check_index(self.hours, "reference profile")
        cf = _frozen(self.capacity_factor)
        if cf.shape != (len(hours),):
            raise DataError("reference profile: length does not match the hour index")
        if ((cf < 0) | (cf > 1)).any():
            raise DataError("reference profile: capacity factor outside [0, 1]")
        object.__setattr__(self, "hours", hours)
        object.__setattr__(self, "capacity_factor", cf)


@dataclass(frozen=True, eq=False)
class ParkSeries:
    park_id: str
    installed_capacity_mw: float
    hours: pd.DatetimeIndex
    potential_generation: np.ndarray
    commissioning_year: int | None = None

    def __post_init__(self):
        cap = self.installed_capacity_mw
        if cap is None or not math.isfinite(cap) or cap <= 0:
            raise DataError(f"park {self.park_id}: installed capacity must be positive")
        hours = _check_index(self.hours, f"park {self.park_id}")
        gen = _frozen(self.potential_generation)
        if gen.shape != (len(hours),):
            raise DataError(f"park {self.park_id}: length does not match the hour index")
        if not np.isfinite(gen).all():
            raise DataError(f"park {self.park_id}: non-finite generation")
        if (gen < 0).any():
            raise DataError(f"park {self.park_id}: negative generation")
        if (gen > cap).any():
            raise DataError(f"park {self.park_id}: generation exceeds installed capacity")
        object.__setattr__(self, "installed_capacity_mw", float(cap))
        object.__setattr__(self, "hours", hours)
        object.__setattr__(self, "potential_generation", gen)

    @property
    def capacity_factor(self) -> np.ndarray:
        return self.potential_generation / self.installed_capacity_mw

    def reindex(self, hours: pd.DatetimeIndex) -> "ParkSeries":
        pos = self.hours.get_indexer(hours)
        if (pos < 0).any():
            raise DataError(f"park {self.park_id}: requested hours not covered")
        return ParkSeries(
            self.park_id,
            self.installed_capacity_mw,
            hours,
            self.potential_generation[pos],
            self.commissioning_year,
        )


@dataclass(frozen=True, eq=False)
class MarketDataset:
    price: PriceSeries
    fleet: FleetSeries
    reference: ReferenceProfile
    parks: tuple[ParkSeries, ...]
    year_index: np.ndarray = field(repr=False)

    def __post_init__(self):
        hours = self.price.hours
        for name, other in (("fleet", self.fleet.hours), ("reference", self.reference.hours)):
            if not hours.equals(other):
                raise DataError(f"dataset: {name} hour index differs from price index")
        for park in self.parks:
            if not hours.equals(park.hours):
                raise DataError(f"dataset: park {park.park_id} hour index differs")
        ids = [p.park_id for p in self.parks]
        if len(set(ids)) != len(ids):
            raise DataError("dataset: duplicate park ids")
        object.__setattr__(self, "parks", tuple(self.parks))
        object.__setattr__(self, "year_index", _frozen(self.year_index, dtype=np.int64))

    @property
    def hours(self) -> pd.DatetimeIndex:
        return self.price.hours

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(int(y) for y in np.unique(self.year_index))

    def year_codes(self) -> np.ndarray:
        """Position of each hour's year within :attr:`years`."""
        return np.searchsorted(np.asarray(self.years), self.year_index)

    def park(self, park_id: str) -> ParkSeries:
        for p in self.parks:
            if p.park_id == park_id:
                return p
        raise KeyError(park_id)

    def with_parks(self, parks: Iterable[ParkSeries]) -> "MarketDataset":
        return MarketDataset(self.price, self.fleet, self.reference, tuple(parks), self.year_index)


# --------------------------------------------------------------------------- loading


def _read_rows(path: Path, header: Sequence[str]) -> tuple[list[int], list[list[str]], list[str]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    line_numbers, rows, raw = [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    got = tuple(c.strip() for c in lines[0].split(","))
    if got != tuple(header):
        raise DataError(f"{path}: expected header {','.join(header)!r}, got {lines[0]!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = next(csv.reader([line]))
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}")
        line_numbers.append(lineno)
        rows.append([c.strip() for c in cells])
        raw.append(line)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return line_numbers, rows, raw


def _parse_table(path: Path, header: Sequence[str]) -> tuple[pd.DatetimeIndex, np.ndarray]:
    """Parse a timestamped CSV into a sorted hour index and a float matrix."""
    line_numbers, rows, raw = _read_rows(path, header)
    stamps = pd.to_datetime([r[0] for r in rows], utc=True, format="ISO8601", errors="coerce")
    bad = np.flatnonzero(stamps.isna())
    if bad.size:
        i = bad[0]
        raise DataError(f"{path}:{line_numbers[i]}: malformed timestamp {rows[i][0]!r}")
    off_hour = np.flatnonzero(stamps != stamps.floor("h"))
    if off_hour.size:
        i = off_hour[0]
        raise DataError(f"{path}:{line_numbers[i]}: timestamp not on a whole hour {rows[i][0]!r}")

    values = np.empty((len(rows), len(header) - 1))
    for j in range(1, len(header)):
        # float() rounds correctly, so exported repr() values load back bit-exact
        col = np.empty(len(rows))
        for i, r in enumerate(rows):
            try:
                col[i] = float(r[j])
            except ValueError:
                raise DataError(
                    f"{path}:{line_numbers[i]}: malformed value {r[j]!r} in {header[j]}"
                ) from None
        for i in np.flatnonzero(~np.isfinite(col)):
            raise DataError(f"{path}:{line_numbers[i]}: non-finite value in {header[j]}")
        values[:, j - 1] = col

    keep = np.ones(len(rows), dtype=bool)
    dup = stamps.duplicated(keep=False)
    if dup.any():
        first_raw: dict[pd.Timestamp, str] = {}
        for i in np.flatnonzero(dup):
            ts = stamps[i]
            if ts not in first_raw:
                first_raw[ts] = raw[i]
            elif raw[i] == first_raw[ts]:
                keep[i] = False
            else:
                raise DataError(
                    f"{path}:{line_numbers[i]}: conflicting duplicate timestamp {ts.isoformat()}"
                )
    stamps = stamps[keep]
    values = values[keep]
    order = np.argsort(stamps.asi8, kind="stable")
    return pd.DatetimeIndex(stamps[order]), values[order]


def _clip_to_capacity(gen: np.ndarray, cap: np.ndarray | float, what: str, path) -> np.ndarray:
    if (gen < 0).any():
        raise DataError(f"{path}: negative generation in {what}")
    limit = np.asarray(cap) * (1.0 + CAPACITY_TOLERANCE)
    if (gen > limit).any():
        raise DataError(f"{path}: generation exceeds {what} capacity beyond tolerance")
    return np.minimum(gen, cap)


def load_price_series(path: str | Path) -> PriceSeries:
    hours, values = _parse_table(Path(path), PRICE_HEADER)
    return PriceSeries(hours, values[:, 0])


def load_fleet_series(path: str | Path) -> FleetSeries:
    hours, values = _parse_table(Path(path), FLEET_HEADER)
    gen, cap = values[:, 0], values[:, 1]
    if (cap <= 0).any():
        raise DataError(f"{path}: fleet capacity must be positive at every hour")
    return FleetSeries(hours, _clip_to_capacity(gen, cap, "fleet", path), cap)


def load_park_series(
    path: str | Path,
    park_id: str,
    capacity_mw: float | None,
    commissioning_year: int | None = None,
) -> ParkSeries:
    """Load one park's potential generation; metadata comes from the scenario config."""
    if capacity_mw is None:
        raise DataError(f"park {park_id}: missing capacity metadata")
    if not capacity_mw > 0:
        raise DataError(f"park {park_id}: capacity must be positive, got {capacity_mw}")
    hours, values = _parse_table(Path(path), PARK_HEADER)
    gen = _clip_to_capacity(values[:, 0], float(capacity_mw), f"park {park_id}", path)
    return ParkSeries(park_id, float(capacity_mw), hours, gen, commissioning_year)


# --------------------------------------------------------------------------- derived series


def build_reference_profile(fleet: FleetSeries, price: PriceSeries) -> ReferenceProfile:
    """Fleet capacity factor per hour, zeroed where the spot price is negative."""
    if not fleet.hours.equals(price.hours):
        raise DataError("reference profile: fleet and price hour indices differ")
    if (fleet.capacity <= 0).any():
        raise DataError("reference profile: zero fleet capacity")
    cf = np.where(price.price >= 0, fleet.generation / fleet.capacity, 0.0)
    return ReferenceProfile(fleet.hours, cf)


def valid_hours_per_year(hours: pd.DatetimeIndex) -> dict[int, int]:
    years, counts = np.unique(hours.year, return_counts=True)
    return {int(y): int(c) for y, c in zip(years, counts)}


def align_dataset(
    price: PriceSeries,
    fleet: FleetSeries,
    parks: Sequence[ParkSeries],
    min_valid_hours: int = DEFAULT_MIN_VALID_HOURS,
) -> MarketDataset:
    """Intersect all hour indices and keep only calendar years with enough hours.

    Short years are dropped whole rather than gap-filled.
    """
    if not parks:
        raise DataError("align: at least one park is required")
    if len(price) == 0 or len(fleet) == 0 or any(len(p.hours) == 0 for p in parks):
        raise DataError("align: empty input series")

    common = price.hours.intersection(fleet.hours)
    for park in parks:
        common = common.intersection(park.hours)
    if len(common) == 0:
        raise DataError("align: hour indices do not intersect")
    common = common.sort_values()

    counts = valid_hours_per_year(common)
    kept = sorted(y for y, n in counts.items() if n >= min_valid_hours)
    if not kept:
        raise DataError(
            f"align: no calendar year has at least {min_valid_hours} common hours "
            f"(counts: {counts})"
        )
    hours = common[np.isin(common.year, kept)]

    price_a = price.reindex(hours)
    fleet_a = fleet.reindex(hours)
    return MarketDataset(
        price=price_a,
        fleet=fleet_a,
        reference=build_reference_profile(fleet_a, price_a),
        parks=tuple(p.reindex(hours) for p in parks),
        year_index=np.asarray(hours.year, dtype=np.int64),
    )


# --------------------------------------------------------------------------- export


def _format_hours(hours: pd.DatetimeIndex) -> list[str]:
    return list(hours.strftime("%Y-%m-%dT%H:%M:%SZ"))


def _write_csv(path: Path, header: Sequence[str], hours: pd.DatetimeIndex, *columns: np.ndarray):
    path.parent.mkdir(parents=True, exist_ok=True)
    stamps = _format_hours(hours)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        cols = [c.tolist() for c in columns]
        for i, ts in enumerate(stamps):
            fh.write(ts + "," + ",".join(repr(c[i]) for c in cols) + "\n")


def write_price_csv(series: PriceSeries, path: str | Path) -> None:
    _write_csv(Path(path), PRICE_HEADER, series.hours, series.price)


def write_fleet_csv(series: FleetSeries, path: str | Path) -> None:
    _write_csv(Path(path), FLEET_HEADER, series.hours, series.generation, series.capacity)


def write_park_csv(series: ParkSeries, path: str | Path) -> None:
    _write_csv(Path(path), PARK_HEADER, series.hours, series.potential_generation)


def export_dataset(dataset: MarketDataset, directory: str | Path) -> dict:
    """Write a dataset with the ingestion schemas; returns the park metadata block.

    The returned mapping has the same shape as the ``data.files`` section of a
    scenario config, with paths relative to ``directory``.
    """
    directory = Path(directory)
    write_price_csv(dataset.price, directory / "price.csv")
    write_fleet_csv(dataset.fleet, directory / "fleet.csv")
    parks_meta = []
    for park in dataset.parks:
        rel = f"parks/{park.park_id}.csv"
        write_park_csv(park, directory / rel)
        parks_meta.append(
            {
                "id": park.park_id,
                "path": rel,
                "capacity_mw": park.installed_capacity_mw,
                "commissioning_year": park.commissioning_year,
            }
        )
    return {"price": "price.csv", "fleet": "fleet.csv", "parks": parks_meta}
