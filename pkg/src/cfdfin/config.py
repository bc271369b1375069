"""Scenario configuration: a versioned YAML schema validated with pydantic.

Unknown keys are rejected at every level. Relative data paths resolve
against the directory of the config file.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import fields as dc_fields
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .contracts import STANDARD_IDS, ContractSpec, figure_order
from .errors import ConfigError
from .finance import CostParams, SolverSettings
from .synth import SynthConfig

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "CFDFIN_OUTPUT_ROOT"

_SYNTH_FIELDS = {f.name for f in dc_fields(SynthConfig)}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ParkFile(_Strict):
    id: str
    path: str
    capacity_mw: float = Field(gt=0)
    commissioning_year: int | None = None


class FileData(_Strict):
    price: str
    fleet: str
    parks: list[ParkFile] = Field(min_length=1)

    @field_validator("parks")
    @classmethod
    def _unique_ids(cls, parks):
        ids = [p.id for p in parks]
        if len(set(ids)) != len(ids):
            raise ValueError("park ids must be unique")
        return parks


class DataSection(_Strict):
    synthetic: dict | None = None
    files: FileData | None = None
    min_valid_hours: int = Field(default=8000, ge=1, le=8784)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.synthetic is None) == (self.files is None):
            raise ValueError("data needs exactly one of 'synthetic' or 'files'")
        if self.synthetic is not None:
            unknown = set(self.synthetic) - _SYNTH_FIELDS
            if unknown:
                raise ValueError(f"unknown synthetic keys: {sorted(unknown)}")
            self.synth_config().validate()
        return self

    def synth_config(self) -> SynthConfig:
        params = dict(self.synthetic or {})
        for key in ("annual_price_levels", "park_correlation", "park_capacity_mw", "park_cf_scale"):
            if isinstance(params.get(key), list):
                params[key] = tuple(params[key])
        params.setdefault("min_valid_hours", self.min_valid_hours)
        return SynthConfig(**params)


class CostSection(_Strict):
    capex: float = 1500.0
    opex: float = 50.0
    cost_of_debt: float = 0.0115
    cost_of_equity: float = 0.10
    lifetime_years: int = 30

    def params(self, capex: float | None = None, opex: float | None = None) -> CostParams:
        return CostParams(
            self.capex if capex is None else capex,
            self.opex if opex is None else opex,
            self.cost_of_debt,
            self.cost_of_equity,
            self.lifetime_years,
        )


class SolverSection(_Strict):
    strike_bracket: tuple[float, float] = (-50.0, 500.0)
    max_expansion: float = Field(default=10.0, ge=1.0)
    xtol: float = Field(default=1e-12, gt=0)
    max_iter: int = Field(default=200, ge=1)
    audit_points: int = Field(default=9, ge=3)
    scan_points: int = Field(default=1001, ge=3)
    gap_tol: float = Field(default=1e-6, gt=0)

    @field_validator("strike_bracket")
    @classmethod
    def _ordered(cls, v):
        if not v[0] < v[1]:
            raise ValueError("strike_bracket must be increasing")
        return v


class AlphaSection(_Strict):
    max: float = Field(default=2.0, gt=0)
    tol: float = Field(default=1e-3, gt=0)
    grid_points: int = Field(default=21, ge=3)


class OutputSection(_Strict):
    dir: str = "results"
    formats: list[Literal["csv", "json"]] = ["csv"]
    plots: bool = False


class GridSection(_Strict):
    capex: list[float] = Field(min_length=1)
    opex: list[float] = Field(min_length=1)

    @field_validator("capex", "opex")
    @classmethod
    def _increasing(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("grid axes must be strictly increasing")
        return v


class ScenarioConfig(_Strict):
    schema_version: Literal[1]
    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    seed: int = 0
    data: DataSection
    contracts: list[str] = Field(min_length=1)
    costs: CostSection = CostSection()
    solver: SolverSection = SolverSection()
    alpha: AlphaSection = AlphaSection()
    aggregation: Literal["simple", "capacity"] = "simple"
    output: OutputSection = OutputSection()
    grid: GridSection | None = None

    @field_validator("contracts", mode="before")
    @classmethod
    def _known_contracts(cls, ids):
        if ids == "all" or ids == ["all"]:
            ids = list(STANDARD_IDS)
        if not isinstance(ids, list) or not all(isinstance(c, str) for c in ids):
            raise ValueError("contracts must be 'all' or a list of contract ids")
        specs = []
        for cid in ids:
            try:
                specs.append(ContractSpec.from_id(cid))
            except (ValueError, ConfigError) as exc:
                raise ValueError(f"unknown contract {cid!r}") from exc
        if len({s.contract_id for s in specs}) != len(specs):
            raise ValueError("duplicate contract ids")
        return [s.contract_id for s in figure_order(specs)]

    @model_validator(mode="after")
    def _grid_has_baseline(self):
        if self.grid is not None:
            if self.costs.capex not in self.grid.capex or self.costs.opex not in self.grid.opex:
                raise ValueError("grid axes must contain the baseline capex and opex")
        self.costs.params()
        return self

    @property
    def specs(self) -> list[ContractSpec]:
        return [ContractSpec.from_id(c) for c in self.contracts]

    def solver_settings(self) -> SolverSettings:
        s = self.solver
        return SolverSettings(
            strike_bracket=tuple(s.strike_bracket),
            max_expansion=s.max_expansion,
            xtol=s.xtol,
            max_iter=s.max_iter,
            audit_points=s.audit_points,
            scan_points=s.scan_points,
            gap_tol=s.gap_tol,
            alpha_max=self.alpha.max,
            alpha_tol=self.alpha.tol,
            alpha_grid_points=self.alpha.grid_points,
        )

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


class LoadedConfig:
    """A validated scenario plus the directory its relative paths refer to."""

    def __init__(self, scenario: ScenarioConfig, base_dir: Path):
        self.scenario = scenario
        self.base_dir = base_dir

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def output_dir(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        base = Path(root) if root else self.resolve(self.scenario.output.dir)
        return base / self.scenario.name


def _format_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(raw: dict, base_dir: str | Path = ".", seed: int | None = None) -> LoadedConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if seed is not None:
        raw = {**raw, "seed": seed}
    try:
        scenario = ScenarioConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_format_error(exc)}") from None
    except ConfigError as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return LoadedConfig(scenario, Path(base_dir))


def load_config(path: str | Path, seed: int | None = None) -> LoadedConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    return parse_config(raw, path.parent, seed)
