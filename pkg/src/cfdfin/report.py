"""Report tables: CSV/JSON serialization with atomic writes, optional plots."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[str, ...]
    rows: tuple[dict, ...]

    def __post_init__(self):
        for row in self.rows:
            if tuple(row) != self.columns:
                raise ValueError(f"{self.name}: row keys {tuple(row)} differ from columns")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else repr(v)
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return None if math.isnan(v) else v
    return value


def table_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell(row[c]) for c in table.columns])
    return buf.getvalue()


def table_json(table: Table) -> str:
    payload = {
        "table": table.name,
        "columns": list(table.columns),
        "rows": [{c: _json_value(row[c]) for c in table.columns} for row in table.rows],
    }
    return json.dumps(payload, indent=2, allow_nan=False) + "\n"


def write_atomic(path: Path, data: str | bytes) -> None:
    """Write to a sibling temp file, then rename over the target."""
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class OutputWriter:
    """Collects written files so a failed run can remove what it produced."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.written: list[str] = []

    def write(self, name: str, data: str | bytes) -> None:
        write_atomic(self.directory / name, data)
        self.written.append(name)

    def rollback(self) -> None:
        for name in self.written:
            try:
                (self.directory / name).unlink()
            except FileNotFoundError:
                pass
        self.written.clear()


def emit_report(tables: Sequence[Table], writer: OutputWriter,
                formats: Sequence[str] = ("csv",), plots: bool = False,
                plot_builders: Sequence = ()) -> list[str]:
    """Serialize every table in each format; plots never change table content."""
    if not tables or all(not t.rows for t in tables):
        raise ValueError("nothing to report: results are empty")
    unknown = set(formats) - {"csv", "json"}
    if unknown:
        raise ConfigError(f"unknown report formats {sorted(unknown)}")
    start = len(writer.written)
    for table in tables:
        if "csv" in formats:
            writer.write(f"{table.name}.csv", table_csv(table))
        if "json" in formats:
            writer.write(f"{table.name}.json", table_json(table))
    if plots:
        for build in plot_builders:
            for name, data in build():
                writer.write(name, data)
    return writer.written[start:]


# --------------------------------------------------------------------------- plots


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise ConfigError("plots need matplotlib; install the 'plots' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _png(fig) -> bytes:
    buf = io.BytesIO()
    # fixed metadata keeps the bytes stable across runs
    fig.savefig(buf, format="png", dpi=120, metadata={"Software": None})
    return buf.getvalue()


def whisker_plot(fleet_rows: Sequence[dict], metrics: Sequence[tuple[str, str]],
                 contract_order: Sequence[str], filename: str):
    """Mean bars with p10-p90 whiskers per contract, one panel per metric."""
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(metrics), figsize=(5.5 * len(metrics), 4.2), squeeze=False)
    for ax, (metric, label) in zip(axes[0], metrics):
        lookup = {r["contract_id"]: r for r in fleet_rows if r["metric"] == metric}
        ids = [c for c in contract_order if c in lookup and lookup[c]["mean"] is not None]
        means = np.array([lookup[c]["mean"] for c in ids], dtype=float)
        lo = np.array([lookup[c]["p10"] for c in ids], dtype=float)
        hi = np.array([lookup[c]["p90"] for c in ids], dtype=float)
        x = np.arange(len(ids))
        ax.bar(x, means, color="#4c72b0")
        ax.errorbar(x, means, yerr=[means - lo, hi - means], fmt="none", ecolor="black", capsize=3)
        ax.set_xticks(x, ids, rotation=60, ha="right", fontsize=8)
        ax.set_ylabel(label)
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    data = _png(fig)
    plt.close(fig)
    return filename, data


def decomposition_plot(fleet_rows: Sequence[dict], contract_order: Sequence[str], filename: str):
    plt = _pyplot()
    derisk = {r["contract_id"]: r["mean"] for r in fleet_rows if r["metric"] == "derisking"}
    subsidy = {r["contract_id"]: r["mean"] for r in fleet_rows if r["metric"] == "subsidy"}
    ids = [c for c in contract_order if c in derisk and c != "merchant"]
    x = np.arange(len(ids))
    d = np.array([derisk[c] for c in ids], dtype=float)
    s = np.array([subsidy[c] for c in ids], dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.bar(x, d, label="de-risking", color="#4c72b0")
    ax.bar(x, s, bottom=d, label="subsidy", color="#dd8452")
    ax.set_xticks(x, ids, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("EUR/MWh")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    data = _png(fig)
    plt.close(fig)
    return filename, data


def grid_heatmaps(rows: Sequence[dict], capex_axis: Sequence[float], opex_axis: Sequence[float],
                  contract_ids: Sequence[str]):
    """One heatmap of fleet-average LCOE reduction per contract."""
    plt = _pyplot()
    out = []
    for cid in contract_ids:
        if cid == "merchant":
            continue
        z = np.full((len(opex_axis), len(capex_axis)), np.nan)
        for r in rows:
            if r["contract_id"] == cid and r["lcoe_reduction"] is not None:
                z[opex_axis.index(r["opex"]), capex_axis.index(r["capex"])] = r["lcoe_reduction"]
        fig, ax = plt.subplots(figsize=(5.5, 4.2))
        im = ax.imshow(z, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(capex_axis)), [f"{v:g}" for v in capex_axis])
        ax.set_yticks(range(len(opex_axis)), [f"{v:g}" for v in opex_axis])
        ax.set_xlabel("capex (EUR/kW)")
        ax.set_ylabel("opex (EUR/kW/a)")
        ax.set_title(f"LCOE reduction vs merchant, {cid}")
        fig.colorbar(im, ax=ax, label="EUR/MWh")
        fig.tight_layout()
        out.append((f"grid_{cid}.png", _png(fig)))
        plt.close(fig)
    return out
