"""Figure builders over the simulator's frozen metrics CSV.

Every figure is derived from a small data table computed first and written
next to the images as a sidecar CSV; the table is the single source of truth
for what was rendered, so figures stay auditable. Inputs are validated
against the pinned schema before any output file is created: a mismatch
leaves nothing behind.

This package consumes the simulator only through its CSV contract; it never
imports it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

PINNED_SCHEMA_VERSION = "1"

# the simulator's frozen report schema (schema_version 1)
PINNED_COLUMNS = (
    "schema_version", "run_id", "prefetcher", "n_cores", "core",
    "instructions", "cycles", "ipc", "ipc_normalized",
    "coverage", "overprediction", "accuracy", "redundancy_rate",
    "bw_utilization", "llc_misses", "baseline_llc_misses",
)

NA = "NA"

FIGURE_KINDS = (
    "ipc_bars",
    "cov_overpred_bars",
    "slr_sensitivity",
    "bw_sensitivity",
    "core_scaling",
)


class SchemaMismatchError(ValueError):
    """Input CSV does not match the pinned schema; names the offending file."""


class FigureDataError(ValueError):
    """Inputs parsed but do not contain what the figure needs."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    baseline_run_id: str
    out_path: str  # image path; a .pdf twin and .csv sidecar sit next to it

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise ValueError("at least one input CSV required")


def _parse_value(text: str):
    if text == NA:
        return None
    try:
        return float(text) if "." in text or "e" in text else int(text)
    except ValueError:
        return text


def read_rows(paths) -> list[dict]:
    """Load and validate metrics rows from one or more CSVs."""
    rows: list[dict] = []
    for path in paths:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != PINNED_COLUMNS:
                raise SchemaMismatchError(
                    f"{path}: header does not match pinned schema version "
                    f"{PINNED_SCHEMA_VERSION}")
            for lineno, raw in enumerate(reader, start=2):
                if raw["schema_version"] != PINNED_SCHEMA_VERSION:
                    raise SchemaMismatchError(
                        f"{path}:{lineno}: schema_version "
                        f"{raw['schema_version']!r} != pinned {PINNED_SCHEMA_VERSION!r}")
                rows.append({k: _parse_value(v) for k, v in raw.items()})
    return rows


def _aggregates(rows: list[dict]) -> list[dict]:
    """Aggregate pseudo-core rows in input order, one per run."""
    out = []
    seen = set()
    for row in rows:
        if row["core"] == "aggregate" and row["run_id"] not in seen:
            seen.add(row["run_id"])
            out.append(row)
    if not out:
        raise FigureDataError("no aggregate rows found in inputs")
    return out


def _baseline_ipc(aggs: list[dict], baseline_run_id: str) -> float:
    for row in aggs:
        if row["run_id"] == baseline_run_id:
            ipc = row["ipc"]
            if not ipc:
                raise FigureDataError(
                    f"baseline run {baseline_run_id!r} has no usable ipc")
            return ipc
    raise FigureDataError(f"baseline run id {baseline_run_id!r} not in inputs")


# -- data tables ------------------------------------------------------------------


def build_table(spec: FigureSpec) -> list[dict]:
    """Compute exactly the numbers the figure will render."""
    rows = read_rows(spec.inputs)
    aggs = _aggregates(rows)
    kind = spec.kind

    if kind == "ipc_bars":
        base = _baseline_ipc(aggs, spec.baseline_run_id)
        return [{"run_id": r["run_id"],
                 "ipc": r["ipc"],
                 "ipc_normalized": (r["ipc"] / base) if r["ipc"] is not None else None}
                for r in aggs]

    if kind == "cov_overpred_bars":
        return [{"run_id": r["run_id"],
                 "coverage": r["coverage"] if r["coverage"] is not None else 0.0,
                 "overprediction": (r["overprediction"]
                                    if r["overprediction"] is not None else 0.0)}
                for r in aggs]

    if kind in ("slr_sensitivity", "bw_sensitivity"):
        base = _baseline_ipc(aggs, spec.baseline_run_id)
        return [{"run_id": r["run_id"],
                 "ipc_normalized": (r["ipc"] / base) if r["ipc"] is not None else None}
                for r in aggs]

    # core_scaling: bandwidth utilisation against the core count
    return [{"run_id": r["run_id"],
             "n_cores": r["n_cores"],
             "bw_utilization": (r["bw_utilization"]
                                if r["bw_utilization"] is not None else 0.0)}
            for r in aggs]


# -- rendering --------------------------------------------------------------------

_TITLES = {
    "ipc_bars": "IPC normalised to baseline",
    "cov_overpred_bars": "Coverage and overprediction vs baseline LLC misses",
    "slr_sensitivity": "IPC vs shared-repository size variant",
    "bw_sensitivity": "IPC vs bandwidth variant",
    "core_scaling": "Bandwidth utilisation vs core count",
}


def render(kind: str, table: list[dict]):
    """Build the matplotlib figure for an already-computed table."""
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(table)), 3.2))
    labels = [str(row["run_id"]) for row in table]

    if kind == "ipc_bars":
        values = [row["ipc_normalized"] or 0.0 for row in table]
        ax.bar(labels, values, color="#4878a8")
        ax.axhline(1.0, color="grey", lw=0.8, ls="--")
        ax.set_ylabel("normalised IPC")
    elif kind == "cov_overpred_bars":
        xs = range(len(table))
        width = 0.38
        ax.bar([x - width / 2 for x in xs], [r["coverage"] for r in table],
               width, label="coverage", color="#4878a8")
        ax.bar([x + width / 2 for x in xs], [r["overprediction"] for r in table],
               width, label="overprediction", color="#d1605e")
        ax.set_xticks(list(xs), labels)
        ax.set_ylabel("fraction of baseline LLC misses")
        ax.legend()
    elif kind in ("slr_sensitivity", "bw_sensitivity"):
        values = [row["ipc_normalized"] or 0.0 for row in table]
        ax.plot(labels, values, marker="o", color="#4878a8")
        ax.set_ylabel("normalised IPC")
    else:  # core_scaling
        xs = [row["n_cores"] for row in table]
        ys = [row["bw_utilization"] for row in table]
        ax.plot(xs, ys, marker="s", color="#6a9f58")
        ax.set_xlabel("cores")
        ax.set_ylabel("bandwidth utilisation")

    ax.set_title(_TITLES[kind])
    if kind != "core_scaling":
        ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    return fig


def _sidecar_path(out_path: Path) -> Path:
    return out_path.with_suffix(".csv")


def _vector_path(out_path: Path) -> Path:
    return out_path.with_suffix(".pdf")


def make_figure(spec: FigureSpec) -> list[dict]:
    """Validate, compute, render, and write one figure.

    Writes a raster image at out_path, a vector twin next to it, and the
    sidecar CSV holding exactly the plotted numbers. Validation happens
    before any file is opened. Returns the sidecar table.
    """
    table = build_table(spec)  # raises on schema or data problems
    out_path = Path(spec.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    fig = render(spec.kind, table)
    try:
        fig.savefig(out_path, dpi=150)
        fig.savefig(_vector_path(out_path), metadata={"CreationDate": None})
    finally:
        plt.close(fig)

    sidecar = _sidecar_path(out_path)
    with open(sidecar, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(table[0].keys()))
        writer.writeheader()
        writer.writerows(table)
    return table


def read_sidecar(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [{k: _parse_value(v) for k, v in row.items()}
                for row in csv.DictReader(fh)]
