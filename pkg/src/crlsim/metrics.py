"""Run counters and the derived evaluation quantities, plus CSV/JSON emission.

The CSV schema is frozen and versioned; downstream figure tooling pins
against it. System-level ratios (coverage, overprediction, accuracy,
redundancy, bandwidth utilisation) appear on the per-run "aggregate"
pseudo-core row; per-core rows carry the per-core counters. Undefined
ratios (zero denominators) are emitted as the NA marker, never as division
results.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

SCHEMA_VERSION = "1"

CSV_COLUMNS = (
    "schema_version", "run_id", "prefetcher", "n_cores", "core",
    "instructions", "cycles", "ipc", "ipc_normalized",
    "coverage", "overprediction", "accuracy", "redundancy_rate",
    "bw_utilization", "llc_misses", "baseline_llc_misses",
)
CSV_HEADER = ",".join(CSV_COLUMNS)

NA = "NA"


@dataclass
class CoreCounters:
    instructions: int = 0
    cycles: int = 0
    l1_hits: int = 0
    l1_misses: int = 0
    l2_hits: int = 0
    l2_misses: int = 0
    llc_hits: int = 0
    llc_misses: int = 0

    @property
    def ipc(self) -> float | None:
        return self.instructions / self.cycles if self.cycles > 0 else None


def _zero_suppressed() -> dict[str, int]:
    return {"in_cache": 0, "in_flight": 0, "cross_core_window": 0}


@dataclass
class RunMetrics:
    run_id: str
    prefetcher: str
    n_cores: int
    seed: int
    cores: list[CoreCounters]
    prefetches_issued: int = 0       # policy candidates with a real target
    prefetch_dispatches: int = 0     # requests that reached the memory side
    prefetch_fills: int = 0
    prefetch_covered_hits: int = 0
    useless_prefetch_evictions: int = 0
    suppressed_redundant: dict[str, int] = field(default_factory=_zero_suppressed)
    duplicate_in_cache: int = 0
    demand_merged: int = 0
    no_prefetch_actions: int = 0
    out_of_page_actions: int = 0
    dram_requests: int = 0
    dram_busy_cycles: int = 0
    inflight_at_end: int = 0
    baseline_llc_misses: int | None = None

    @property
    def total_instructions(self) -> int:
        return sum(c.instructions for c in self.cores)

    @property
    def max_cycles(self) -> int:
        return max((c.cycles for c in self.cores), default=0)

    @property
    def total_llc_misses(self) -> int:
        return sum(c.llc_misses for c in self.cores)

    def with_run_id(self, run_id: str) -> "RunMetrics":
        return replace(self, run_id=run_id)


def compute(raw: RunMetrics) -> dict:
    """Derive the evaluation quantities from raw counters.

    Ratios with a zero or missing denominator come back as None.
    """
    ipc_per_core = [c.ipc for c in raw.cores]
    max_cycles = raw.max_cycles
    ipc = raw.total_instructions / max_cycles if max_cycles > 0 else None

    base = raw.baseline_llc_misses
    if base is None or base == 0:
        coverage = overprediction = None
    else:
        coverage = raw.prefetch_covered_hits / base
        overprediction = raw.useless_prefetch_evictions / base

    fills = raw.prefetch_fills
    accuracy = raw.prefetch_covered_hits / fills if fills > 0 else None

    issued = raw.prefetches_issued
    if issued > 0:
        redundant = sum(raw.suppressed_redundant.values()) + raw.duplicate_in_cache
        redundancy_rate = redundant / issued
    else:
        redundancy_rate = None

    bw_utilization = (
        min(1.0, raw.dram_busy_cycles / max_cycles) if max_cycles > 0 else None
    )

    return {
        "ipc_per_core": ipc_per_core,
        "ipc": ipc,
        "coverage": coverage,
        "overprediction": overprediction,
        "accuracy": accuracy,
        "redundancy_rate": redundancy_rate,
        "bw_utilization": bw_utilization,
    }


def _fmt(value) -> str:
    if value is None:
        return NA
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def build_rows(runs: list[RunMetrics], baseline_run_id: str) -> list[dict]:
    """One row per (run, core) plus an aggregate pseudo-core per run.

    ipc_normalized divides each row's IPC by the matching row of the named
    baseline run; the baseline normalises to exactly 1.0 against itself.
    """
    by_id = {r.run_id: r for r in runs}
    if baseline_run_id not in by_id:
        raise ValueError(f"baseline run id {baseline_run_id!r} not among runs")
    baseline = by_id[baseline_run_id]
    base_stats = compute(baseline)

    rows: list[dict] = []
    for run in runs:
        stats = compute(run)
        for core_idx, cc in enumerate(run.cores):
            base_ipc = None
            if core_idx < len(baseline.cores):
                base_ipc = baseline.cores[core_idx].ipc
            ipc = cc.ipc
            if run.run_id == baseline_run_id and core_idx < len(baseline.cores):
                normalized = 1.0 if ipc is not None else None
            else:
                normalized = (ipc / base_ipc) if (ipc is not None and base_ipc) else None
            rows.append({
                "schema_version": SCHEMA_VERSION,
                "run_id": run.run_id,
                "prefetcher": run.prefetcher,
                "n_cores": run.n_cores,
                "core": core_idx,
                "instructions": cc.instructions,
                "cycles": cc.cycles,
                "ipc": ipc,
                "ipc_normalized": normalized,
                "coverage": None,
                "overprediction": None,
                "accuracy": None,
                "redundancy_rate": None,
                "bw_utilization": None,
                "llc_misses": cc.llc_misses,
                "baseline_llc_misses": None,
            })
        agg_ipc = stats["ipc"]
        if run.run_id == baseline_run_id:
            agg_norm = 1.0 if agg_ipc is not None else None
        else:
            base_agg = base_stats["ipc"]
            agg_norm = (agg_ipc / base_agg) if (agg_ipc is not None and base_agg) else None
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "run_id": run.run_id,
            "prefetcher": run.prefetcher,
            "n_cores": run.n_cores,
            "core": "aggregate",
            "instructions": run.total_instructions,
            "cycles": run.max_cycles,
            "ipc": agg_ipc,
            "ipc_normalized": agg_norm,
            "coverage": stats["coverage"],
            "overprediction": stats["overprediction"],
            "accuracy": stats["accuracy"],
            "redundancy_rate": stats["redundancy_rate"],
            "bw_utilization": stats["bw_utilization"],
            "llc_misses": run.total_llc_misses,
            "baseline_llc_misses": run.baseline_llc_misses,
        })
    return rows


def rows_to_csv_lines(rows: list[dict]) -> list[str]:
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join(_fmt(row[col]) for col in CSV_COLUMNS))
    return lines


def emit(runs: list[RunMetrics], path, fmt: str = "csv",
         baseline_run_id: str | None = None) -> list[dict]:
    """Write the report file; returns the rows written.

    All rows are built (and all validation done) before the file is opened,
    so failures leave nothing behind.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    if not runs:
        raise ValueError("no runs to emit")
    if baseline_run_id is None:
        baseline_run_id = runs[0].run_id
    rows = build_rows(runs, baseline_run_id)
    if fmt == "csv":
        text = "\n".join(rows_to_csv_lines(rows)) + "\n"
    else:
        text = json.dumps(rows, indent=2, sort_keys=False) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return rows


def read_rows_csv(path) -> list[dict]:
    """Read back an emitted CSV with NA markers restored to None."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(CSV_COLUMNS):
            raise ValueError(f"unexpected CSV header in {path}")
        for row in reader:
            parsed: dict = {}
            for key, value in row.items():
                if value == NA:
                    parsed[key] = None
                else:
                    parsed[key] = value
            out.append(parsed)
    return out
