"""Command-line front end: single runs, sensitivity sweeps, trace generation,
and the storage-overhead table.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, engine, metrics, trace
from .config import (
    ConfigError,
    RunSetup,
    apply_overrides,
    load_config,
    resolve_config,
    setup_from_dict,
)
from .rl import QVStoreGeometry, storage_bits

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

MANIFEST_SCHEMA_VERSION = "1"


# -- shared helpers ------------------------------------------------------------


def _load_traces(setup: RunSetup) -> list[list[trace.TraceRecord]]:
    if setup.trace_file is not None:
        records = trace.parse_trace(setup.trace_file)
        return trace.split_by_core(records, setup.sim.n_cores)
    if setup.synthetic is not None:
        needed = setup.sim.warmup_events + setup.sim.sim_events
        if setup.synthetic.length < needed:
            raise ConfigError(
                f"trace.synthetic.length {setup.synthetic.length} is shorter than "
                f"warmup+sim events {needed}")
        return trace.generate(setup.synthetic, setup.sim.n_cores)
    raise ConfigError("trace: either trace.file or trace.synthetic is required")


def _paired_runs(setup: RunSetup, traces) -> list[metrics.RunMetrics]:
    """Run the configured prefetcher next to a no-prefetch baseline on the
    same traces; baseline LLC misses feed coverage/overprediction."""
    from dataclasses import replace

    base_cfg = replace(setup.sim, prefetcher="none")
    baseline = engine.run(base_cfg, traces).with_run_id(f"{setup.run_name}-baseline")
    runs = [baseline]
    if setup.sim.prefetcher != "none":
        target = engine.run(setup.sim, traces)
        target.baseline_llc_misses = baseline.total_llc_misses
        runs.append(target.with_run_id(f"{setup.run_name}-{setup.sim.prefetcher}"))
    else:
        baseline.baseline_llc_misses = baseline.total_llc_misses
    return runs


def _write_manifest(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# -- run -----------------------------------------------------------------------


def cmd_run(args) -> int:
    raw = load_config(args.config) if args.config else resolve_config({})
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"sim.seed={args.seed}")
    if args.prefetcher is not None:
        overrides.append(f"sim.prefetcher={args.prefetcher}")
    if args.cores is not None:
        overrides.append(f"sim.n_cores={args.cores}")
    if args.out is not None:
        overrides.append(f"output.dir={args.out}")
    if overrides:
        raw = resolve_config(apply_overrides(raw, overrides))
    setup = setup_from_dict(raw)

    traces = _load_traces(setup)
    runs = _paired_runs(setup, traces)

    out_dir = Path(setup.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / f"{setup.run_name}.{setup.out_format}"
    metrics.emit(runs, report_path, fmt=setup.out_format,
                 baseline_run_id=runs[0].run_id)
    manifest_path = out_dir / f"{setup.run_name}.manifest.json"
    _write_manifest(manifest_path, {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "name": setup.run_name,
        "effective_config": setup.resolved,
        "runs": [{"run_id": r.run_id, "prefetcher": r.prefetcher} for r in runs],
        "outputs": [report_path.name, manifest_path.name],
    })
    print(f"wrote {report_path} ({len(runs)} runs)")
    return EXIT_OK


# -- sweep -----------------------------------------------------------------------


def _axis_values(spec_axes: dict) -> list[tuple[str, list]]:
    axes = sorted(spec_axes.items())
    for key, values in axes:
        if not isinstance(values, list) or not values:
            raise ConfigError(f"axes.{key}: must be a non-empty list")
    return axes


def _variant_configs(base_raw: dict, axes: list[tuple[str, list]]):
    keys = [k for k, _ in axes]
    for combo in itertools.product(*(vals for _, vals in axes)):
        overrides = {}
        raw = copy.deepcopy(base_raw)
        for key, value in zip(keys, combo):
            overrides[key] = value
            if key == "qvstore.scale":
                base_fd = raw.get("qvstore", {}).get("feature_dim", 128)
                raw = apply_overrides(raw, [f"qvstore.feature_dim={int(base_fd * value)}"])
            else:
                raw = apply_overrides(raw, [f"{key}={json.dumps(value)}"])
        yield overrides, raw


def _baseline_key(setup: RunSetup) -> str:
    rel = {
        "n_cores": setup.sim.n_cores,
        "warmup": setup.sim.warmup_events,
        "sim": setup.sim.sim_events,
        "memhier": repr(setup.sim.memhier),
        "trace_file": setup.trace_file,
        "synthetic": repr(setup.synthetic),
        "seed": setup.sim.seed,
    }
    return json.dumps(rel, sort_keys=True)


def _run_variant(payload: tuple[str, dict]) -> tuple[str, list[dict]]:
    run_id, raw = payload
    setup = setup_from_dict(resolve_config(raw))
    traces = _load_traces(setup)
    runs = _paired_runs(setup, traces)
    rows = metrics.build_rows(runs, baseline_run_id=runs[0].run_id)
    return run_id, rows


def cmd_sweep(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.spec}: not valid JSON ({exc})") from None
    if not isinstance(spec, dict) or "name" not in spec or "axes" not in spec:
        raise ConfigError("sweep spec requires name, axes, and base sections")
    name = spec["name"]
    base_raw = spec.get("base", {})
    resolve_config(base_raw)  # validate early, with field paths
    axes = _axis_values(spec["axes"])

    out_dir = Path(spec.get("output", {}).get("dir") or
                   base_raw.get("output", {}).get("dir") or "out") / name
    chunk_dir = out_dir / "variants"
    chunk_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / f"{name}.manifest.json"
    combined_path = out_dir / f"{name}.csv"

    manifest = {"schema_version": MANIFEST_SCHEMA_VERSION, "name": name,
                "axes": dict(axes), "variants": [], "outputs": []}
    done_ids: set[str] = set()
    if args.resume and manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        done_ids = {v["run_id"] for v in manifest["variants"] if v.get("status") == "done"}

    variants = []
    for idx, (overrides, raw) in enumerate(_variant_configs(base_raw, axes)):
        run_id = f"{name}-v{idx:03d}"
        raw = apply_overrides(raw, [f"output.run_name={run_id}"])
        variants.append((run_id, overrides, raw))

    pending = [(rid, raw) for rid, _, raw in variants
               if not (rid in done_ids and (chunk_dir / f"{rid}.rows.json").exists())]

    results: dict[str, list[dict]] = {}
    if args.jobs and args.jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for run_id, rows in pool.map(_run_variant, pending):
                results[run_id] = rows
    else:
        for payload in pending:
            run_id, rows = _run_variant(payload)
            results[run_id] = rows

    manifest_variants = []
    all_rows: list[dict] = []
    for run_id, overrides, raw in variants:
        chunk_path = chunk_dir / f"{run_id}.rows.json"
        if run_id in results:
            chunk_path.write_text(json.dumps(results[run_id], indent=2) + "\n",
                                  encoding="utf-8")
        rows = json.loads(chunk_path.read_text(encoding="utf-8"))
        all_rows.extend(rows)
        manifest_variants.append({
            "run_id": run_id,
            "overrides": overrides,
            "status": "done",
            "rows": len(rows),
            "chunk": f"variants/{chunk_path.name}",
            "effective_config": resolve_config(raw),
        })

    lines = [metrics.CSV_HEADER]
    for row in all_rows:
        lines.append(",".join(metrics._fmt(row[col]) for col in metrics.CSV_COLUMNS))
    combined_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    manifest["variants"] = manifest_variants
    manifest["outputs"] = [combined_path.name, manifest_path.name] + [
        v["chunk"] for v in manifest_variants
    ]
    _write_manifest(manifest_path, manifest)
    print(f"wrote {combined_path} ({len(variants)} variants)")
    return EXIT_OK


# -- gen-trace -------------------------------------------------------------------


def cmd_gen_trace(args) -> int:
    spec = trace.SyntheticSpec(
        kind=args.kind,
        length=args.length,
        stride_bytes=args.stride_bytes,
        region_base=int(args.region_base, 0),
        shared_fraction=args.shared_fraction,
        seed=args.seed if args.seed is not None else _env_seed(),
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    per_core = trace.generate(spec, args.cores)
    trace.write_trace(args.out, per_core)
    total = sum(len(s) for s in per_core)
    print(f"wrote {args.out}: {total} records across {args.cores} cores")
    return EXIT_OK


def _env_seed() -> int:
    env = os.environ.get("CRLSIM_SEED")
    return int(env) if env else 0


# -- overhead --------------------------------------------------------------------


def _kb(bits: int) -> str:
    kb = bits / 1024
    return f"{kb:g} Kb"


def cmd_overhead(args) -> int:
    geometry = QVStoreGeometry(
        n_vaults=args.vaults,
        planes_per_vault=args.planes,
        feature_dim=args.feature_dim,
        action_dim=args.action_dim,
        q_width_bits=args.q_width,
    )
    bits = storage_bits(geometry, eq_entries=args.eq_entries)
    g = geometry
    print("storage overhead")
    print(f"  QVStore: {bits['qvstore_bits']} bits ({_kb(bits['qvstore_bits'])})"
          f"  [{g.n_vaults} vaults x {g.planes_per_vault} planes x "
          f"{g.feature_dim} x {g.action_dim} x {g.q_width_bits}b]")
    print(f"  EQ:      {bits['eq_bits']} bits ({_kb(bits['eq_bits'])})"
          f"  [{args.eq_entries} entries x {bits['eq_entry_bits']} bits"
          "  (state 21 + action 5 + reward 5 + filled 1 + address 16 + core id 4)]")
    print(f"  Total:   {bits['total_bits']} bits ({_kb(bits['total_bits'])})")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crlsim",
        description="Trace-driven multicore cache simulator with coordinated RL prefetching.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one prefetcher next to a no-prefetch baseline")
    p_run.add_argument("--config", help="JSON config file")
    p_run.add_argument("--seed", type=int, help="override sim.seed")
    p_run.add_argument("--prefetcher", help="override sim.prefetcher")
    p_run.add_argument("--cores", type=int, help="override sim.n_cores")
    p_run.add_argument("--out", help="override output.dir")
    p_run.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                       help="override any config key (repeatable)")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="cross-product sensitivity sweep")
    p_sweep.add_argument("--spec", required=True, help="sweep spec JSON")
    p_sweep.add_argument("--resume", action="store_true",
                         help="skip variants already recorded in the manifest")
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="run variants in parallel processes")
    p_sweep.set_defaults(func=cmd_sweep)

    p_gen = sub.add_parser("gen-trace", help="generate a synthetic trace file")
    p_gen.add_argument("--kind", required=True, choices=trace.SYNTH_KINDS)
    p_gen.add_argument("--length", required=True, type=int, help="events per core")
    p_gen.add_argument("--stride-bytes", type=int, default=64)
    p_gen.add_argument("--region-base", default="0x100000")
    p_gen.add_argument("--shared-fraction", type=float, default=0.0)
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--cores", type=int, default=1)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen_trace)

    p_over = sub.add_parser("overhead", help="print the storage overhead table")
    p_over.add_argument("--vaults", type=int, default=2)
    p_over.add_argument("--planes", type=int, default=3)
    p_over.add_argument("--feature-dim", type=int, default=128)
    p_over.add_argument("--action-dim", type=int, default=16)
    p_over.add_argument("--q-width", type=int, default=16)
    p_over.add_argument("--eq-entries", type=int, default=256)
    p_over.set_defaults(func=cmd_overhead)

    p_ver = sub.add_parser("version", help="print the version")
    p_ver.set_defaults(func=lambda args: (print(f"crlsim {__version__}"), EXIT_OK)[1])

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except trace.TraceFormatError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except engine.SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
