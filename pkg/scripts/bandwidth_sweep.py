#!/usr/bin/env python3
"""Bandwidth sensitivity sweep: coordinated vs per-core prefetching while the
DRAM admission gap widens. Writes a sweep spec and drives the CLI, so the
output CSV/manifest match what `crlsim sweep` produces.

Usage: python scripts/bandwidth_sweep.py [--out DIR] [--events N]
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from crlsim.cli import main as crlsim_main


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out")
    ap.add_argument("--events", type=int, default=40_000, help="events per core")
    ap.add_argument("--cores", type=int, default=4)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    warmup = args.events // 4
    spec = {
        "name": "bw_sweep",
        "base": {
            "sim": {"n_cores": args.cores, "warmup_events": warmup,
                    "sim_events": args.events - warmup,
                    "prefetcher": "pythia_crl", "seed": args.seed},
            "trace": {"synthetic": {"kind": "shared_stream",
                                    "length": args.events,
                                    "shared_fraction": 0.8,
                                    "seed": args.seed}},
            "output": {"dir": args.out},
        },
        "axes": {
            "dram.min_gap": [5, 10, 20, 40],
            "sim.prefetcher": ["pythia_crl", "pythia_percore"],
        },
    }
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(spec, fh)
        spec_path = fh.name
    rc = crlsim_main(["sweep", "--spec", spec_path])
    if rc == 0:
        print(f"sweep CSV under {Path(args.out) / 'bw_sweep'}")
    return rc


if __name__ == "__main__":
    sys.exit(main())
