#!/usr/bin/env python3
"""Shared-repository size sensitivity: scales the Q-table feature dimension
(0.5x / 1x / 2x) and sweeps core counts, mirroring the storage-vs-performance
trade-off study.

Usage: python scripts/slr_size_sweep.py [--out DIR] [--events N]
"""

import argparse
import json
import sys
import tempfile

from crlsim.cli import main as crlsim_main


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out")
    ap.add_argument("--events", type=int, default=40_000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    warmup = args.events // 4
    spec = {
        "name": "slr_size",
        "base": {
            "sim": {"n_cores": 4, "warmup_events": warmup,
                    "sim_events": args.events - warmup,
                    "prefetcher": "pythia_crl", "seed": args.seed},
            "trace": {"synthetic": {"kind": "shared_stream",
                                    "length": args.events,
                                    "shared_fraction": 0.8,
                                    "seed": args.seed}},
            "output": {"dir": args.out},
        },
        "axes": {"qvstore.scale": [0.5, 1, 2]},
    }
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(spec, fh)
        spec_path = fh.name
    return crlsim_main(["sweep", "--spec", spec_path])


if __name__ == "__main__":
    sys.exit(main())
