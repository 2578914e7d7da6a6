#!/usr/bin/env python3
"""Cross-core redundancy study: per-core agents vs the coordinated prefetcher
on a shared-stream workload.

Replays the memory-side prefetch request log of each run through a sliding-
window duplicate counter and prints duplicate rates with the filter on and
off. Usage: python scripts/redundancy_study.py [--events N] [--cores N]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from reference_models import count_window_duplicates

from crlsim.coord import CoordConfig
from crlsim.engine import SimConfig, Simulation
from crlsim.memhier import DramConfig, MemHierConfig
from crlsim.rl import LearnParams, RlConfig
from crlsim.trace import SyntheticSpec, generate


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--events", type=int, default=60_000, help="events per core")
    ap.add_argument("--cores", type=int, default=4)
    ap.add_argument("--shared-fraction", type=float, default=0.8)
    ap.add_argument("--window", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    spec = SyntheticSpec(kind="shared_stream", length=args.events,
                         shared_fraction=args.shared_fraction, seed=args.seed)
    traces = generate(spec, args.cores)
    warmup = args.events // 4

    print(f"{args.cores} cores, {args.events} events/core, "
          f"shared_fraction={args.shared_fraction}, window={args.window}")
    print(f"{'prefetcher':18s} {'filter':6s} {'issued':>8s} {'dispatched':>10s} "
          f"{'duplicates':>10s} {'dup_rate':>8s}")
    for kind, filt in (("pythia_percore", False),
                       ("pythia_crl", False),
                       ("pythia_crl", True)):
        cfg = SimConfig(
            n_cores=args.cores, warmup_events=warmup,
            sim_events=args.events - warmup,
            prefetcher=kind, seed=args.seed,
            memhier=MemHierConfig(dram=DramConfig(200, 10)),
            rl=RlConfig(params=LearnParams(epsilon=0.1, rng_seed=args.seed)),
            coord=CoordConfig(filter_prefetches=filt),
            collect_request_log=True,
        )
        sim = Simulation(cfg, traces)
        metrics = sim.run()
        dups = count_window_duplicates(sim.request_log, window=args.window)
        rate = dups / max(1, metrics.prefetches_issued)
        print(f"{kind:18s} {str(filt):6s} {metrics.prefetches_issued:8d} "
              f"{metrics.prefetch_dispatches:10d} {dups:10d} {rate:8.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
