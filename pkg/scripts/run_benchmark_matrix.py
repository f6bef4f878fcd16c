#!/usr/bin/env python3
"""Run the five benchmark keys across machine sizes and tabulate phase timings.

Reproduces the phase-breakdown view of the sorter's behaviour: one row per
(key, cells, order) with per-phase seconds, message counts and the selected
cleanup mode. Pass --csv-dir to keep the full per-run reports.

    python scripts/run_benchmark_matrix.py --cells 16 64 --per-cell 16384 --orders revised
"""

import argparse
import sys
import time
from pathlib import Path

from cellsort.driver import RunConfig, emit_report, run


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cells", type=int, nargs="+", default=[16, 64])
    parser.add_argument("--per-cell", type=int, default=2**14,
                        help="elements per cell (n = cells * per-cell)")
    parser.add_argument("--orders", nargs="+", default=["revised", "initial"],
                        choices=["revised", "initial"])
    parser.add_argument("--keys", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv-dir", default=None,
                        help="write one CSV+JSON report per run here")
    args = parser.parse_args(argv)

    header = f"{'key':>3} {'cells':>5} {'order':>8} {'cleanup':>8} {'dev':>6} {'total':>8}  phases"
    print(header)
    print("-" * len(header))
    t0 = time.perf_counter()
    failures = 0
    for p in args.cells:
        for key in args.keys:
            for order in args.orders:
                cfg = RunConfig(key_id=key, n_total=p * args.per_cell, p=p,
                                seed=args.seed, phase_order=order)
                report = run(cfg)
                if not report.verify_report.accepted:
                    failures += 1
                phases = " ".join(f"{ph.phase.split('_')[0][:5]}={ph.seconds:.3f}"
                                  for ph in report.phases)
                flag = "" if report.verify_report.accepted else "  ** FAILED **"
                print(f"{key:>3} {p:>5} {order:>8} {report.cleanup_mode_selected:>8} "
                      f"{report.post_distribution_deviation:>6} "
                      f"{report.total_seconds:>7.3f}s  {phases}{flag}")
                if args.csv_dir:
                    name = f"key{key}_p{p}_{order}.csv"
                    emit_report(report, Path(args.csv_dir) / name)
    print(f"\n{time.perf_counter() - t0:.1f}s total, "
          f"{'all runs verified' if not failures else f'{failures} FAILURES'}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
