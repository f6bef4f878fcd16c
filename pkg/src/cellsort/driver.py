"""CLI orchestrator: configure the machine, run the phases in either order,
time them, gather communication statistics, verify, and emit reports.

Phase orders:

* ``revised`` (default): pre-balance, bucket+distribute, post-balance,
  local radix sort, cleanup (exact merge-exchange; counts already equal).
* ``initial``: pre-balance, bucket+distribute, local radix sort, cleanup
  (rebalancing merge-exchange; counts may differ), post-balance on sorted
  data.

Each phase is one collective launch on the fabric, so wall-clock timing and
statistics deltas fall on phase barriers.

Exit codes: 0 verified, 1 verification failure, 2 configuration error,
3 runtime fault.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import balance, bucket, cleanup, keygen, radix
from .fabric import Fabric, FabricConfig, FabricError
from .verify import VerifyReport, multiset_fingerprint, verify

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_FAULT = 3

_EXACT_MULTISET_LIMIT = 2**21   # above this the multiset check defaults to the fingerprint


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    key_id: int
    n_total: int
    p: int
    seed: int = 0
    buckets: int = 8192
    chunk_elements: int = 64_000
    receive_tolerance: int = 128
    sample_points: int = 1000
    overlap_threshold: float = 0.65
    cleanup_mode: str = "auto"          # auto | linear | batcher
    phase_order: str = "revised"        # revised | initial
    narrow_keys: str = "auto"           # auto | off
    scheduler: str = "deterministic"    # deterministic | concurrent
    report_path: str | None = None
    exact_verify: bool = False

    def validate(self) -> None:
        if self.key_id not in (1, 2, 3, 4, 5):
            raise ConfigError(f"key must be 1..5, got {self.key_id}")
        if self.p < 2 or self.p > 1024 or self.p & (self.p - 1):
            raise ConfigError(f"cell count must be a power of two in [2, 1024], got {self.p}")
        if self.n_total < self.p:
            raise ConfigError("need at least one element per cell")
        if self.n_total % self.p:
            raise ConfigError(
                f"{self.n_total} elements not divisible across {self.p} cells "
                "(no padding is performed)")
        if self.buckets < 2 or self.buckets & (self.buckets - 1):
            raise ConfigError(f"bucket count must be a power of two, got {self.buckets}")
        if self.chunk_elements <= self.receive_tolerance:
            raise ConfigError("chunk size must exceed the receive tolerance")
        if self.sample_points < 1:
            raise ConfigError("sample_points must be positive")
        if not 0.0 <= self.overlap_threshold <= 1.0:
            raise ConfigError("overlap threshold must be in [0, 1]")
        for name, value, allowed in (
                ("cleanup", self.cleanup_mode, ("auto", "linear", "batcher")),
                ("order", self.phase_order, ("revised", "initial")),
                ("narrow-keys", self.narrow_keys, ("auto", "off")),
                ("scheduler", self.scheduler, ("deterministic", "concurrent"))):
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")


@dataclass
class PhaseStats:
    phase: str
    seconds: float
    messages: int
    bytes: int
    rounds: int


@dataclass
class RunReport:
    config: RunConfig
    phases: list[PhaseStats] = field(default_factory=list)
    cleanup_mode_selected: str = ""
    post_distribution_deviation: int = 0
    largest_bucket: int = 0
    verify_report: VerifyReport | None = None
    generator_version: str = keygen.GENERATOR_VERSION
    multiset_fingerprint: tuple[int, int] = (0, 0)
    total_seconds: float = 0.0
    final_cells: list[np.ndarray] | None = None   # not serialized

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        return {
            "config": cfg,
            "phases": [asdict(ph) for ph in self.phases],
            "cleanup_mode_selected": self.cleanup_mode_selected,
            "post_distribution_deviation": self.post_distribution_deviation,
            "largest_bucket": self.largest_bucket,
            "verify": self.verify_report.to_dict() if self.verify_report else None,
            "generator_version": self.generator_version,
            "multiset_fingerprint": list(self.multiset_fingerprint),
            "total_seconds": self.total_seconds,
        }


PHASE_ORDERS = {
    "revised": ("pre_balance", "bucket_distribute", "post_balance", "local_sort", "cleanup"),
    "initial": ("pre_balance", "bucket_distribute", "local_sort", "cleanup", "post_balance"),
}


def _pre_balance_prog(cell, arr, n_total):
    table = balance.compute_deltas(cell, len(arr), n_total)
    return balance.pre_balance(cell, arr, table)


def _bucket_prog(cell, arr, b, p):
    totals = bucket.histogram(arr, b)
    totals = bucket.global_totals(cell, totals)
    grouped = bucket.partial_sort(arr, totals)
    plan = bucket.make_send_plan(totals, p)
    out = bucket.distribute(cell, grouped, plan, totals)
    largest = int(np.diff(totals.global_cum, prepend=0).max())
    return out, largest


def _post_balance_prog(cell, arr, n_total, sorted_mode):
    table = balance.compute_deltas(cell, len(arr), n_total)
    return balance.post_balance(cell, arr, table, sorted_mode)


def _local_sort_prog(cell, arr, narrow):
    width = radix.detect_width(arr) if narrow == "auto" else radix.MAX_BITS
    return radix.radix_sort(arr, radix.default_plan(width))


def _cleanup_prog(cell, arr, cfg, exact):
    mode = cfg.cleanup_mode
    if mode == "auto":
        overlap = cleanup.overlap_fraction(cell, arr, cfg.sample_points)
        mode = cleanup.select_cleanup(cell, overlap, cfg.overlap_threshold)
    if mode == "batcher":
        out = cleanup.cleanup_batcher(cell, arr, exact=exact,
                                      sample_points=cfg.sample_points)
    else:
        out = cleanup.cleanup_linear(cell, arr, exact=exact,
                                     sample_points=cfg.sample_points)
    return out, mode


def run(config: RunConfig) -> RunReport:
    """Execute the configured sort end-to-end and return the full report."""
    config.validate()
    report = RunReport(config=config)

    dist = keygen.generate(keygen.KeySpec(
        key_id=config.key_id, n_total=config.n_total, p=config.p, seed=config.seed))
    report.multiset_fingerprint = multiset_fingerprint(dist.per_cell)

    fabric = Fabric(FabricConfig(
        p=config.p, chunk_elements=config.chunk_elements,
        receive_tolerance=config.receive_tolerance, scheduler=config.scheduler))

    arrays = [a.copy() for a in dist.per_cell]
    target = config.n_total // config.p
    t_start = time.perf_counter()

    for phase in PHASE_ORDERS[config.phase_order]:
        msgs0, bytes0, rounds0 = fabric.stats.totals()
        t0 = time.perf_counter()
        try:
            if phase == "pre_balance":
                arrays = fabric.run(_pre_balance_prog,
                                    [(arr, config.n_total) for arr in arrays])
            elif phase == "bucket_distribute":
                out = fabric.run(_bucket_prog,
                                 [(arr, config.buckets, config.p) for arr in arrays])
                arrays = [o[0] for o in out]
                report.largest_bucket = out[0][1]
                report.post_distribution_deviation = max(
                    abs(len(a) - target) for a in arrays)
            elif phase == "post_balance":
                sorted_mode = config.phase_order == "initial"
                arrays = fabric.run(_post_balance_prog,
                                    [(arr, config.n_total, sorted_mode) for arr in arrays])
            elif phase == "local_sort":
                arrays = fabric.run(_local_sort_prog,
                                    [(arr, config.narrow_keys) for arr in arrays])
            else:  # cleanup
                exact = config.phase_order == "revised"
                out = fabric.run(_cleanup_prog,
                                 [(arr, config, exact) for arr in arrays])
                arrays = [o[0] for o in out]
                report.cleanup_mode_selected = out[0][1]
        except FabricError as exc:
            raise FabricError(f"phase {phase}: {exc}") from exc
        msgs1, bytes1, rounds1 = fabric.stats.totals()
        report.phases.append(PhaseStats(
            phase=phase, seconds=time.perf_counter() - t0,
            messages=msgs1 - msgs0, bytes=bytes1 - bytes0, rounds=rounds1 - rounds0))

    report.total_seconds = time.perf_counter() - t_start
    report.final_cells = arrays
    exact = config.exact_verify or config.n_total <= _EXACT_MULTISET_LIMIT
    report.verify_report = verify(dist.per_cell, arrays, config.n_total, config.p,
                                  exact=exact)
    return report


def emit_report(report: RunReport, path) -> None:
    """Write the per-phase CSV and the full-report JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "seconds", "msgs", "bytes", "rounds"])
        for ph in report.phases:
            writer.writerow([ph.phase, f"{ph.seconds:.6f}", ph.messages,
                             ph.bytes, ph.rounds])
        writer.writerow(["total", f"{report.total_seconds:.6f}",
                         sum(p.messages for p in report.phases),
                         sum(p.bytes for p in report.phases),
                         sum(p.rounds for p in report.phases)])
    sidecar = path.with_suffix(".json") if path.suffix != ".json" \
        else path.with_name(path.stem + "_report.json")
    with open(sidecar, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellsort",
        description="Sort one of the five benchmark key distributions on a "
                    "simulated distributed-memory machine.")
    parser.add_argument("--key", type=int, required=True, help="key distribution 1..5")
    parser.add_argument("--n", type=int, required=True, help="total element count")
    parser.add_argument("--cells", type=int, required=True,
                        help="cell count (power of two)")
    parser.add_argument("--seed", type=int, default=0, help="generator seed")
    parser.add_argument("--buckets", type=int, default=8192,
                        help="bucket count (8192 default, 4096 reproduces the early setup)")
    parser.add_argument("--chunk", type=int, default=64_000,
                        help="large-message chunk size in elements")
    parser.add_argument("--sample", type=int, default=1000,
                        help="sample points for negotiation and overlap measurement")
    parser.add_argument("--overlap-threshold", type=float, default=0.65,
                        help="per-cell overlap fraction that flags the comparator schedule")
    parser.add_argument("--cleanup", default="auto",
                        choices=("auto", "linear", "batcher"), help="cleanup schedule")
    parser.add_argument("--order", default="revised", choices=("revised", "initial"),
                        help="phase order")
    parser.add_argument("--narrow-keys", default="auto", choices=("auto", "off"),
                        help="detect effective key width to shrink radix passes")
    parser.add_argument("--scheduler", default="deterministic",
                        choices=("deterministic", "concurrent"), help="execution mode")
    parser.add_argument("--report", default=None, metavar="PATH",
                        help="write phase CSV here (JSON sidecar alongside)")
    parser.add_argument("--verify", action="store_true",
                        help="force the exact multiset comparison at any size")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    config = RunConfig(
        key_id=args.key, n_total=args.n, p=args.cells, seed=args.seed,
        buckets=args.buckets, chunk_elements=args.chunk,
        sample_points=args.sample, overlap_threshold=args.overlap_threshold,
        cleanup_mode=args.cleanup, phase_order=args.order,
        narrow_keys=args.narrow_keys, scheduler=args.scheduler,
        report_path=args.report, exact_verify=args.verify)
    try:
        config.validate()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        report = run(config)
    except FabricError as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_FAULT

    if args.report:
        emit_report(report, args.report)

    vr = report.verify_report
    status = "verified" if vr.accepted else "FAILED"
    print(f"key {config.key_id} n={config.n_total} cells={config.p} "
          f"order={config.phase_order} cleanup={report.cleanup_mode_selected or config.cleanup_mode} "
          f"deviation={report.post_distribution_deviation} "
          f"time={report.total_seconds:.3f}s -> {status}")
    for ph in report.phases:
        print(f"  {ph.phase:<18} {ph.seconds:8.3f}s  msgs={ph.messages:<8} "
              f"bytes={ph.bytes:<12} rounds={ph.rounds}")
    return EXIT_OK if vr.accepted else EXIT_VERIFY_FAILED


if __name__ == "__main__":
    sys.exit(main())
