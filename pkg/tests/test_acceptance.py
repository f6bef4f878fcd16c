"""Acceptance gate: every criterion the artifact must meet, at its stated
tolerance, printing one PASS line per criterion (run with ``pytest -s``
to see them live).

The matrix of end-to-end runs (criterion 1) is shared with criteria 6-8 via a
session fixture so the whole gate stays fast.
"""

import itertools
import statistics
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellsort import cleanup, keygen
from cellsort.driver import RunConfig, run
from cellsort.fabric import Fabric, FabricConfig, chunk_lengths
from cellsort.radix import default_plan, radix_sort
from conftest import run_cells, sort_split_oracle

KEYS = (1, 2, 3, 4, 5)
CELL_COUNTS = (4, 16, 64)
ORDERS = ("revised", "initial")


def _announce(num, detail):
    print(f"\ncriterion {num:2d} PASS: {detail}")


@pytest.fixture(scope="session")
def matrix_reports():
    """All criterion-1 runs: every key, cell count and phase order."""
    reports = {}
    t0 = time.perf_counter()
    for key, p, order in itertools.product(KEYS, CELL_COUNTS, ORDERS):
        cfg = RunConfig(key_id=key, n_total=p * 2**14, p=p, seed=20240521,
                        phase_order=order)
        reports[(key, p, order)] = run(cfg)
    reports["elapsed"] = time.perf_counter() - t0
    return reports


def test_criterion_01_end_to_end_correctness(matrix_reports):
    """Keys 1-5, p in {4,16,64}, n = p*2^14, both phase orders: verify all-true."""
    failures = []
    for (key, p, order) in itertools.product(KEYS, CELL_COUNTS, ORDERS):
        report = matrix_reports[(key, p, order)]
        vr = report.verify_report
        if not vr.accepted:
            failures.append((key, p, order, vr))
    assert not failures, f"failed runs: {failures}"
    elapsed = matrix_reports["elapsed"]
    assert elapsed < 60.0, f"matrix took {elapsed:.1f}s, budget is 60s"
    _announce(1, f"{len(KEYS) * len(CELL_COUNTS) * len(ORDERS)} runs verified "
                 f"in {elapsed:.1f}s (< 60s)")


def test_criterion_02_radix_oracle():
    """radix_sort equals the comparison-sort oracle on 200 fuzzed arrays."""
    rng = np.random.default_rng(2)
    checked = 0
    for trial in range(200):
        if trial == 0:
            arr = np.full(1000, 2**30, dtype=np.uint32)          # all equal
        elif trial == 1:
            arr = np.sort(rng.integers(0, 2**31, 100_000, dtype=np.uint32))
        elif trial == 2:
            arr = np.empty(0, dtype=np.uint32)
        else:
            n = int(rng.integers(0, 100_001))
            arr = rng.integers(0, 2**31, size=n, dtype=np.uint32)
        assert np.array_equal(radix_sort(arr), np.sort(arr))
        checked += 1
    _announce(2, f"{checked} fuzzed arrays (lengths to 1e5, full 31-bit range) "
                 "match np.sort exactly")


def test_criterion_03_hypercube_sum():
    """Hypercube vector sum equals the naive sum; rounds == log2(P) exactly."""
    rng = np.random.default_rng(3)
    for p in (2, 4, 8, 16, 64):
        vecs = rng.integers(0, 2**20, size=(p, 8192), dtype=np.int64)
        fab, results = run_cells(p, lambda cell: cell.hypercube_vector_sum(vecs[cell.id]))
        expected = vecs.sum(axis=0)
        for r in results:
            assert np.array_equal(r, expected)
        assert fab.stats.collective_rounds[-1] == int(np.log2(p))
    _announce(3, "P in {2,4,8,16,64}, length-8192 vectors: naive-sum equality, "
                 "rounds == log2(P) (6 at P=64)")


def test_criterion_04_merge_exchange_oracles():
    """Both merge-exchange variants equal sort-concatenate-split on 200 pairs."""
    rng = np.random.default_rng(4)

    def exact_prog(arrays):
        def prog(cell):
            return cleanup.merge_exchange_exact(cell, 1 - cell.id, arrays[cell.id])
        return prog

    def rebal_prog(arrays):
        def prog(cell):
            return cleanup.merge_exchange_rebalancing(cell, 1 - cell.id, arrays[cell.id])
        return prog

    for _ in range(200):
        m = int(rng.integers(1, 10_001))
        arrays = [np.sort(rng.integers(0, 2**31, size=m, dtype=np.uint32))
                  for _ in range(2)]
        _, results = run_cells(2, exact_prog(arrays))
        expected = sort_split_oracle(arrays)
        assert np.array_equal(results[0], expected[0])
        assert np.array_equal(results[1], expected[1])

    for _ in range(200):
        la, lb = (int(rng.integers(0, 10_001)) for _ in range(2))
        arrays = [np.sort(rng.integers(0, 2**31, size=la, dtype=np.uint32)),
                  np.sort(rng.integers(0, 2**31, size=lb, dtype=np.uint32))]
        _, results = run_cells(2, rebal_prog(arrays))
        total = la + lb
        low_keep = (total + 1) // 2      # lower cell id takes the extra element
        assert results[0].size == low_keep
        assert results[1].size == total - low_keep
        expected = sort_split_oracle(arrays, [low_keep, total - low_keep])
        assert np.array_equal(results[0], expected[0])
        assert np.array_equal(results[1], expected[1])
    _announce(4, "200 exact pairs (m ≤ 1e4) + 200 rebalancing pairs: exact "
                 "oracle equality and ceil/floor count rule")


def test_criterion_05_batcher_zero_one_principle():
    """cleanup_batcher sorts all 0/1 placements for (P,m) in {(2,3),(4,2),(8,1)}."""
    t0 = time.perf_counter()
    placements = 0
    for p, m in ((2, 3), (4, 2), (8, 1)):
        def prog(cell, arrs):
            return cleanup.cleanup_batcher(cell, arrs, exact=True)
        for bits in itertools.product((0, 1), repeat=p * m):
            arrays = [np.sort(np.array(bits[i * m:(i + 1) * m], dtype=np.uint32))
                      for i in range(p)]
            fab = Fabric(FabricConfig(p=p))
            results = fab.run(prog, [(arrays[i],) for i in range(p)])
            flat = [v for r in results for v in r.tolist()]
            assert flat == sorted(bits), f"placement {bits} not sorted at p={p}"
            placements += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0, f"exhaustive 0/1 check took {elapsed:.1f}s"
    _announce(5, f"{placements} 0/1 placements sorted exhaustively in {elapsed:.2f}s (< 5s)")


def test_criterion_06_selection_behavior():
    """At p=16, n=2^20, auto selects batcher on key 5 and linear on keys 1, 2."""
    modes = {}
    for key in (1, 2, 5):
        report = run(RunConfig(key_id=key, n_total=2**20, p=16, seed=99,
                               cleanup_mode="auto"))
        modes[key] = report.cleanup_mode_selected
        if key == 5:
            assert report.verify_report.accepted, "key 5 batcher run must verify"
    assert modes[5] == "batcher"
    assert modes[1] == "linear"
    assert modes[2] == "linear"
    _announce(6, f"auto selection at p=16, n=2^20: key5 -> {modes[5]}, "
                 f"key1 -> {modes[1]}, key2 -> {modes[2]}; key5 verified")


def test_criterion_07_distribution_imbalance(matrix_reports):
    """Post-distribute deviation never exceeds the largest single bucket."""
    observed = []
    for (key, p, order) in itertools.product(KEYS, CELL_COUNTS, ORDERS):
        report = matrix_reports[(key, p, order)]
        assert report.post_distribution_deviation <= report.largest_bucket, (
            f"key{key} p={p} {order}: deviation "
            f"{report.post_distribution_deviation} > largest bucket "
            f"{report.largest_bucket}")
        observed.append((key, p, report.post_distribution_deviation))
    uniform_dev = max(d for k, p, d in observed if k == 1)
    worst = max(d for _, _, d in observed)
    _announce(7, f"deviation <= largest bucket on all runs; observed max "
                 f"{worst} overall, {uniform_dev} on key 1 (reported, not asserted)")


def test_criterion_08_determinism_and_scheduler_independence(matrix_reports):
    """Identical reruns match exactly; both schedulers give identical arrays."""
    cfg = dict(key_id=4, n_total=2**18, p=16, seed=1234)
    a = run(RunConfig(**cfg))
    b = run(RunConfig(**cfg))
    assert all(np.array_equal(x, y) for x, y in zip(a.final_cells, b.final_cells))

    def strip(d):
        d = dict(d)
        d.pop("total_seconds")
        d["phases"] = [{k: v for k, v in ph.items() if k != "seconds"}
                       for ph in d["phases"]]
        return d

    assert strip(a.to_dict()) == strip(b.to_dict())

    c = run(RunConfig(**cfg, scheduler="concurrent"))
    assert all(np.array_equal(x, y) for x, y in zip(a.final_cells, c.final_cells))

    # scheduler independence also holds for the adversarial key
    det5 = matrix_reports[(5, 16, "revised")]
    conc5 = run(RunConfig(key_id=5, n_total=16 * 2**14, p=16, seed=20240521,
                          scheduler="concurrent"))
    assert all(np.array_equal(x, y)
               for x, y in zip(det5.final_cells, conc5.final_cells))
    _announce(8, "rerun arrays + non-timing report fields identical; "
                 "concurrent == deterministic final arrays (keys 4 and 5)")


def test_criterion_09_big_send_tail_rule():
    """1000 random payload lengths: lossless reconstruction, final chunk > R."""
    rng = np.random.default_rng(9)
    chunk, tol = 64_000, 128
    for _ in range(1000):
        n = int(rng.integers(0, 4 * chunk))
        lengths = chunk_lengths(n, chunk, tol)
        assert sum(lengths) == n
        if n > tol:
            assert lengths[-1] > tol
        elif n:
            assert lengths == [n]
        if len(lengths) > 1:
            assert all(ln == chunk for ln in lengths[:-1])
            assert lengths[-1] <= chunk + tol

    # and through the fabric: chunked sends reconstruct exactly
    def prog(cell, payload):
        if cell.id == 0:
            cell.big_send(1, 2, payload)
            return None
        return cell.recv_exact(0, 2, payload.size)

    for n in (0, 1, tol, tol + 1, chunk, chunk + tol, chunk + tol + 1, 200_123):
        payload = rng.integers(0, 2**31, size=n, dtype=np.uint32)
        fab = Fabric(FabricConfig(p=2, chunk_elements=chunk, receive_tolerance=tol))
        results = fab.run(prog, [(payload,), (payload,)])
        if n:
            assert np.array_equal(results[1], payload)
    _announce(9, "1000 random lengths: lossless, multi-chunk finals > R, "
                 "fabric round-trips exact")


def test_criterion_10_radix_linearity():
    """Median t(2e6)/t(1e6) over 5 trials stays in [1.5, 3.0]."""
    rng = np.random.default_rng(10)
    plan = default_plan(31)
    radix_sort(rng.integers(0, 2**31, size=1000, dtype=np.uint32), plan)  # warm JIT
    ratios = []
    for _ in range(5):
        a1 = rng.integers(0, 2**31, size=1_000_000, dtype=np.uint32)
        a2 = rng.integers(0, 2**31, size=2_000_000, dtype=np.uint32)
        t0 = time.perf_counter()
        radix_sort(a1, plan)
        t1 = time.perf_counter()
        radix_sort(a2, plan)
        t2 = time.perf_counter()
        ratios.append((t2 - t1) / (t1 - t0))
    median = statistics.median(ratios)
    assert 1.5 <= median <= 3.0, f"doubling ratio {median:.2f} outside [1.5, 3.0]"
    _announce(10, f"doubling-time ratio median {median:.2f} in [1.5, 3.0] "
                  f"(trials: {', '.join(f'{r:.2f}' for r in ratios)})")
