"""Ground-truth acceptance checks on a finished machine state.

A sort is accepted when every cell is ascending, cell boundaries are
non-decreasing machine-wide, every cell holds exactly n/p elements, and the
final multiset equals the initial one. The multiset check compares fully
sorted concatenations when asked to be exact; otherwise it compares a
128-bit order-independent fingerprint (probabilistic, but cheap at any
scale).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

_MIX1 = np.uint64(0x9E3779B97F4A7C15)
_MIX2 = np.uint64(0xC2B2AE3D27D4EB4F)


@dataclass(frozen=True)
class VerifyReport:
    locally_sorted: tuple[bool, ...]
    globally_ordered: bool
    balanced: bool
    multiset_ok: bool
    max_cell_deviation: int

    @property
    def accepted(self) -> bool:
        return (all(self.locally_sorted) and self.globally_ordered
                and self.balanced and self.multiset_ok)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["locally_sorted"] = list(self.locally_sorted)
        d["accepted"] = self.accepted
        return d


def _splitmix(x: np.ndarray) -> np.ndarray:
    z = x + _MIX1
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def multiset_fingerprint(arrays) -> tuple[int, int]:
    """Order-independent 128-bit fingerprint (two 64-bit mixed-sum lanes)."""
    lane1 = np.uint64(0)
    lane2 = np.uint64(0)
    with np.errstate(over="ignore"):
        for arr in arrays:
            x = np.asarray(arr, dtype=np.uint64)
            if x.size == 0:
                continue
            lane1 += _splitmix(x).sum(dtype=np.uint64)
            lane2 += _splitmix(x ^ _MIX2).sum(dtype=np.uint64)
    return int(lane1), int(lane2)


def verify(initial, final, n_total: int, p: int, exact: bool = True) -> VerifyReport:
    """Check a final per-cell state against the initial distribution."""
    locally_sorted = tuple(
        bool(np.all(np.diff(np.asarray(a, dtype=np.int64)) >= 0)) for a in final)

    ordered = True
    prev_max = None
    for a in final:
        if len(a) == 0:
            continue
        arr = np.asarray(a)
        if prev_max is not None and int(arr.min()) < prev_max:
            ordered = False
            break
        prev_max = int(arr.max())

    target = n_total // p if p else 0
    counts = [len(a) for a in final]
    balanced = (n_total % p == 0) and all(c == target for c in counts)
    deviation = max(abs(c - target) for c in counts) if counts else 0

    if exact:
        before = np.sort(np.concatenate([np.asarray(a, dtype=np.uint32) for a in initial]))
        after_all = [np.asarray(a, dtype=np.uint32) for a in final]
        total_after = sum(a.size for a in after_all)
        multiset_ok = (total_after == before.size
                       and bool(np.array_equal(before, np.sort(np.concatenate(after_all)))))
    else:
        multiset_ok = multiset_fingerprint(initial) == multiset_fingerprint(final)

    return VerifyReport(locally_sorted=locally_sorted, globally_ordered=ordered,
                        balanced=balanced, multiset_ok=multiset_ok,
                        max_cell_deviation=deviation)
