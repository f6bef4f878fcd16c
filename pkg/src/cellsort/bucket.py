"""Bucketing and distribution: histogram on high-order bits, global cumulative
totals via the hypercube sum, grouping by bucket, and the staggered all-to-all
redistribution.

Whole buckets are assigned to the cell owning their global cumulative
endpoint; boundary buckets are never split, so per-cell received counts
deviate from the even target by at most the largest single bucket. Receivers
know everyone's global cumulative totals, so each can derive exactly how many
elements it will be sent; combined with the chunk tail rule this makes
unordered receive termination exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fabric import TAG_DIST, Cell, ProtocolError
from .radix import counting_pass

VALUE_BITS = 31


def bucket_index(v: int, b: int) -> int:
    """Bucket of a value: its top log2(b) bits within the 31-bit range."""
    if b < 2 or b & (b - 1):
        raise ValueError(f"bucket count must be a power of two, got {b}")
    if v < 0 or v > 2**VALUE_BITS - 1:
        raise ProtocolError(f"value {v} outside [0, 2^31)")
    return int(v) >> (VALUE_BITS - b.bit_length() + 1)


@dataclass
class BucketTotals:
    b: int
    counts: np.ndarray                 # int64[b]
    local_cum: np.ndarray              # inclusive prefix of counts
    global_cum: np.ndarray | None = None


def histogram(elements, b: int) -> BucketTotals:
    """Count elements per bucket and take the local cumulative totals."""
    if b < 2 or b & (b - 1):
        raise ValueError(f"bucket count must be a power of two, got {b}")
    arr = np.ascontiguousarray(elements, dtype=np.uint32)
    if arr.size and int(arr.max()) > 2**VALUE_BITS - 1:
        raise ProtocolError("element outside [0, 2^31)")
    shift = VALUE_BITS - (b.bit_length() - 1)
    counts = np.bincount(arr >> np.uint32(shift), minlength=b).astype(np.int64)
    return BucketTotals(b=b, counts=counts, local_cum=np.cumsum(counts))


def global_totals(cell: Cell, totals: BucketTotals) -> BucketTotals:
    """Fill machine-wide cumulative totals (one hypercube sum of local ones)."""
    totals.global_cum = cell.hypercube_vector_sum(totals.local_cum)
    return totals


def partial_sort(elements, totals: BucketTotals) -> np.ndarray:
    """Group elements by bucket, buckets ascending; within-bucket order is free."""
    arr = np.ascontiguousarray(elements, dtype=np.uint32)
    if arr.size == 0:
        return arr
    log_b = totals.b.bit_length() - 1
    return counting_pass(arr, VALUE_BITS - log_b, log_b)


def bucket_destinations(global_cum: np.ndarray, p: int) -> np.ndarray:
    """Destination cell per bucket: owner of the bucket's cumulative endpoint."""
    n_total = int(global_cum[-1])
    if n_total % p:
        raise ProtocolError(f"{n_total} elements not divisible across {p} cells")
    quota = n_total // p
    dest = (np.maximum(global_cum, 1) - 1) // quota
    return np.minimum(dest, p - 1).astype(np.int64)


def expected_receive_counts(global_cum: np.ndarray, p: int) -> np.ndarray:
    """Exactly how many elements each cell receives under the endpoint rule."""
    dest = bucket_destinations(global_cum, p)
    counts = np.diff(global_cum, prepend=0)
    out = np.zeros(p, dtype=np.int64)
    np.add.at(out, dest, counts)
    return out


@dataclass(frozen=True)
class SendPlan:
    segments: tuple[tuple[int, int], ...]   # (offset, length) per destination cell


def make_send_plan(totals: BucketTotals, p: int) -> SendPlan:
    """Contiguous local array segment per destination, ordered by cell id."""
    if totals.global_cum is None:
        raise ProtocolError("global totals required before planning")
    dest = bucket_destinations(totals.global_cum, p)
    size = int(totals.local_cum[-1]) if totals.local_cum.size else 0
    starts_excl = totals.local_cum - totals.counts
    first_bucket = np.searchsorted(dest, np.arange(p), side="left")
    offsets = [int(starts_excl[k]) if k < totals.b else size for k in first_bucket]
    offsets.append(size)
    segments = tuple((offsets[d], offsets[d + 1] - offsets[d]) for d in range(p))
    assert sum(ln for _, ln in segments) == size
    return SendPlan(segments=segments)


def distribute(cell: Cell, elements, plan: SendPlan, totals: BucketTotals) -> np.ndarray:
    """All-to-all redistribution with self-first modulo stagger.

    Sends go to self first, then upward through cell ids modulo P; empty
    segments still produce a null message so every cell hears from every
    source. Reception stops once all P sources have been heard AND the
    received count is within the receive tolerance of this cell's expected
    total; the big-send tail rule (final chunk of a multi-part message
    exceeds the tolerance) makes that test exact.
    """
    p, me = cell.p, cell.id
    arr = np.ascontiguousarray(elements, dtype=np.uint32)
    expected = int(expected_receive_counts(totals.global_cum, p)[me])
    for j in range(p):
        d = (me + j) % p
        off, ln = plan.segments[d]
        cell.big_send(d, TAG_DIST, arr[off:off + ln])

    tol = cell.fabric.config.receive_tolerance
    heard: set[int] = set()
    parts: list[np.ndarray] = []
    count = 0
    while len(heard) < p or count < expected - tol:
        msg = cell.recv_any(TAG_DIST)
        heard.add(msg.src)
        if not msg.is_null:
            parts.append(msg.payload)
            count += msg.payload.size
    if count != expected:
        raise ProtocolError(
            f"cell {me}: received {count} elements, expected {expected}")
    if not parts:
        return np.empty(0, dtype=np.uint32)
    return np.concatenate(parts)
