"""Final correction phase: overlap measurement, schedule selection, and the
two-cell merge-exchange in its exact (equal counts, in-place block merge) and
rebalancing (unequal counts, sampled one-shot negotiation) forms.

A merge-exchange between cells (lo, hi) leaves lo with the smaller half of
their combined sorted data and hi with the larger half. The linear schedule
sweeps neighbour pairs until a global sum reports no cell merged; the
comparator schedule runs the full odd-even merge network over cell ids and
sorts any placement outright.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .fabric import (TAG_BOUNDARY, TAG_NEGOTIATE, TAG_OVERLAP, TAG_SWAP,
                     Cell, ProtocolError)

DEFAULT_SAMPLE_POINTS = 1000
DEFAULT_BLOCK = 1024


# --------------------------------------------------------------------------- #
# sampling

@dataclass(frozen=True)
class SampleVector:
    """Evenly spaced block maxima; each sample stands for ``stride`` elements."""
    values: np.ndarray
    stride: int
    length: int


def make_samples(a: np.ndarray, max_points: int = DEFAULT_SAMPLE_POINTS) -> SampleVector:
    n = int(a.size)
    s = min(n, max_points)
    if s == 0:
        return SampleVector(values=np.empty(0, dtype=a.dtype), stride=1, length=0)
    stride = ceil(n / s)
    idx = np.minimum(np.arange(1, s + 1) * stride, n) - 1
    return SampleVector(values=a[idx], stride=stride, length=n)


def _min_cover(sample: SampleVector, bound: int) -> int:
    """Elements certainly <= bound: whole blocks whose maximum is <= bound."""
    j = int(np.searchsorted(sample.values, bound, side="right"))
    return min(j * sample.stride, sample.length)


def _max_cover(sample: SampleVector, bound: int) -> int:
    """Elements possibly <= bound.

    Sample j is block j's maximum and blocks are positionally ordered, so
    everything <= bound lives in blocks up to and including the first block
    whose maximum exceeds bound. Rounding up to that whole block is the
    over-send the negotiation is allowed.
    """
    j = int(np.searchsorted(sample.values, bound, side="right"))
    if j < sample.values.size:
        j += 1   # first block whose maximum exceeds bound may still hold <= bound
    return min(j * sample.stride, sample.length)


# --------------------------------------------------------------------------- #
# overlap measurement and schedule selection

def overlap_fraction(cell: Cell, elements: np.ndarray,
                     sample_points: int = DEFAULT_SAMPLE_POINTS) -> float:
    """Fraction of evenly spaced local samples strictly below the left
    neighbour's maximum. Cell 0 (and any empty cell) reports 0."""
    me, p = cell.id, cell.p
    if elements.size and np.any(np.diff(elements.astype(np.int64)) < 0):
        raise ProtocolError(f"cell {me}: overlap measurement needs sorted data")
    if me + 1 < p:
        cell.send(me + 1, TAG_OVERLAP, elements[-1:])
    if me == 0:
        return 0.0
    left_max = cell.recv_from(me - 1, TAG_OVERLAP)
    if left_max.size == 0 or elements.size == 0:
        return 0.0
    samples = make_samples(elements, sample_points)
    below = int(np.count_nonzero(samples.values < left_max[0]))
    return below / samples.values.size


def select_cleanup(cell: Cell, overlap: float, threshold: float = 0.65) -> str:
    """Collective vote: more than two cells at or above the threshold means
    the comparator schedule; otherwise the linear sweep. Same verdict on all
    cells."""
    flagged = cell.global_int_sum(1 if overlap >= threshold else 0)
    return "batcher" if flagged > 2 else "linear"


# --------------------------------------------------------------------------- #
# in-place block merge (bounded scratch)

class _Scratch:
    """Two staging blocks for the resident run plus one chunk-transfer block."""

    def __init__(self, block: int, dtype):
        self.block = block
        self.stage = np.empty(2 * block, dtype=dtype)
        self.chunk = np.empty(block, dtype=dtype)


def _reverse_inplace(v: np.ndarray, buf: np.ndarray) -> None:
    lo, hi = 0, v.size
    cap = buf.size
    while hi - lo > cap:
        c = min(cap, (hi - lo) // 2)
        buf[:c] = v[lo:lo + c]
        v[lo:lo + c] = v[hi - 1:hi - c - 1:-1]
        v[hi - c:hi] = buf[c - 1::-1]
        lo += c
        hi -= c
    seg = v[lo:hi]
    if seg.size > 1:
        buf[:seg.size] = seg
        seg[:] = buf[seg.size - 1::-1]


def _rotate_left(v: np.ndarray, r: int, buf: np.ndarray) -> None:
    if v.size == 0 or r % v.size == 0:
        return
    _reverse_inplace(v[:r], buf)
    _reverse_inplace(v[r:], buf)
    _reverse_inplace(v, buf)


def _merge_positions(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Final slots in the merged order; equal values from `a` land first.
    pos_a = np.arange(a.size) + np.searchsorted(b, a, side="left")
    pos_b = np.arange(b.size) + np.searchsorted(a, b, side="right")
    return pos_a, pos_b


def _leaf_forward(view: np.ndarray, n1: int, scratch: _Scratch) -> None:
    # run1 fits the staging blocks; run2 shifts left chunk by chunk
    a = scratch.stage[:n1]
    a[:] = view[:n1]
    b = view[n1:]
    pos_a, pos_b = _merge_positions(a, b)
    blk = scratch.block
    for lo in range(0, b.size, blk):
        hi = min(lo + blk, b.size)
        scratch.chunk[:hi - lo] = view[n1 + lo:n1 + hi]
        view[pos_b[lo:hi]] = scratch.chunk[:hi - lo]
    view[pos_a] = a


def _leaf_backward(view: np.ndarray, n1: int, scratch: _Scratch) -> None:
    # run2 fits the staging blocks; run1 shifts right, chunks taken from the top
    n2 = view.size - n1
    b = scratch.stage[:n2]
    b[:] = view[n1:]
    a = view[:n1]
    pos_a, pos_b = _merge_positions(a, b)
    blk = scratch.block
    lo = n1
    while lo > 0:
        hi = lo
        lo = max(0, lo - blk)
        scratch.chunk[:hi - lo] = view[lo:hi]
        view[pos_a[lo:hi]] = scratch.chunk[:hi - lo]
    view[pos_b] = b


def _merge_runs(view: np.ndarray, n1: int, scratch: _Scratch) -> None:
    n2 = view.size - n1
    if n1 == 0 or n2 == 0 or view[n1 - 1] <= view[n1]:
        return
    cap = 2 * scratch.block
    if n1 <= cap:
        _leaf_forward(view, n1, scratch)
        return
    if n2 <= cap:
        _leaf_backward(view, n1, scratch)
        return
    # Split around run1's middle element: everything left of the pivot in
    # both runs precedes everything right of it, so the halves merge
    # independently after a rotation brings them together.
    h = n1 // 2
    pivot = view[h]
    j = int(np.searchsorted(view[n1:], pivot, side="left"))
    _rotate_left(view[h:n1 + j], n1 - h, scratch.chunk)
    _merge_runs(view[:h + j], h, scratch)
    _merge_runs(view[h + j:], n1 - h, scratch)


def block_merge(a: np.ndarray, split: int, block_size: int = DEFAULT_BLOCK) -> np.ndarray:
    """Merge a[:split] and a[split:] (each sorted) in place.

    Scratch stays within three blocks: two staging blocks hold whichever run
    fits, and output moves through a one-block chunk buffer, so no unconsumed
    source data is ever overwritten. When both runs exceed the staging
    budget the array is split around a pivot (one rotation) and the halves
    merged recursively.
    """
    if block_size < 1:
        raise ValueError("block_size must be at least 1")
    if not 0 <= split <= a.size:
        raise ValueError("split outside array")
    scratch = _Scratch(block_size, a.dtype)
    _merge_runs(a, split, scratch)
    return a


# --------------------------------------------------------------------------- #
# merge-exchange

def _exchange_headers(cell: Cell, partner: int, payload: np.ndarray) -> np.ndarray:
    cell.send(partner, TAG_NEGOTIATE, payload)
    return cell.recv_from(partner, TAG_NEGOTIATE)


def merge_exchange_exact(cell: Cell, partner: int, elements: np.ndarray,
                         block_size: int = DEFAULT_BLOCK) -> np.ndarray:
    """Equal-length merge-exchange with exact negotiated traffic.

    The swap count k counts positions where the low cell's i-th largest
    exceeds the high cell's i-th smallest; that predicate is monotone in i,
    so both cells find k by bisection, exchanging one boundary value per
    probe. The low cell then swaps its top k for the high cell's bottom k,
    received data overwrites the sent region, and an in-place block merge
    finishes the job.
    """
    me = cell.id
    m = int(elements.size)
    theirs = _exchange_headers(cell, partner, np.array([m], dtype=np.int64))
    if int(theirs[0]) != m:
        raise ProtocolError(
            f"cell {me}: exact merge-exchange needs equal lengths "
            f"({m} vs {int(theirs[0])})")
    if m == 0:
        return elements
    am_low = me < partner

    lo, hi = 0, m
    while lo < hi:
        mid = (lo + hi) // 2
        mine = elements[m - 1 - mid] if am_low else elements[mid]
        other = _exchange_headers(cell, partner, np.array([mine], dtype=np.int64))[0]
        low_val, high_val = (int(mine), int(other)) if am_low else (int(other), int(mine))
        if low_val > high_val:
            lo = mid + 1
        else:
            hi = mid
    k = lo
    if k == 0:
        return elements

    if am_low:
        cell.big_send(partner, TAG_SWAP, elements[m - k:])
        got = cell.recv_exact(partner, TAG_SWAP, k)
        arr = np.concatenate([elements[:m - k], got])
        split = m - k
    else:
        cell.big_send(partner, TAG_SWAP, elements[:k])
        got = cell.recv_exact(partner, TAG_SWAP, k)
        arr = np.concatenate([got, elements[k:]])
        split = k
    return block_merge(arr, split, block_size)


def _merge_sorted(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.size == 0:
        return b.copy()
    if b.size == 0:
        return a.copy()
    out = np.empty(a.size + b.size, dtype=a.dtype)
    pos_a, pos_b = _merge_positions(a, b)
    out[pos_a] = a
    out[pos_b] = b
    return out


def merge_exchange_rebalancing(cell: Cell, partner: int, elements: np.ndarray,
                               sample_points: int = DEFAULT_SAMPLE_POINTS) -> np.ndarray:
    """Merge-exchange for unequal lengths with one-shot sampled negotiation.

    Both cells exchange length + sample vector once and derive the same
    conservative transfer counts: enough is always sent (rounded up to whole
    sample blocks), possibly more than necessary, and the amounts can differ
    per direction. Each side then merges its full list with the received
    chunk into a fresh array and keeps exactly its half -- the low cell the
    smaller ceil(total/2) values, the high cell the rest.
    """
    me = cell.id
    am_low = me < partner
    mine = make_samples(elements, sample_points)
    header = np.concatenate([np.array([elements.size, mine.stride], dtype=np.int64),
                             mine.values.astype(np.int64)])
    got = _exchange_headers(cell, partner, header)
    their_len, their_stride = int(got[0]), int(got[1])
    theirs = SampleVector(values=got[2:], stride=their_stride, length=their_len)

    total = elements.size + their_len
    if total == 0:
        return elements
    low_keep = (total + 1) // 2           # lower cell id takes the odd element
    low_s, high_s = (mine, theirs) if am_low else (theirs, mine)
    low_len = low_s.length
    high_len = high_s.length

    # Boundary value: walking the merged sample lists, the first sample at
    # which whole blocks *certainly* account for low_keep elements. The true
    # split value cannot exceed it.
    merged = np.sort(np.concatenate([np.asarray(low_s.values, dtype=np.int64),
                                     np.asarray(high_s.values, dtype=np.int64)]))
    boundary = int(merged[-1])
    for v in merged:
        if (_min_cover(low_s, int(v)) + _min_cover(high_s, int(v))) >= low_keep:
            boundary = int(v)
            break

    # Transfer counts round up to whole sample blocks: enough is always sent,
    # possibly more, and the two directions may differ.
    to_low = min(_max_cover(high_s, boundary), low_keep, high_len)
    to_high = low_len - low_keep + to_low
    if not 0 <= to_high <= low_len:
        raise ProtocolError(f"negotiated transfer {to_high} outside [0, {low_len}]")

    if am_low:
        if to_high:
            cell.big_send(partner, TAG_SWAP, elements[elements.size - to_high:])
        received = cell.recv_exact(partner, TAG_SWAP, to_low)
        return _merge_sorted(elements, received)[:low_keep]
    if to_low:
        cell.big_send(partner, TAG_SWAP, elements[:to_low])
    received = cell.recv_exact(partner, TAG_SWAP, to_high)
    merged_view = _merge_sorted(elements, received)
    return merged_view[merged_view.size - (total - low_keep):]


# --------------------------------------------------------------------------- #
# schedules

def batcher_schedule(p: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Odd-even merge-exchange comparator rounds over p cells (p a power of two).

    Sorts any placement outright; comparators within a round are disjoint.
    """
    if p < 1 or p & (p - 1):
        raise ProtocolError(f"comparator schedule needs a power-of-two cell count, got {p}")
    rounds = []
    span = 1
    while span < p:
        k = span
        while k >= 1:
            comps = []
            for j in range(k % span, p - k, 2 * k):
                for i in range(min(k, p - j - k)):
                    if (i + j) // (span * 2) == (i + j + k) // (span * 2):
                        comps.append((i + j, i + j + k))
            seen = [c for pair in comps for c in pair]
            assert len(seen) == len(set(seen))
            rounds.append(tuple(comps))
            k //= 2
        span *= 2
    return tuple(rounds)


def _boundary_overlap(cell: Cell, partner: int, elements: np.ndarray) -> bool:
    """Exchange boundary values with a neighbour; true if the pair overlaps."""
    am_low = cell.id < partner
    boundary = elements[-1:] if am_low else elements[:1]
    cell.send(partner, TAG_BOUNDARY, boundary)
    other = cell.recv_from(partner, TAG_BOUNDARY)
    if boundary.size == 0 or other.size == 0:
        return False
    if am_low:
        return int(boundary[0]) > int(other[0])
    return int(other[0]) > int(boundary[0])


def cleanup_linear(cell: Cell, elements: np.ndarray, *, exact: bool,
                   sample_points: int = DEFAULT_SAMPLE_POINTS,
                   block_size: int = DEFAULT_BLOCK,
                   max_iterations: int | None = None) -> np.ndarray:
    """Neighbour sweep: even cells look right then left, odd cells the
    reverse; overlapping pairs merge-exchange. Stops when a global sum shows
    an iteration with no merges anywhere. The iteration cap only guards
    against livelock bugs; it is not part of the algorithm."""
    me, p = cell.id, cell.p
    cap = max_iterations if max_iterations is not None else 4 * p
    arr = elements
    iteration = 0
    while True:
        iteration += 1
        if iteration > cap:
            raise ProtocolError(
                f"cell {me}: linear cleanup exceeded {cap} iterations")
        merged = False
        for phase in (0, 1):
            if me % 2 == phase:
                partner = me + 1
            else:
                partner = me - 1
            if not 0 <= partner < p:
                continue
            if _boundary_overlap(cell, partner, arr):
                if exact:
                    arr = merge_exchange_exact(cell, partner, arr, block_size)
                else:
                    arr = merge_exchange_rebalancing(cell, partner, arr, sample_points)
                merged = True
        quiet = cell.global_int_sum(0 if merged else 1)
        if quiet == p:
            return arr


def cleanup_batcher(cell: Cell, elements: np.ndarray, *, exact: bool,
                    sample_points: int = DEFAULT_SAMPLE_POINTS,
                    block_size: int = DEFAULT_BLOCK) -> np.ndarray:
    """Run the full comparator schedule; sorts regardless of input placement.

    With equal counts (exact exchanges) the network alone sorts any
    placement. With unequal counts the rebalancing exchanges shift register
    sizes mid-network, which voids the comparator-network guarantee, so the
    schedule is followed by the linear quiescence sweep: the network leaves
    the data almost sorted and the sweep certifies or finishes cheaply.
    """
    arr = elements
    for round_ in batcher_schedule(cell.p):
        for lo, hi in round_:
            if cell.id == lo:
                partner = hi
            elif cell.id == hi:
                partner = lo
            else:
                continue
            if exact:
                arr = merge_exchange_exact(cell, partner, arr, block_size)
            else:
                arr = merge_exchange_rebalancing(cell, partner, arr, sample_points)
            break
    if not exact:
        arr = cleanup_linear(cell, arr, exact=False, sample_points=sample_points,
                             block_size=block_size)
    return arr
