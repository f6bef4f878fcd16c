"""Local linear-time radix sort: two stable counting-sort passes on bit fields.

The low-order pass runs first and the high-order pass preserves its order
(stability is what makes the composition correct). An optional width
detection shrinks the passes when the data uses fewer than 31 bits; the
full-width plan is always correct, detection only reduces work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    from numba import njit
except ImportError:          # pragma: no cover - degraded but correct
    njit = None

MAX_BITS = 31


@dataclass(frozen=True)
class RadixPlan:
    passes: tuple[tuple[int, int], ...]   # (shift, width_bits), low bits first
    total_bits: int


def detect_width(elements) -> int:
    """Position of the highest set bit over all elements (0 for all-zero)."""
    arr = np.asarray(elements)
    if arr.size == 0:
        return 0
    return int(arr.max()).bit_length()


def default_plan(width: int) -> RadixPlan:
    """Two near-equal passes covering width bits; zero width means no passes."""
    if width < 0 or width > MAX_BITS:
        raise ValueError(f"key width {width} outside [0, {MAX_BITS}]")
    if width == 0:
        return RadixPlan(passes=(), total_bits=0)
    low = (width + 1) // 2
    passes = [(0, low)]
    if width - low:
        passes.append((low, width - low))
    return RadixPlan(passes=tuple(passes), total_bits=width)


def _counting_pass_impl(src, dst, shift, width):
    # histogram -> exclusive prefix sum -> stable scatter into the swap buffer
    mask = (1 << width) - 1
    counts = np.zeros(mask + 1, dtype=np.int64)
    for i in range(src.size):
        counts[(src[i] >> shift) & mask] += 1
    total = 0
    for k in range(counts.size):
        c = counts[k]
        counts[k] = total
        total += c
    for i in range(src.size):
        d = (src[i] >> shift) & mask
        dst[counts[d]] = src[i]
        counts[d] += 1


if njit is not None:
    _counting_pass = njit(cache=True)(_counting_pass_impl)
else:
    def _counting_pass(src, dst, shift, width):   # pragma: no cover
        mask = (1 << width) - 1
        vals = src.tolist()
        counts = [0] * (mask + 1)
        for v in vals:
            counts[(v >> shift) & mask] += 1
        pos = [0] * (mask + 1)
        total = 0
        for k in range(mask + 1):
            pos[k] = total
            total += counts[k]
        out = dst.tolist()
        for v in vals:
            d = (v >> shift) & mask
            out[pos[d]] = v
            pos[d] += 1
        dst[:] = out


def counting_pass(elements: np.ndarray, shift: int, width: int) -> np.ndarray:
    """One stable counting-sort pass on the given bit field; returns a new array."""
    src = np.ascontiguousarray(elements, dtype=np.uint32)
    dst = np.empty_like(src)
    _counting_pass(src, dst, np.uint32(shift), np.uint32(width))
    return dst


def radix_sort(elements, plan: RadixPlan | None = None) -> np.ndarray:
    """Sort ascending via the plan's passes; returns a new array."""
    if plan is None:
        plan = default_plan(MAX_BITS)
    out = np.ascontiguousarray(elements, dtype=np.uint32)
    for shift, width in plan.passes:
        out = counting_pass(out, shift, width)
    return out.copy() if out is elements else out
