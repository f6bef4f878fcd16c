"""Seeded generators for the five benchmark key distributions.

Each key stresses a different phase of the sort:

1. uniform values, equal counts -- the friendly baseline.
2. uniform values, heavily skewed counts (share ~ 0.88^i, min 1) -- stresses
   the pre-balance.
3. one constant value (2^30), equal counts -- worst case for comparison
   sorts and for bucket resolution (everything lands in a single bucket).
4. half uniform, half drawn from 8 narrow clusters; counts alternate +-10%
   around the even share -- a mild general test.
5. a quarter of the data packed into [0, 2^17) -- far narrower than one
   bucket, so bucketing cannot split it and the low cells end up with
   heavily overlapping ranges -- and the rest uniform on [2^24, 2^31);
   equal counts. Built to force the adaptive cleanup onto its comparator
   schedule.

Generation is a pure function of the KeySpec: every cell gets its own PCG64
stream seeded from (seed, key, cell), so output is reproducible and
independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_VALUE = 2**31 - 1
GENERATOR_VERSION = f"pcg64:numpy-{np.__version__}"

_KEY2_RATIO = 0.88          # per-cell share decay; max/min count ratio > 5 from p=16 up
_KEY4_CLUSTERS = 8
_KEY4_WIDTH = 2**20
_KEY4_SKEW = 0.10
_KEY5_WINDOW = 2**17        # narrower than one bucket at 8192 (and 4096) buckets
_KEY5_BULK_LOW = 2**24      # bulk stays above the window: exactly 25% below 2^24


@dataclass(frozen=True)
class KeySpec:
    key_id: int
    n_total: int
    p: int
    seed: int = 0


@dataclass
class InitialDistribution:
    spec: KeySpec
    per_cell: list[np.ndarray]

    @property
    def counts(self) -> list[int]:
        return [len(a) for a in self.per_cell]


def apportion(total: int, weights) -> np.ndarray:
    """Split total into integer shares proportional to weights (largest remainder)."""
    w = np.asarray(weights, dtype=np.float64)
    if total < 0 or w.size == 0 or np.any(w < 0) or w.sum() == 0:
        raise ValueError("bad apportion arguments")
    exact = total * w / w.sum()
    shares = np.floor(exact).astype(np.int64)
    short = total - int(shares.sum())
    if short:
        # ties broken toward lower index for determinism
        order = np.lexsort((np.arange(w.size), -(exact - shares)))
        shares[order[:short]] += 1
    return shares


def _cell_rng(spec: KeySpec, cell: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed & 0xFFFFFFFFFFFFFFFF, spec.key_id, cell])


def _equal_counts(n: int, p: int) -> np.ndarray:
    base, rem = divmod(n, p)
    return np.array([base + (1 if i < rem else 0) for i in range(p)], dtype=np.int64)


def cell_counts(spec: KeySpec) -> np.ndarray:
    """Per-cell element counts mandated by the key's balance column."""
    n, p = spec.n_total, spec.p
    if spec.key_id in (1, 3, 5):
        return _equal_counts(n, p)
    if spec.key_id == 2:
        counts = apportion(n, [_KEY2_RATIO**i for i in range(p)])
        # every cell must start with at least one element
        for i in range(p):
            if counts[i] == 0:
                counts[int(np.argmax(counts))] -= 1
                counts[i] = 1
        return counts
    if spec.key_id == 4:
        return apportion(n, [1.0 + (_KEY4_SKEW if i % 2 == 0 else -_KEY4_SKEW)
                             for i in range(p)])
    raise ValueError(f"unknown key id {spec.key_id}")


def generate(spec: KeySpec) -> InitialDistribution:
    """Deterministically build the per-cell initial arrays for a key."""
    if spec.key_id not in (1, 2, 3, 4, 5):
        raise ValueError(f"unknown key id {spec.key_id}")
    if spec.n_total < spec.p or spec.p < 1:
        raise ValueError("need at least one element per cell")

    counts = cell_counts(spec)
    per_cell: list[np.ndarray] = []

    if spec.key_id == 4:
        shared = np.random.default_rng([spec.seed & 0xFFFFFFFFFFFFFFFF, spec.key_id])
        centers = shared.integers(0, 2**31 - _KEY4_WIDTH, size=_KEY4_CLUSTERS,
                                  dtype=np.int64)
        clustered_per_cell = apportion(spec.n_total // 2, counts)
    elif spec.key_id == 5:
        clustered_per_cell = apportion(spec.n_total // 4, counts)

    for cell in range(spec.p):
        m = int(counts[cell])
        rng = _cell_rng(spec, cell)
        if spec.key_id in (1, 2):
            arr = rng.integers(0, 2**31, size=m, dtype=np.uint32)
        elif spec.key_id == 3:
            arr = np.full(m, 2**30, dtype=np.uint32)
        elif spec.key_id == 4:
            k = int(clustered_per_cell[cell])
            which = rng.integers(0, _KEY4_CLUSTERS, size=k)
            clustered = (centers[which]
                         + rng.integers(0, _KEY4_WIDTH, size=k)).astype(np.uint32)
            bulk = rng.integers(0, 2**31, size=m - k, dtype=np.uint32)
            arr = rng.permutation(np.concatenate([clustered, bulk]))
        else:  # key 5
            k = int(clustered_per_cell[cell])
            clustered = rng.integers(0, _KEY5_WINDOW, size=k, dtype=np.uint32)
            bulk = rng.integers(_KEY5_BULK_LOW, 2**31, size=m - k, dtype=np.uint32)
            arr = rng.permutation(np.concatenate([clustered, bulk]))
        per_cell.append(np.ascontiguousarray(arr, dtype=np.uint32))

    dist = InitialDistribution(spec=spec, per_cell=per_cell)
    assert sum(dist.counts) == spec.n_total
    return dist


def write_cells(dist: InitialDistribution, directory) -> list[Path]:
    """Dump one little-endian u32 file per cell, named cell<id>.u32."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, arr in enumerate(dist.per_cell):
        path = directory / f"cell{i}.u32"
        arr.astype("<u4").tofile(path)
        paths.append(path)
    return paths
