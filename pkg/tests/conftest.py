import numpy as np
import pytest

from cellsort.fabric import Fabric, FabricConfig


def run_cells(p, program, args=None, **fabric_kwargs):
    """Run a per-cell program on a fresh fabric; returns (fabric, results)."""
    fab = Fabric(FabricConfig(p=p, **fabric_kwargs))
    return fab, fab.run(program, args)


def sort_split_oracle(arrays, counts=None):
    """Ground truth: global sort, then split into the given per-cell counts."""
    merged = np.sort(np.concatenate([np.asarray(a, dtype=np.uint32) for a in arrays]))
    if counts is None:
        p = len(arrays)
        assert merged.size % p == 0
        counts = [merged.size // p] * p
    out = []
    off = 0
    for c in counts:
        out.append(merged[off:off + c])
        off += c
    assert off == merged.size
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(0xC311)
