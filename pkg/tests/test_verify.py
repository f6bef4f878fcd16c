"""Verification checks: the oracle split passes, injected faults are caught,
and the order-independent fingerprint behaves."""

import numpy as np

from cellsort import keygen
from cellsort.verify import multiset_fingerprint, verify
from conftest import sort_split_oracle


def _oracle_state(key=1, n=4096, p=4, seed=1):
    dist = keygen.generate(keygen.KeySpec(key_id=key, n_total=n, p=p, seed=seed))
    return dist.per_cell, sort_split_oracle(dist.per_cell)


def test_oracle_output_accepted_for_every_key():
    for key in (1, 2, 3, 4, 5):
        initial, final = _oracle_state(key=key)
        report = verify(initial, final, 4096, 4)
        assert report.accepted
        assert report.max_cell_deviation == 0


def test_cross_cell_swap_breaks_global_order():
    initial, final = _oracle_state()
    final = [f.copy() for f in final]
    final[0][-1], final[3][0] = final[3][0], final[0][-1]
    report = verify(initial, final, 4096, 4)
    assert not report.globally_ordered
    assert not report.accepted


def test_dropped_element_breaks_multiset_and_balance():
    initial, final = _oracle_state()
    final = [f.copy() for f in final]
    final[2] = final[2][:-1]
    report = verify(initial, final, 4096, 4)
    assert not report.multiset_ok
    assert not report.balanced
    assert report.max_cell_deviation == 1


def test_replaced_value_caught_exact_and_fingerprint():
    initial, final = _oracle_state()
    final = [f.copy() for f in final]
    final[1][0] += 1
    assert not verify(initial, final, 4096, 4, exact=True).multiset_ok
    assert not verify(initial, final, 4096, 4, exact=False).multiset_ok


def test_unsorted_cell_caught():
    initial, final = _oracle_state()
    final = [f.copy() for f in final]
    final[1][0], final[1][1] = final[1][1], final[1][0]
    report = verify(initial, final, 4096, 4)
    if final[1][0] == final[1][1]:      # swap of equal values would be invisible
        return
    assert not report.locally_sorted[1]


def test_fingerprint_order_independent(rng):
    arr = rng.integers(0, 2**31, size=1000, dtype=np.uint32)
    split_a = [arr[:300], arr[300:]]
    split_b = [np.flip(arr[500:]).copy(), np.flip(arr[:500]).copy()]
    assert multiset_fingerprint(split_a) == multiset_fingerprint(split_b)
    assert multiset_fingerprint(split_a) != multiset_fingerprint([arr[:999]])
