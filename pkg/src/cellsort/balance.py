"""Count balancing: direct-routing pre-balance and ripple post-balance.

Pre-balance sends every excess element straight to its final destination:
after an all-gather of deltas (count minus target), each excess cell walks
the delta table sorted from biggest shortfall to largest excess, works out
which shortfalls survive the larger excesses, and ships its own surplus to
those cells. Shortfall cells just receive, from anyone, until whole.

Post-balance equalizes counts while preserving cross-cell order: each cell
nets the deltas on its left and right and moves elements through its array
ends, so surpluses ripple through intermediate cells toward deficits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fabric import TAG_POSTBAL, TAG_PREBAL, Cell, ProtocolError


@dataclass(frozen=True)
class DeltaTable:
    entries: tuple[tuple[int, int], ...]   # (cell, delta) ascending by delta, ties by cell
    by_cell: tuple[int, ...]               # delta indexed by cell id
    local_delta: int


def compute_deltas(cell: Cell, current_size: int, n_total: int) -> DeltaTable:
    """All-gather per-cell deltas; every cell gets the identical sorted table."""
    p = cell.p
    if n_total % p:
        raise ProtocolError(f"{n_total} elements not divisible across {p} cells")
    target = n_total // p
    local = current_size - target
    gathered = cell.broadcast_all_gather(local)
    if int(gathered.sum()) != 0:
        raise ProtocolError(f"deltas sum to {int(gathered.sum())}, not zero")
    entries = tuple(sorted(((c, int(d)) for c, d in enumerate(gathered)),
                           key=lambda e: (e[1], e[0])))
    return DeltaTable(entries=entries, by_cell=tuple(int(d) for d in gathered),
                      local_delta=local)


def pre_balance(cell: Cell, elements: np.ndarray, table: DeltaTable) -> np.ndarray:
    """Move excess elements directly to their final balance destination.

    Zero-delta cells pass straight through; shortfall cells receive from any
    sender until whole; excess cells consume the sorted table (largest excess
    against largest shortfall) until the top entry is their own, then send
    min(own surplus, bottom shortfall) tail elements to successive shortfall
    cells.
    """
    me = cell.id
    delta = table.local_delta
    if delta == 0:
        return elements

    if delta < 0:
        need = -delta
        parts = [elements]
        while need > 0:
            msg = cell.recv_any(TAG_PREBAL)
            if msg.payload.size > need:
                raise ProtocolError(
                    f"cell {me}: received {msg.payload.size} elements, "
                    f"shortfall only {need}")
            parts.append(msg.payload)
            need -= msg.payload.size
        return np.concatenate(parts)

    # Excess cell: simulate how greater excesses soak up the big shortfalls.
    entries = [[c, d] for c, d in table.entries]
    top = len(entries) - 1
    bottom = 0
    while entries[top][0] != me:
        entries[top][1] += entries[bottom][1]
        if entries[top][1] < 0:
            # excess above consumed entirely; shortfall remainder stays at bottom
            entries[bottom][1] = entries[top][1]
            top -= 1
        else:
            bottom += 1
            if entries[top][1] == 0:
                top -= 1

    out = elements
    remaining = delta
    while remaining > 0:
        dst, short = entries[bottom]
        size = min(remaining, -short)
        cell.big_send(dst, TAG_PREBAL, out[len(out) - size:])
        out = out[:len(out) - size]
        remaining -= size
        bottom += 1
    return out


def post_balance(cell: Cell, elements: np.ndarray, table: DeltaTable,
                 sorted_mode: bool) -> np.ndarray:
    """Ripple counts even: low end trades with the left, high end with the right.

    left_sum/right_sum are the net deltas of all lesser/greater cell ids. A
    negative side is a deficit (send that many elements from the matching
    end), a positive side a surplus (receive into that end). Even cells
    service the right side first, odd cells the left -- except that a send
    exceeding current holdings waits for the other side's receive, which
    always covers it (multi-hop ripples can route through nearly empty
    cells).
    """
    me, p = cell.id, cell.p
    if sorted_mode and elements.size and np.any(np.diff(elements.astype(np.int64)) < 0):
        raise ProtocolError(f"cell {me}: post-balance input not sorted")
    left = sum(table.by_cell[:me])
    right = sum(table.by_cell[me + 1:])

    sides = ("right", "left") if me % 2 == 0 else ("left", "right")
    amount = {"left": left, "right": right}
    first_amt = amount[sides[0]]
    if first_amt < 0 and -first_amt > elements.size:
        sides = (sides[1], sides[0])

    arr = elements
    for side in sides:
        amt = amount[side]
        if amt == 0:
            continue
        if side == "left":
            if amt < 0:
                if -amt > arr.size:
                    raise ProtocolError(
                        f"cell {me}: asked to send {-amt} left, holds {arr.size}")
                cell.big_send(me - 1, TAG_POSTBAL, arr[:-amt])
                arr = arr[-amt:]
            else:
                got = cell.recv_exact(me - 1, TAG_POSTBAL, amt)
                arr = np.concatenate([got, arr])
        else:
            if amt < 0:
                if -amt > arr.size:
                    raise ProtocolError(
                        f"cell {me}: asked to send {-amt} right, holds {arr.size}")
                cell.big_send(me + 1, TAG_POSTBAL, arr[arr.size + amt:])
                arr = arr[:arr.size + amt]
            else:
                got = cell.recv_exact(me + 1, TAG_POSTBAL, amt)
                arr = np.concatenate([arr, got])
    return arr
