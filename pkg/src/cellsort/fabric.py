"""Simulated distributed-memory machine of P cells.

Cells run per-cell programs and interact only through messages. Two
schedulers with identical observable results:

* ``deterministic`` -- all cells share one OS thread; each cell is a
  greenlet that runs until it blocks on a receive, and a round-robin
  scheduler resumes cells whose wait is satisfiable. Two runs with the
  same inputs produce byte-identical message traces, and a global stall
  is reported as a deadlock fault with per-cell diagnostics.
* ``concurrent`` -- one OS thread per cell with condition-variable
  channels. Protocol errors may hang instead of producing a deadlock
  diagnostic (a fault on any cell aborts the others, but a pure
  lost-message stall is only caught by the join timeout).

Collectives (all-gather, global sum, hypercube vector sum) are built on
the point-to-point layer with reserved tags, so they show up in the
communication statistics like any other traffic.
"""

from __future__ import annotations

import contextlib
import hashlib
import random
import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from greenlet import greenlet

# Per-phase tags so interleaved phases cannot cross-deliver.
TAG_GATHER = 0      # all-gather collective
TAG_HCUBE = 1       # hypercube vector sum rounds
TAG_PREBAL = 2      # pre-balance element routing
TAG_DIST = 3        # bucket distribution
TAG_POSTBAL = 4     # ripple post-balance
TAG_BOUNDARY = 5    # cleanup min/max boundary probes
TAG_NEGOTIATE = 6   # merge-exchange split negotiation
TAG_SWAP = 7        # merge-exchange element traffic
TAG_OVERLAP = 8     # overlap measurement (neighbour maxima)

_TAG_NAMES = {
    TAG_GATHER: "gather", TAG_HCUBE: "hcube", TAG_PREBAL: "prebal",
    TAG_DIST: "dist", TAG_POSTBAL: "postbal", TAG_BOUNDARY: "boundary",
    TAG_NEGOTIATE: "negotiate", TAG_SWAP: "swap", TAG_OVERLAP: "overlap",
}


class FabricError(RuntimeError):
    """Base class for simulated-machine faults."""


class ProtocolError(FabricError):
    """A cell violated a messaging or phase protocol."""


class DeadlockError(FabricError):
    """All unfinished cells are blocked on unsatisfiable receives."""


class _Aborted(FabricError):
    """Internal: another cell faulted; unwind this one quietly."""


@dataclass(frozen=True)
class Message:
    src: int
    dst: int
    tag: int
    payload: np.ndarray

    @property
    def is_null(self) -> bool:
        return self.payload.size == 0


@dataclass
class CommStats:
    """Per-cell send counters plus per-invocation collective round counts."""

    messages_sent: list[int]
    bytes_sent: list[int]
    collective_rounds: list[int] = field(default_factory=list)

    @classmethod
    def for_cells(cls, p: int) -> "CommStats":
        return cls(messages_sent=[0] * p, bytes_sent=[0] * p)

    def totals(self) -> tuple[int, int, int]:
        return (sum(self.messages_sent), sum(self.bytes_sent),
                sum(self.collective_rounds))


@dataclass(frozen=True)
class FabricConfig:
    p: int
    chunk_elements: int = 64_000
    receive_tolerance: int = 128
    scheduler: str = "deterministic"
    shuffle_seed: int | None = None   # randomise recv_any source choice (deterministic mode)
    trace: bool = False
    trace_payloads: bool = False

    def __post_init__(self):
        if self.p < 1 or self.p > 1024 or self.p & (self.p - 1):
            raise ValueError(f"cell count must be a power of two in [1, 1024], got {self.p}")
        if self.receive_tolerance < 0:
            raise ValueError("receive_tolerance must be non-negative")
        if self.chunk_elements <= self.receive_tolerance:
            raise ValueError("chunk_elements must exceed receive_tolerance")
        if self.scheduler not in ("deterministic", "concurrent"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")


def chunk_lengths(n: int, chunk: int, tolerance: int) -> list[int]:
    """Split a payload of n elements into chunk sizes for a large send.

    All chunks are ``chunk`` long except the final one. A natural tail of
    ``tolerance`` or fewer elements is merged into the preceding chunk, so
    the final chunk of any multi-chunk message always exceeds the receive
    tolerance (a payload of up to chunk+tolerance travels as one message).
    """
    if n < 0:
        raise ValueError("negative payload length")
    if n == 0:
        return []
    if n <= chunk + tolerance:
        return [n]
    full, rem = divmod(n, chunk)
    lengths = [chunk] * full
    if rem == 0:
        pass
    elif rem <= tolerance:
        lengths[-1] += rem
    else:
        lengths.append(rem)
    return lengths


def _as_payload(payload) -> np.ndarray:
    arr = np.asarray(payload)
    if arr.dtype == object:
        raise ProtocolError("payloads must be numeric arrays")
    # Copy so the sender cannot mutate in-flight data.
    return np.array(arr, copy=True)


class Cell:
    """Per-cell handle exposing the messaging and collective API."""

    __slots__ = ("fabric", "id", "p", "_waiting", "_cond")

    def __init__(self, fabric: "Fabric", cell_id: int):
        self.fabric = fabric
        self.id = cell_id
        self.p = fabric.config.p
        self._waiting = None          # (tag, src|None) while blocked (deterministic)
        self._cond = None             # threading.Condition (concurrent)

    # ------------------------------------------------------------------ #
    # point to point

    def send(self, dst: int, tag: int, payload) -> None:
        self.fabric._post(self.id, dst, tag, _as_payload(payload))

    def recv_any(self, tag: int) -> Message:
        """Next pending message for tag, any sender; blocks until one exists."""
        return self._recv(tag, None)

    def recv_from(self, src: int, tag: int) -> np.ndarray:
        """Payload of the next message from a specific sender (per-pair FIFO)."""
        return self._recv(tag, src).payload

    def big_send(self, dst: int, tag: int, payload) -> None:
        """Send a payload in chunks; a zero-length payload goes as one null message."""
        arr = np.asarray(payload)
        cfg = self.fabric.config
        lengths = chunk_lengths(arr.size, cfg.chunk_elements, cfg.receive_tolerance)
        if not lengths:
            self.send(dst, tag, arr[:0])
            return
        off = 0
        for ln in lengths:
            self.send(dst, tag, arr[off:off + ln])
            off += ln

    def recv_exact(self, src: int, tag: int, count: int) -> np.ndarray:
        """Receive exactly count elements from src, draining chunked sends."""
        if count == 0:
            return np.empty(0, dtype=np.uint32)
        parts = []
        got = 0
        while got < count:
            part = self.recv_from(src, tag)
            got += part.size
            parts.append(part)
        if got != count:
            raise ProtocolError(
                f"cell {self.id}: expected {count} elements from {src}, got {got}")
        return np.concatenate(parts)

    # ------------------------------------------------------------------ #
    # collectives (all cells must call together)

    def broadcast_all_gather(self, value: int) -> np.ndarray:
        """Every cell contributes one integer; all receive the full vector."""
        buf = np.array([value], dtype=np.int64)
        for dst in range(self.p):
            self.send(dst, TAG_GATHER, buf)
        out = np.empty(self.p, dtype=np.int64)
        for src in range(self.p):
            out[src] = self.recv_from(src, TAG_GATHER)[0]
        if self.id == 0:
            self.fabric.stats.collective_rounds.append(1)
        return out

    def global_int_sum(self, value: int) -> int:
        """Sum of one integer per cell, available on every cell."""
        return int(self.hypercube_vector_sum(np.array([value], dtype=np.int64))[0])

    def hypercube_vector_sum(self, vec) -> np.ndarray:
        """Elementwise sum of one vector per cell in log2(P) exchange rounds.

        Round k pairs cell i with cell i XOR 2^k; partners swap their full
        partial-sum vectors and add.
        """
        acc = np.array(vec, dtype=np.int64, copy=True)
        rounds = 0
        k = 1
        while k < self.p:
            partner = self.id ^ k
            self.send(partner, TAG_HCUBE, acc)
            other = self.recv_from(partner, TAG_HCUBE)
            if other.size != acc.size:
                raise ProtocolError(
                    f"cell {self.id}: vector length mismatch with {partner} "
                    f"({other.size} != {acc.size})")
            acc += other
            rounds += 1
            k <<= 1
        if self.id == 0:
            self.fabric.stats.collective_rounds.append(rounds)
        return acc

    # ------------------------------------------------------------------ #
    # blocking internals

    def _recv(self, tag: int, src: int | None) -> Message:
        fab = self.fabric
        lock = self._cond if self._cond is not None else contextlib.nullcontext()
        with lock:
            while True:
                msg = fab._try_pop(self.id, tag, src)
                if msg is not None:
                    return msg
                if fab._fault is not None:
                    raise _Aborted("aborted by fault on another cell")
                if self._cond is not None:
                    self._cond.wait()
                else:
                    self._waiting = (tag, src)
                    fab._sched.switch()
                    self._waiting = None


class Fabric:
    """The machine: mailboxes, schedulers and communication accounting."""

    def __init__(self, config: FabricConfig):
        self.config = config
        p = config.p
        self.stats = CommStats.for_cells(p)
        self.trace: list[tuple] = []
        self._mailboxes = [dict() for _ in range(p)]   # dst -> {tag: deque[Message]}
        self._shuffle = (random.Random(config.shuffle_seed)
                         if config.shuffle_seed is not None else None)
        self._cells: list[Cell] = []
        self._sched = None
        self._fault = None
        self._seq = 0

    # ------------------------------------------------------------------ #
    # delivery

    def _post(self, src: int, dst: int, tag: int, payload: np.ndarray) -> None:
        if not 0 <= dst < self.config.p:
            raise ProtocolError(f"cell {src}: send to invalid cell id {dst}")
        msg = Message(src, dst, tag, payload)
        cell = self._cells[dst]
        lock = cell._cond if cell._cond is not None else contextlib.nullcontext()
        with lock:
            box = self._mailboxes[dst]
            if tag not in box:
                box[tag] = deque()
            box[tag].append(msg)
            self.stats.messages_sent[src] += 1
            self.stats.bytes_sent[src] += payload.nbytes
            if self.config.trace:
                digest = hashlib.blake2b(payload.tobytes(), digest_size=8).hexdigest()
                entry = (self._seq, src, dst, tag, payload.size, digest)
                if self.config.trace_payloads:
                    entry = entry + (payload.copy(),)
                self.trace.append(entry)
                self._seq += 1
            if cell._cond is not None:
                cell._cond.notify_all()

    def _try_pop(self, dst: int, tag: int, src: int | None) -> Message | None:
        q = self._mailboxes[dst].get(tag)
        if not q:
            return None
        if src is not None:
            for i, msg in enumerate(q):
                if msg.src == src:
                    del q[i]
                    return msg
            return None
        if self._shuffle is not None:
            seen = []
            srcs = set()
            for msg in q:
                if msg.src not in srcs:
                    srcs.add(msg.src)
                    seen.append(msg.src)
            pick = self._shuffle.choice(seen)
            for i, msg in enumerate(q):
                if msg.src == pick:
                    del q[i]
                    return msg
        return q.popleft()

    def _satisfiable(self, dst: int, tag: int, src: int | None) -> bool:
        q = self._mailboxes[dst].get(tag)
        if not q:
            return False
        if src is None:
            return True
        return any(m.src == src for m in q)

    # ------------------------------------------------------------------ #
    # execution

    def run(self, program, args: list[tuple] | None = None) -> list:
        """Run program(cell, *args[i]) on every cell; return per-cell results."""
        p = self.config.p
        if args is None:
            args = [() for _ in range(p)]
        if len(args) != p:
            raise ValueError("need one argument tuple per cell")
        self._fault = None
        self._cells = [Cell(self, i) for i in range(p)]
        if self.config.scheduler == "deterministic":
            return self._run_deterministic(program, args)
        return self._run_concurrent(program, args)

    def _run_deterministic(self, program, args) -> list:
        p = self.config.p
        cells = self._cells
        results = [None] * p
        finished = [False] * p
        self._sched = greenlet.getcurrent()

        def body(i):
            return program(cells[i], *args[i])

        glets = [greenlet(body) for _ in range(p)]
        started = [False] * p
        try:
            while not all(finished):
                progressed = False
                for i in range(p):
                    if finished[i]:
                        continue
                    cell = cells[i]
                    if cell._waiting is not None and not self._satisfiable(i, *cell._waiting):
                        continue
                    try:
                        if started[i]:
                            ret = glets[i].switch()
                        else:
                            started[i] = True
                            ret = glets[i].switch(i)
                    except FabricError:
                        raise
                    except Exception as exc:
                        raise FabricError(f"cell {i} fault: {exc}") from exc
                    progressed = True
                    if glets[i].dead:
                        finished[i] = True
                        results[i] = ret
                if not progressed:
                    raise DeadlockError(self._deadlock_diagnostic(finished))
        finally:
            for i, g in enumerate(glets):
                if started[i] and not g.dead:
                    g.throw()
        return results

    def _deadlock_diagnostic(self, finished) -> str:
        waits = []
        for i, cell in enumerate(self._cells):
            if finished[i]:
                continue
            tag, src = cell._waiting if cell._waiting else (None, None)
            name = _TAG_NAMES.get(tag, str(tag))
            who = "any" if src is None else f"cell {src}"
            waits.append(f"cell {i} waiting on tag={name} from {who}")
        return "deadlock: " + "; ".join(waits)

    def _run_concurrent(self, program, args) -> list:
        p = self.config.p
        cells = self._cells
        for cell in cells:
            cell._cond = threading.Condition()
        results = [None] * p

        def body(i):
            try:
                results[i] = program(cells[i], *args[i])
            except _Aborted:
                pass
            except BaseException as exc:
                if self._fault is None:
                    self._fault = (i, exc)
                for c in cells:
                    with c._cond:
                        c._cond.notify_all()

        threads = [threading.Thread(target=body, args=(i,), daemon=True) for i in range(p)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=600.0)
            if t.is_alive():
                raise DeadlockError("concurrent scheduler stalled (join timeout)")
        if self._fault is not None:
            i, exc = self._fault
            if isinstance(exc, FabricError):
                raise exc
            raise FabricError(f"cell {i} fault: {exc}") from exc
        return results
