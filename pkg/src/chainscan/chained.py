"""Chained single-pass scan across persistent workers.

The input is cut into fixed-length blocks (block_len elements from the warp
geometry). Worker b owns blocks b, b + B, b + 2B, ... (cyclic distribution),
scans each owned block locally, and resolves the cross-block dependency
through a slot array: the owner of block i busy-waits on slot i - 1 for the
running total of all earlier elements, folds its block on top, publishes the
new running total to slot i, and moves on. Each element is read once and
written once; there is no second pass over the data and no global barrier.

Slot discipline: one writer per slot, written at most once, ready flag moves
0 -> 1 exactly once. A (value, flag) pair is published and consumed as a
single transaction (a per-slot mutex around the paired access; the flag may
additionally be glimpsed lock-free while spinning because it is monotone).
Adjacent slots are padded 128 bytes apart so writers do not share cache
lines.

Deadlock freedom: block i only ever waits on slot i - 1. Under cyclic
ownership every worker is always resident and makes progress on its lowest
unfinished block, so the wait chain is acyclic and bounded. A debug spin
budget can be armed to turn an unexpected stall into a LivenessError instead
of a hang; production leaves it unarmed and spins indefinitely.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .reference import ScanProblem, ShapeError
from .warp import WarpGeometry, intra_block_global_scan, intra_block_local_scan

VALUE_PAD_BYTES = 128

BLOCK_SCAN_MODES = ("vectorized", "warp-model")

# how a yielding waiter cedes the core: a real (tiny) sleep, because
# sleep(0) lets the releasing thread immediately re-win the GIL and the
# producer then only runs once per switch interval
YIELD_SLEEP_SECONDS = 100e-6


class LivenessError(RuntimeError):
    """A debug spin budget ran out while waiting on a slot."""


class ProtocolViolation(RuntimeError):
    """The write-once slot discipline was broken."""


class _Aborted(Exception):
    """Internal: another worker failed, stop quietly."""


@dataclass(frozen=True)
class SpinPolicy:
    """Busy-wait flavor: pure spin, or yield to the OS after a threshold.

    kind "spin" probes the flag in a tight loop, which is the faithful
    dedicated-core behavior but starves oversubscribed CPUs; the default
    "spin-yield" spins yield_threshold probes and then yields to the
    scheduler on every further probe. Either way the result is identical,
    only waiting behavior differs.
    """

    kind: str = "spin-yield"
    yield_threshold: int = 1024

    def __post_init__(self):
        if self.kind not in ("spin", "spin-yield"):
            raise ValueError(f"unknown spin policy {self.kind!r}")
        if self.yield_threshold < 1:
            raise ValueError("yield threshold must be >= 1")

    @classmethod
    def spin_then_yield(cls, threshold: int = 1024) -> "SpinPolicy":
        return cls(kind="spin-yield", yield_threshold=threshold)


class CommSlots:
    """Single-writer, write-once (value, ready) slot array.

    Values and flags live in separate buffers whose rows are VALUE_PAD_BYTES
    apart, so neighboring slots never share a cache line. store/read take the
    slot's mutex so the pair is always observed atomically: a reader sees
    either (anything, 0) before publication or (published value, 1) after,
    never a mix. Flags are monotone 0 -> 1 and never reset.
    """

    def __init__(self, count: int, dtype, identity, protocol_checks: bool = True):
        dtype = np.dtype(dtype)
        vstride = max(1, VALUE_PAD_BYTES // dtype.itemsize)
        fstride = VALUE_PAD_BYTES // 8
        self.count = count
        self.identity = identity
        self._values = np.full((count, vstride), identity, dtype=dtype)
        self._flags = np.zeros((count, fstride), dtype=np.int64)
        self._locks = [threading.Lock() for _ in range(count)]
        self._protocol_checks = protocol_checks

    @property
    def values(self) -> np.ndarray:
        return self._values[:, 0]

    @property
    def flags(self) -> np.ndarray:
        return self._flags[:, 0]

    def store(self, i: int, value) -> None:
        """Publish slot i's value and set its flag, as one transaction."""
        with self._locks[i]:
            if self._protocol_checks and self._flags[i, 0]:
                raise ProtocolViolation(f"slot {i} written twice")
            self._values[i, 0] = value
            self._flags[i, 0] = 1

    def read(self, i: int):
        """Read slot i's (value, flag) pair as one transaction."""
        with self._locks[i]:
            return self._values[i, 0], int(self._flags[i, 0])

    def peek_ready(self, i: int) -> bool:
        """Lock-free flag glimpse; a stale 0 just means another probe."""
        return bool(self._flags[i, 0])

    def wait(self, i: int, spin: Optional[SpinPolicy] = None,
             budget: Optional[int] = None, abort=None):
        """Busy-wait until slot i is published, then return its value."""
        spin = spin or SpinPolicy()
        flags = self._flags
        yield_after = spin.yield_threshold if spin.kind == "spin-yield" else None
        probes = 0
        while not flags[i, 0]:
            probes += 1
            if budget is not None and probes > budget:
                raise LivenessError(
                    f"spin budget {budget} exhausted waiting on slot {i} "
                    f"(policy {spin.kind})"
                )
            if abort is not None and abort.is_set():
                raise _Aborted()
            if yield_after is not None and probes >= yield_after:
                time.sleep(YIELD_SLEEP_SECONDS)
        value, _ = self.read(i)
        return value


def inter_block_comm(slots: CommSlots, block_id: int, local_reduction, op,
                     spin: Optional[SpinPolicy] = None,
                     budget: Optional[int] = None, abort=None,
                     corrupt: bool = False):
    """Resolve block block_id's left prefix; publish its running total.

    Block 0 publishes its own reduction and returns the identity. Every
    other block waits on slot block_id - 1 (the running total of all earlier
    blocks), publishes left ⊕ reduction, and returns left. Exactly one wait
    and one store per block. corrupt publishes the identity instead of the
    true total (test-only fault injection).
    """
    if block_id == 0:
        left = op.identity
        total = local_reduction
    else:
        left = slots.wait(block_id - 1, spin=spin, budget=budget, abort=abort)
        total = op.apply(left, local_reduction)
    slots.store(block_id, op.identity if corrupt else total)
    return left


def default_worker_count() -> int:
    return os.cpu_count() or 1


def default_geometry(dtype=None) -> WarpGeometry:
    """Desk-scale default: 32 warps of 32 lanes, 8 registers (8192/block)."""
    return WarpGeometry(w=32, k=8, warps_per_block=32)


def block_count(n: int, geometry: WarpGeometry) -> int:
    return -(-n // geometry.block_len)


def partial_tail(x: np.ndarray, geometry: WarpGeometry, identity):
    """Pad a short final block to a full tile with the identity.

    Returns (tile, logical_len); a full block is passed through unpadded.
    Identity padding keeps every ⊕ over the pad a no-op, so the scan of the
    padded tile agrees with the scan of the real elements on [0, logical).
    """
    n = x.size
    if n == geometry.block_len:
        return x, n
    if n > geometry.block_len:
        raise ShapeError(f"block has {n} elements, geometry allows {geometry.block_len}")
    tile = np.full(geometry.block_len, identity, dtype=x.dtype)
    tile[:n] = x
    return tile, n


@dataclass
class ChainConfig:
    """Knobs for chained_scan.

    b: worker count (capped at the block count); geometry: block shape, or
    None for the desk default; block_scan_mode: "vectorized" scans each
    block with the operator's fused accumulate, "warp-model" runs the full
    virtual-warp register machinery (identical results on integer types).
    spin_budget arms the debug liveness check. corrupt_slot and on_block are
    test hooks: publish a wrong total for one block, and observe/delay
    (worker_id, block_id) scheduling.
    """

    b: int = field(default_factory=default_worker_count)
    geometry: Optional[WarpGeometry] = None
    spin: SpinPolicy = field(default_factory=SpinPolicy)
    block_scan_mode: str = "vectorized"
    spin_budget: Optional[int] = None
    protocol_checks: bool = True
    corrupt_slot: Optional[int] = None
    on_block: Optional[Callable[[int, int], None]] = None

    def __post_init__(self):
        if self.b < 1:
            raise ValueError(f"worker count must be >= 1, got {self.b}")
        if self.block_scan_mode not in BLOCK_SCAN_MODES:
            raise ValueError(
                f"unknown block scan mode {self.block_scan_mode!r}; "
                f"choose from {BLOCK_SCAN_MODES}"
            )


def _scan_block_vectorized(x, out, op, lo, hi, i, slots, config, abort):
    # scan straight into the output slice, then fold the left prefix in
    # place: the second pass touches only this block, which is cache-sized,
    # so the block costs about one read and one write of main memory
    seg = out[lo:hi]
    op.accumulate(x[lo:hi], out=seg)
    reduction = seg[-1]
    left = inter_block_comm(
        slots, i, reduction, op, spin=config.spin, budget=config.spin_budget,
        abort=abort, corrupt=config.corrupt_slot == i,
    )
    if i:
        op.combine(left, seg, out=seg)


def _scan_block_warp_model(x, out, op, lo, hi, i, slots, config, abort,
                           geometry, buf):
    tile, logical = partial_tail(x[lo:hi], geometry, op.identity)
    states, reduction = intra_block_local_scan(tile, geometry, op)
    left = inter_block_comm(
        slots, i, reduction, op, spin=config.spin, budget=config.spin_budget,
        abort=abort, corrupt=config.corrupt_slot == i,
    )
    full = intra_block_global_scan(states, left, op, out=buf)
    out[lo:hi] = full[:logical]


def _worker(wid, b, x, out, op, geometry, m, slots, config, abort, failures):
    length = geometry.block_len
    n = x.size
    warp_mode = config.block_scan_mode == "warp-model"
    buf = np.empty(length, dtype=op.dtype) if warp_mode else None
    try:
        for i in range(wid, m, b):
            if abort.is_set():
                return
            if config.on_block is not None:
                config.on_block(wid, i)
            lo = i * length
            hi = min(n, lo + length)
            if warp_mode:
                _scan_block_warp_model(x, out, op, lo, hi, i, slots, config,
                                       abort, geometry, buf)
            else:
                _scan_block_vectorized(x, out, op, lo, hi, i, slots, config,
                                       abort)
    except _Aborted:
        pass
    except BaseException as exc:
        failures.append(exc)
        abort.set()


def _scan_single(x, out, op, geometry, m, slots, config):
    # B == 1 degenerates to a block-by-block left fold: the carry is
    # prepended to each block before one fused accumulate, so the fold
    # association (and hence float rounding) is identical to the sequential
    # oracle, bit for bit. Slot publishing and hooks still run.
    length = geometry.block_len
    n = x.size
    buf = np.empty(length + 1, dtype=op.dtype)
    carry = None
    for i in range(m):
        if config.on_block is not None:
            config.on_block(0, i)
        lo = i * length
        hi = min(n, lo + length)
        if carry is None:
            op.accumulate(x[lo:hi], out=out[lo:hi])
        else:
            seg = buf[: hi - lo + 1]
            seg[0] = carry
            seg[1:] = x[lo:hi]
            op.accumulate(seg, out=seg)
            out[lo:hi] = seg[1:]
        carry = out[hi - 1]
        slots.store(i, op.identity if config.corrupt_slot == i else carry)


def chained_scan(problem: ScanProblem, config: Optional[ChainConfig] = None) -> np.ndarray:
    """Scan problem.x with B persistent workers in a single pass.

    Safe in place (problem.out may alias problem.x): block i's input is
    consumed by its own local scan before anything writes that slice, and
    no worker ever touches another block's input. Integer results are
    identical for every B; float results for B == 1 match the sequential
    fold exactly, and for B > 1 differ only by the blockwise refold's
    rounding.
    """
    if config is None:
        config = ChainConfig()
    x, op = problem.x, problem.op
    out = problem.resolve_out()
    n = x.size
    if n == 0:
        return out
    geometry = config.geometry or default_geometry(op.dtype)
    m = block_count(n, geometry)
    slots = CommSlots(m, op.dtype, op.identity,
                      protocol_checks=config.protocol_checks)
    b = max(1, min(config.b, m))
    if b == 1:
        _scan_single(x, out, op, geometry, m, slots, config)
        return out
    abort = threading.Event()
    failures: List[BaseException] = []
    workers = [
        threading.Thread(
            target=_worker,
            args=(wid, b, x, out, op, geometry, m, slots, config, abort, failures),
            daemon=True,
        )
        for wid in range(b)
    ]
    for t in workers:
        t.start()
    for t in workers:
        t.join()
    if failures:
        raise failures[0]
    return out
