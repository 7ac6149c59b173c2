"""Scheduler model for chained blocks under bounded residency.

Answers "when can a chained scan deadlock?" without touching threads. M
blocks depend linearly: block i cannot finish before block i - 1 has (its
left prefix arrives through slot i - 1). The machine offers R residency
slots; a resident block occupies its slot until it finishes (no
preemption).

Two launch policies:

  one-to-one   every block is its own schedulable unit. The scheduler admits
               blocks in a seeded uniform-random order as slots free up. If
               all R slots fill with blocks whose predecessors are neither
               finished nor resident, nothing can ever finish: deadlock. The
               simulator detects exactly that state.

  cyclic       B persistent workers (B <= R required) own blocks
               b, b + B, ... Every worker is admitted once and stays
               resident, so the owner of the lowest unfinished block is
               always running and the chain always advances: no deadlock for
               any (M, seed).

A run produces a trace of `step=<n> event=<admit|finish|block> block=<id>`
lines; deadlocked runs carry the resident blocked set, and a claimed
deadlock can be independently re-checked from the seed (verify_deadlock).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

POLICIES = ("one-to-one", "cyclic")

COMPLETED = "completed"
DEADLOCK = "deadlock"


class InconclusiveError(RuntimeError):
    """The step budget ran out before completion or deadlock (model bug)."""


@dataclass(frozen=True)
class SimConfig:
    """M blocks, R residency slots, a policy, and the admission seed."""

    m: int
    r: int
    policy: str = "one-to-one"
    b: Optional[int] = None
    seed: int = 0
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"block count must be >= 1, got {self.m}")
        if self.r < 1:
            raise ValueError(f"residency must be >= 1, got {self.r}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.policy == "cyclic":
            if self.b is None or self.b < 1:
                raise ValueError("cyclic policy needs a worker count b >= 1")
            if self.b > self.r:
                raise ValueError(
                    f"cyclic needs b <= r ({self.b} workers, {self.r} slots): "
                    "a non-resident persistent worker would never run"
                )

    @property
    def step_budget(self) -> int:
        return self.max_steps if self.max_steps is not None else 4 * self.m + 16


@dataclass
class SimOutcome:
    status: str
    steps: int
    blocked_set: Tuple[int, ...]
    trace: List[Tuple[int, str, int]] = field(repr=False)
    seed: int = 0

    @property
    def deadlocked(self) -> bool:
        return self.status == DEADLOCK


def format_trace(outcome: SimOutcome) -> str:
    return "\n".join(
        f"step={s} event={e} block={b}" for s, e, b in outcome.trace
    )


def admission_order(config: SimConfig) -> List[int]:
    """Seeded uniform-random order in which units ask for residency."""
    count = config.m if config.policy == "one-to-one" else config.b
    rng = np.random.default_rng(config.seed)
    return [int(v) for v in rng.permutation(count)]


def run_schedule(config: SimConfig) -> SimOutcome:
    """Run one seeded schedule to completion or deadlock."""
    if config.policy == "cyclic":
        return _run_cyclic(config)
    return _run_one_to_one(config)


def _run_one_to_one(config: SimConfig) -> SimOutcome:
    order = admission_order(config)
    trace: List[Tuple[int, str, int]] = []
    resident = set()
    next_admit = 0
    frontier = 0  # lowest unfinished block; only it can finish
    step = 0
    while frontier < config.m:
        step += 1
        if step > config.step_budget:
            raise InconclusiveError(f"no outcome within {config.step_budget} steps")
        while len(resident) < config.r and next_admit < config.m:
            blk = order[next_admit]
            next_admit += 1
            resident.add(blk)
            trace.append((step, "admit", blk))
        if frontier in resident:
            resident.remove(frontier)
            trace.append((step, "finish", frontier))
            frontier += 1
            continue
        # slots are full, every resident waits on an unfinished predecessor,
        # and no slot will ever free: stuck
        blocked = tuple(sorted(resident))
        for blk in blocked:
            trace.append((step, "block", blk))
        return SimOutcome(DEADLOCK, step, blocked, trace, config.seed)
    return SimOutcome(COMPLETED, step, (), trace, config.seed)


def _run_cyclic(config: SimConfig) -> SimOutcome:
    b = config.b
    trace: List[Tuple[int, str, int]] = []
    # each persistent worker is admitted once, identified by its first block
    for w in admission_order(config):
        trace.append((1, "admit", w))
    step = 1
    for frontier in range(config.m):
        step += 1
        if step > config.step_budget + 1:
            raise InconclusiveError(f"no outcome within {config.step_budget} steps")
        trace.append((step, "finish", frontier))
    return SimOutcome(COMPLETED, step, (), trace, config.seed)


def verify_deadlock(config: SimConfig, outcome: SimOutcome) -> bool:
    """Re-check a claimed deadlock against the seed, independent of the run.

    Recomputes the admission order, replays admit/finish events from the
    trace, and confirms the final state is genuinely stuck: residency full,
    the lowest unfinished block not resident, and every resident block
    waiting on an unfinished predecessor.
    """
    if config.policy != "one-to-one" or not outcome.deadlocked:
        return False
    order = admission_order(config)
    admits = [b for _, e, b in outcome.trace if e == "admit"]
    finishes = [b for _, e, b in outcome.trace if e == "finish"]
    if admits != order[: len(admits)]:
        return False
    if finishes != list(range(len(finishes))):
        return False
    frontier = len(finishes)
    resident = set(admits) - set(finishes)
    if resident != set(outcome.blocked_set):
        return False
    if len(resident) != config.r or frontier in resident:
        return False
    # every blocked block really waits on an unfinished predecessor
    return all(blk > frontier for blk in resident)


@dataclass
class SweepResult:
    runs: int
    deadlocks: int
    fraction: float
    witness: Optional[SimOutcome] = None
    witness_verified: bool = False


def sweep_deadlocks(m: int, r: int, policy: str = "one-to-one",
                    b: Optional[int] = None, seeds: int = 1000,
                    seed0: int = 0) -> SweepResult:
    """Run `seeds` schedules (seed0, seed0+1, ...) and tally deadlocks.

    Keeps the first deadlocked outcome as a witness, re-verified from its
    seed.
    """
    deadlocks = 0
    witness = None
    verified = False
    for s in range(seed0, seed0 + seeds):
        config = SimConfig(m=m, r=r, policy=policy, b=b, seed=s)
        outcome = run_schedule(config)
        if outcome.deadlocked:
            deadlocks += 1
            if witness is None:
                witness = outcome
                verified = verify_deadlock(config, outcome)
    return SweepResult(
        runs=seeds,
        deadlocks=deadlocks,
        fraction=deadlocks / seeds if seeds else 0.0,
        witness=witness,
        witness_verified=verified,
    )


def deadlock_probability_sweep(m: int, r: int, policy: str = "one-to-one",
                               b: Optional[int] = None, seeds: int = 1000,
                               seed0: int = 0) -> float:
    """Fraction of seeded schedules that deadlock."""
    return sweep_deadlocks(m, r, policy=policy, b=b, seeds=seeds, seed0=seed0).fraction
