"""Reference inclusive-scan algorithms on a single array.

Three classic formulations, all producing the same inclusive scan
y[j] = x[0] ⊕ ... ⊕ x[j] but with different ⊕-application counts:

  sequential_scan      N - 1 applications, the oracle everything is tested
                       against.
  hillis_steele_scan   step-efficient doubling scan; sum over steps k of
                       max(N - 2^k, 0) applications. The count is asserted in
                       that summation form, not a closed form: with guarded
                       reads the final steps combine fewer than N elements.
  work_efficient_scan  Blelloch up-sweep/down-sweep tree, 2(N - 1)
                       applications for the exclusive tree phases, plus N for
                       the exclusive-to-inclusive fix-up. Requires
                       power-of-two N; callers pad with the identity.
  matrix_scan          rows x cols reshape; scan rows, scan the column of row
                       reductions, fold each row's predecessor prefix back.
                       At most 2N + rows applications.

All operate through the operator protocol (combine/accumulate) so an
instrumented operator observes every application without changing the
algorithm's shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


class ShapeError(ValueError):
    """Raised when an input shape violates an algorithm's precondition."""


@dataclass
class ScanProblem:
    """An inclusive-scan instance: 1-D input x, operator op, optional out.

    When out is given the result is written there (it may alias x for an
    in-place scan); otherwise a fresh array is allocated.
    """

    x: np.ndarray
    op: object
    out: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.asanyarray(self.x)
        if self.x.ndim != 1:
            raise ShapeError(f"input must be 1-D, got shape {self.x.shape}")
        if self.out is not None and self.out.shape != self.x.shape:
            raise ShapeError("out shape must match input shape")

    def resolve_out(self) -> np.ndarray:
        return self.out if self.out is not None else np.empty_like(self.x)


def sequential_scan(problem: ScanProblem) -> np.ndarray:
    """Left-to-right fold; the N-1-application oracle."""
    out = problem.resolve_out()
    if problem.x.size == 0:
        return out
    problem.op.accumulate(problem.x, out=out)
    return out


def hillis_steele_scan(problem: ScanProblem) -> np.ndarray:
    """Doubling scan: ceil(log2 N) lockstep steps over a double buffer.

    Step with offset d combines y[j - d] into y[j] for all j >= d, reading
    only the previous step's buffer. Guarded reads: elements j < d are
    carried over unchanged, so step d performs N - d applications.
    """
    x, op = problem.x, problem.op
    out = problem.resolve_out()
    n = x.size
    if n == 0:
        return out
    cur = x.astype(op.dtype, copy=True)
    nxt = np.empty_like(cur)
    d = 1
    while d < n:
        nxt[:d] = cur[:d]
        op.combine(cur[:-d], cur[d:], out=nxt[d:])
        cur, nxt = nxt, cur
        d *= 2
    out[:] = cur
    return out


def up_sweep(tree: np.ndarray, op) -> int:
    """In-place reduction tree over a power-of-two array.

    After the sweep, tree[2^(k+1)*i + 2^(k+1) - 1] holds the reduction of its
    subtree and tree[-1] holds the total. Returns the number of levels.
    """
    n = tree.size
    levels = 0
    d = 1
    while d < n:
        # parents at stride 2d fold in their left child's subtree total
        left = tree[d - 1 :: 2 * d]
        right = tree[2 * d - 1 :: 2 * d]
        op.combine(left, right, out=right)
        d *= 2
        levels += 1
    return levels


def down_sweep(tree: np.ndarray, op) -> None:
    """In-place exclusive-scan finish after up_sweep.

    Sets the root to identity, then walks levels back down swapping left
    totals into right positions. Leaves tree as the exclusive scan of the
    original array.
    """
    n = tree.size
    tree[-1] = op.identity
    d = n // 2
    while d >= 1:
        left = tree[d - 1 :: 2 * d]
        right = tree[2 * d - 1 :: 2 * d]
        tmp = left.copy()
        left[:] = right
        op.combine(tmp, right, out=right)
        d //= 2


def work_efficient_scan(problem: ScanProblem) -> np.ndarray:
    """Blelloch tree scan; N must be a power of two (pad with identity).

    Exclusive tree phases cost 2(N - 1) applications; a final elementwise
    combine with the input converts to an inclusive scan (N more).
    """
    x, op = problem.x, problem.op
    out = problem.resolve_out()
    n = x.size
    if n == 0:
        return out
    if n & (n - 1):
        raise ShapeError(f"power-of-two length required, got {n}")
    tree = x.astype(op.dtype, copy=True)
    up_sweep(tree, op)
    down_sweep(tree, op)
    op.combine(tree, x, out=out)
    return out


def balanced_rows(n: int) -> int:
    """Largest divisor of n that is <= ceil(sqrt(n)); 1 for n <= 1."""
    if n <= 1:
        return 1
    target = math.isqrt(n - 1) + 1
    for d in range(target, 0, -1):
        if n % d == 0:
            return d
    return 1


def matrix_scan(problem: ScanProblem, rows: Optional[int] = None) -> np.ndarray:
    """Row-major matrix scan in three phases.

    (i) scan each row independently, (ii) scan the column of row totals,
    (iii) fold row r's predecessor total into every element of row r > 0.
    Costs (N - rows) + (rows - 1) + (N - cols) applications, at most
    2N + rows. rows must divide N; the default picks a divisor near sqrt(N).
    """
    x, op = problem.x, problem.op
    out = problem.resolve_out()
    n = x.size
    if n == 0:
        return out
    if rows is None:
        rows = balanced_rows(n)
    if rows < 1 or n % rows:
        raise ShapeError(f"rows={rows} does not divide N={n}")
    cols = n // rows
    mat = np.empty((rows, cols), dtype=op.dtype)
    for r in range(rows):
        op.accumulate(x[r * cols : (r + 1) * cols], out=mat[r])
    totals = op.accumulate(mat[:, -1].copy())
    for r in range(1, rows):
        op.combine(totals[r - 1], mat[r], out=mat[r])
    out[:] = mat.reshape(-1)
    return out
