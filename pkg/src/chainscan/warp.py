"""Virtual-warp block scan: register matrices, shuffle-up scans, lane folds.

Models a SIMT block as warps_per_block virtual warps of W lanes, each lane
holding K registers. A warp's state is its (K, W) register matrix where
regs[j, i] is lane i's j-th register, loaded from tile element i + W * j, so
row j is one W-wide SIMD step and the matrix is just the warp's K*W tile in
row-major order.

The scan proceeds in three levels:

  shuffle_up_scan        one row, Hillis-Steele over lanes; every step reads
                         the pre-step snapshot (lockstep), and the doubling
                         loop runs through offset == width so the final
                         iteration is deliberately vacuous.
  intra_warp_local_scan  scans the K rows and serially folds each row's
                         running prefix forward via the last lane's value.
  intra_block_local_scan scans every warp, scans the per-warp totals with a
                         single virtual warp (hence warps_per_block <= W),
                         and folds each warp's left-neighbor prefix into all
                         its registers. The fold is uniform: warp 0 folds the
                         identity so every warp performs identical work.
  intra_block_global_scan folds an externally supplied left prefix (identity
                         for the first block) into every register, then
                         stores registers back to a linear tile with the same
                         lane-major mapping used by the load.

All lane-parallel arithmetic goes through the operator's vectorized combine;
a W-wide combine is one SIMD step applied once per lane.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .operators import parse_dtype
from .reference import ShapeError


@dataclass(frozen=True)
class WarpGeometry:
    """Block shape: W lanes per warp, K registers per lane, warps per block.

    W must be a power of two in [2, 64]. warps_per_block may not exceed W
    because one virtual warp scans the per-warp totals array. Derived sizes:
    threads = W * warps_per_block, warp_tile = K * W, and
    block_len = K * W * warps_per_block elements per block.
    """

    w: int = 32
    k: int = 8
    warps_per_block: int = 32

    def __post_init__(self):
        if self.w < 2 or self.w > 64 or self.w & (self.w - 1):
            raise ShapeError(f"warp width must be a power of two in [2, 64], got {self.w}")
        if self.k < 1:
            raise ShapeError(f"registers per lane must be >= 1, got {self.k}")
        if not 1 <= self.warps_per_block <= self.w:
            raise ShapeError(
                f"warps_per_block must be in [1, {self.w}], got {self.warps_per_block}"
            )

    @property
    def threads(self) -> int:
        return self.w * self.warps_per_block

    @property
    def warp_tile(self) -> int:
        return self.k * self.w

    @property
    def block_len(self) -> int:
        return self.k * self.w * self.warps_per_block

    @classmethod
    def paper_preset(cls, elem_type) -> "WarpGeometry":
        """1024-thread geometry with K tuned per element width (44/20)."""
        width = parse_dtype(elem_type).itemsize * 8
        return cls(w=32, k=44 if width == 32 else 20, warps_per_block=32)


def warp_load(tile: np.ndarray, geometry: WarpGeometry) -> np.ndarray:
    """Load one warp's K*W tile into a fresh (K, W) register matrix."""
    tile = np.asarray(tile)
    if tile.size != geometry.warp_tile:
        raise ShapeError(f"warp tile must have {geometry.warp_tile} elements, got {tile.size}")
    return tile.reshape(geometry.k, geometry.w).copy()


def shuffle_up_scan(row: np.ndarray, op, width: Optional[int] = None) -> np.ndarray:
    """In-place inclusive scan of one row via shuffle-up doubling.

    Offset d step: lane i >= d replaces its value with
    snapshot[i - d] ⊕ snapshot[i]; lanes below d keep theirs. The loop runs
    d = 1, 2, ..., width inclusive, so the last iteration shifts by the full
    width and combines nothing. width defaults to the row length.
    """
    if width is None:
        width = row.size
    d = 1
    while d <= width:
        if d < row.size:
            snap = row.copy()
            op.combine(snap[:-d], row[d:], out=row[d:])
        d *= 2
    return row


def intra_warp_local_scan(regs: np.ndarray, op):
    """Scan a warp's (K, W) register matrix in place; return the warp total.

    Each row is shuffle-scanned, then the running prefix (identity before
    row 0) is folded uniformly across the row and refreshed from the last
    lane. Afterwards regs holds the inclusive scan of the warp's tile.
    """
    k = regs.shape[0]
    running = op.identity
    for j in range(k):
        shuffle_up_scan(regs[j], op)
        op.combine(running, regs[j], out=regs[j])
        running = regs[j, -1]
    return running


def intra_block_local_scan(tile: np.ndarray, geometry: WarpGeometry, op):
    """Block-local scan of one tile; returns (warp states, block total).

    Loads each warp, scans it, scans the per-warp totals with one virtual
    warp of width W, then folds warp w's left-neighbor prefix (identity for
    warp 0) into all of warp w's registers.
    """
    tile = np.asarray(tile)
    if tile.size != geometry.block_len:
        raise ShapeError(f"block tile must have {geometry.block_len} elements, got {tile.size}")
    wt = geometry.warp_tile
    states: List[np.ndarray] = []
    aux = np.empty(geometry.warps_per_block, dtype=op.dtype)
    for widx in range(geometry.warps_per_block):
        regs = warp_load(tile[widx * wt : (widx + 1) * wt], geometry)
        aux[widx] = intra_warp_local_scan(regs, op)
        states.append(regs)
    shuffle_up_scan(aux, op, width=geometry.w)
    for widx, regs in enumerate(states):
        prefix = op.identity if widx == 0 else aux[widx - 1]
        op.combine(prefix, regs, out=regs)
    return states, aux[-1]


def intra_block_global_scan(states, left_prefix, op, out: Optional[np.ndarray] = None):
    """Fold a left prefix into a block-locally scanned block and store it.

    left_prefix is the scan of everything before this block (identity for
    the first block; the fold is unconditional so all blocks do equal work).
    Registers are stored back lane-major, inverting the load mapping.
    """
    total = sum(regs.size for regs in states)
    if out is None:
        out = np.empty(total, dtype=op.dtype)
    elif out.size != total:
        raise ShapeError(f"output tile must have {total} elements, got {out.size}")
    pos = 0
    for regs in states:
        op.combine(left_prefix, regs, out=regs)
        out[pos : pos + regs.size] = regs.reshape(-1)
        pos += regs.size
    return out
