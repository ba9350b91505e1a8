"""Serialization orderings for 3-D cubes: six continuous zigzag schemes
plus the raster sweep baseline.

A scheme tag names its axis nesting with the *first* letter as the
fastest-varying (innermost) axis: R = row, C = column, B = band.  The
innermost axis snakes (alternates direction) each step of the middle
axis, and the (inner, middle) plane traversal reverses each step of the
outer axis, so consecutive sequence positions always sit at Manhattan
distance 1 in the cube.  SWEEP is plain row-major raster order over
(band, row, col) and jumps at every row and band wrap.

Every scan starts at coordinate (0, 0, 0) with all axes ascending.
Cube flat indices are row-major over (band, row, col), col fastest.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

SSCS_SCHEMES = ("RCB", "RBC", "CRB", "CBR", "BRC", "BCR")
ALL_SCHEMES = SSCS_SCHEMES + ("SWEEP",)

# cube axes are (band, row, col) = (0, 1, 2).  A letter names the scan
# direction, so "R" (row-forward scan, traversal along a row) varies the
# *column* coordinate, "C" varies the row, "B" varies the band.
_AXIS_OF_LETTER = {"R": 2, "C": 1, "B": 0}


@dataclass(frozen=True)
class ScanPermutation:
    """Bijection between sequence positions and cube flat indices."""

    scheme: str
    dims: tuple  # (bands, rows, cols)
    forward: np.ndarray  # position -> flat cube index
    inverse: np.ndarray  # flat cube index -> position

    @property
    def length(self) -> int:
        return int(self.forward.size)

    def coords(self) -> np.ndarray:
        """(L, 3) array of (band, row, col) per sequence position."""
        b, h, w = self.dims
        band, rem = np.divmod(self.forward, h * w)
        row, col = np.divmod(rem, w)
        return np.stack([band, row, col], axis=1)


def _zigzag_coords(inner_n, middle_n, outer_n):
    """Snake traversal of an (outer, middle, inner) grid.

    Returns an (L, 3) array of (outer, middle, inner) coordinates in
    visit order, every adjacent pair one step apart.
    """
    inner = np.arange(inner_n)
    coords = np.empty((outer_n * middle_n * inner_n, 3), dtype=np.int64)
    pos = 0
    for o in range(outer_n):
        middles = range(middle_n) if o % 2 == 0 else range(middle_n - 1, -1, -1)
        # parity of the inner direction continues across the outer flip so
        # that the single-step property holds at every boundary
        for m in middles:
            fwd = (o * middle_n + (m if o % 2 == 0 else middle_n - 1 - m)) % 2 == 0
            seq = inner if fwd else inner[::-1]
            coords[pos : pos + inner_n, 0] = o
            coords[pos : pos + inner_n, 1] = m
            coords[pos : pos + inner_n, 2] = seq
            pos += inner_n
    return coords


def build_permutation(scheme: str, dims) -> ScanPermutation:
    """Build the forward/inverse index lists for one scheme on (B, H, W)."""
    scheme = scheme.upper()
    if scheme not in ALL_SCHEMES:
        raise ValueError(f"unknown scan scheme '{scheme}'; expected one of {ALL_SCHEMES}")
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError(f"dims must be three positive extents, got {dims}")

    if scheme == "SWEEP":
        forward = np.arange(int(np.prod(dims)), dtype=np.int64)
    else:
        # letters give (inner, middle, outer); map onto cube axes
        axes = [_AXIS_OF_LETTER[ch] for ch in scheme]  # inner, middle, outer
        inner_ax, middle_ax, outer_ax = axes
        omi = _zigzag_coords(dims[inner_ax], dims[middle_ax], dims[outer_ax])
        cube = np.empty_like(omi)
        cube[:, outer_ax] = omi[:, 0]
        cube[:, middle_ax] = omi[:, 1]
        cube[:, inner_ax] = omi[:, 2]
        b, h, w = dims
        forward = (cube[:, 0] * h + cube[:, 1]) * w + cube[:, 2]

    inverse = np.empty_like(forward)
    inverse[forward] = np.arange(forward.size, dtype=np.int64)
    return ScanPermutation(scheme, dims, forward, inverse)


def invert(p: ScanPermutation) -> ScanPermutation:
    """Swap forward and inverse lists; invert(invert(p)) == p."""
    return ScanPermutation(p.scheme, p.dims, p.inverse.copy(), p.forward.copy())


def continuity_report(p: ScanPermutation):
    """Count adjacent sequence pairs that jump in the cube.

    Returns (count, positions) where positions[i] is the sequence index k
    such that coords[k] -> coords[k+1] has Manhattan distance > 1.
    """
    c = p.coords()
    dist = np.abs(np.diff(c, axis=0)).sum(axis=1)
    bad = np.nonzero(dist > 1)[0]
    return int(bad.size), bad


def flip_sequence(seq):
    """Reverse token order along the sequence axis (axis 0)."""
    arr = np.asarray(seq)
    return np.ascontiguousarray(arr[::-1])


_cache_lock = threading.Lock()
_cache: dict = {}


def get_permutation(scheme: str, dims) -> ScanPermutation:
    """Cached permutation lookup; safe for concurrent readers."""
    key = (scheme.upper(), tuple(int(d) for d in dims))
    p = _cache.get(key)
    if p is None:
        with _cache_lock:
            p = _cache.get(key)
            if p is None:
                p = build_permutation(*key)
                _cache[key] = p
    return p
