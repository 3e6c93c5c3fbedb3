"""Symmetric uniform integer grids with nearest and stochastic rounding.

Each output channel (row) of a weight matrix gets its own grid: the scale
is ``absmax_c / (2**(bits-1) - 1)`` and representable values are
``m * scale`` for signed codes ``m`` with ``|m| <= 2**(bits-1) - 1``.
The grid is symmetric about zero and always contains zero.

Rounding-to-nearest maps every entry to the closest grid value (halfway
ties go away from zero). Stochastic rounding picks the floor neighbour
with probability ``(hi - w) / scale`` and the ceiling neighbour otherwise,
which makes the dequantized sample an unbiased estimator of the input.
Both probabilities are the raw neighbour gaps divided by the grid
resolution so that they sum to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

MIN_BITS = 2
MAX_BITS = 8


@dataclass(frozen=True)
class QuantGridSet:
    """Per-output-channel grids over one weight matrix."""

    bits: int
    scales: np.ndarray  # float32 [channels], zero only for all-zero channels
    channels: int

    @property
    def max_code(self) -> int:
        return 2 ** (self.bits - 1) - 1


@dataclass(frozen=True)
class QuantizedTensor:
    """Signed integer codes plus the grids they index into."""

    codes: np.ndarray  # int8, same shape as the source matrix
    grids: QuantGridSet
    source_shape: tuple[int, int]


def build_grids(w: np.ndarray, bits: int) -> QuantGridSet:
    """Grids from per-channel absolute maxima of a [channels x d_in] matrix."""
    if not MIN_BITS <= int(bits) <= MAX_BITS:
        raise ConfigError(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    w = np.asarray(w, dtype=np.float32)
    if w.ndim != 2:
        raise ShapeError(f"expected a 2-D weight matrix, got shape {w.shape}")
    absmax = np.max(np.abs(w), axis=1)
    scales = (absmax / np.float32(2 ** (bits - 1) - 1)).astype(np.float32)
    return QuantGridSet(bits=int(bits), scales=scales, channels=w.shape[0])


def floor_ceil(w: float, scale: float) -> tuple[float, float]:
    """Nearest grid values below and above ``w`` on a grid of given scale.

    Returns ``(lo, hi)`` with ``lo <= w <= hi`` and ``hi - lo`` either 0
    (``w`` exactly on grid) or ``scale``. A zero scale denotes a degenerate
    all-zero channel and maps everything to ``(0.0, 0.0)``.
    """
    if scale == 0.0:
        return 0.0, 0.0
    f = math.floor(w / scale)
    # float rounding of the quotient can land one cell off; walk back
    while f * scale > w:
        f -= 1
    while (f + 1) * scale < w:
        f += 1
    lo = f * scale
    hi = (f + 1) * scale
    if lo == w or hi == w:
        return w, w
    return lo, hi


def _check_shape(w: np.ndarray, grids: QuantGridSet) -> None:
    if w.ndim != 2 or w.shape[0] != grids.channels:
        raise ShapeError(
            f"weight shape {w.shape} does not match {grids.channels}-channel grids"
        )


def _round_half_away(t: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halfway cases away from zero."""
    a = np.abs(t)
    base = np.floor(a)
    mag = base + (a - base >= 0.5)
    return (np.sign(t) * mag).astype(np.int64)


def _scaled_codes(w: np.ndarray, grids: QuantGridSet) -> tuple[np.ndarray, np.ndarray]:
    """Quotients w/scale clipped to the representable code range."""
    scales = grids.scales.astype(np.float64)[:, np.newaxis]
    safe = np.where(scales > 0.0, scales, 1.0)
    t = np.clip(w.astype(np.float64) / safe, -grids.max_code, grids.max_code)
    return t, scales


def rtn(w: np.ndarray, grids: QuantGridSet) -> QuantizedTensor:
    """Round every entry to its nearest grid value (ties away from zero)."""
    w = np.asarray(w, dtype=np.float32)
    _check_shape(w, grids)
    t, scales = _scaled_codes(w, grids)
    codes = np.where(scales > 0.0, _round_half_away(t), 0)
    return QuantizedTensor(codes.astype(np.int8), grids, w.shape)


def bsr_sample(
    w: np.ndarray, grids: QuantGridSet, rng: np.random.Generator
) -> QuantizedTensor:
    """Draw one stochastic rounding of ``w``.

    Every entry consumes exactly one uniform draw from ``rng`` in flat
    index order, so a freshly keyed generator yields the same codes no
    matter how the work is scheduled. Entries that already sit on a grid
    value are returned unchanged.
    """
    w = np.asarray(w, dtype=np.float32)
    _check_shape(w, grids)
    t, scales = _scaled_codes(w, grids)
    lo = np.floor(t)
    frac = t - lo
    u = rng.random(size=w.shape)
    codes = lo.astype(np.int64) + (u < frac)
    # snap entries whose nearest grid value reproduces w bit-exactly;
    # without this, quotient rounding could nudge on-grid entries off grid
    nearest = _round_half_away(t)
    on_grid = (nearest * scales).astype(np.float32) == w
    codes = np.where(on_grid, nearest, codes)
    codes = np.where(scales > 0.0, codes, 0)
    return QuantizedTensor(codes.astype(np.int8), grids, w.shape)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    """Map codes back to float32 values, ``value = code * scale``."""
    scales = q.grids.scales.astype(np.float64)[:, np.newaxis]
    return (q.codes.astype(np.float64) * scales).astype(np.float32)
