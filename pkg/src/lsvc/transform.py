"""Fixed block transform, scalar quantizer, and base/enhancement channel split.

The analysis stage applies an orthonormal 16x16 type-II cosine transform per
block, orders the 256 coefficients by zigzag scan, and keeps the first 192
as the latent channels. The 128 lowest-frequency channels form the base
group (enough for the machine task), the next 64 the enhancement group.
Truncating the 64 highest-frequency coefficients is the fixed stand-in for a
lossy learned bottleneck.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .frames import BLOCK, Frame

DEFAULT_CHANNELS = 192
DEFAULT_BASE_SPLIT = 128
MAX_CHANNELS = BLOCK * BLOCK  # one block yields at most 256 coefficients

# Quality ladder. lambda values are the published training trade-offs for
# indices 1..6; base quantizer steps are implementation constants chosen to
# span the bitrate range needed for BD curves. Steps are kept in integer
# millis so bitstream headers can carry them as fixed-width integers.
LAMBDA_TABLE = {1: 0.0018, 2: 0.0035, 3: 0.0067, 4: 0.013, 5: 0.025, 6: 0.0483}
BASE_STEP_MILLI = {1: 16000, 2: 11000, 3: 8000, 4: 5500, 5: 4000, 6: 2800}
STEP_SLOPE_DIV = 64
GAMMA = 0.006  # feature-distortion weight in the loss evaluator


@dataclass(frozen=True)
class QualityProfile:
    """One point on the 6-step quality ladder."""

    index: int
    lam: float
    base_step: float

    @classmethod
    def from_index(cls, index: int) -> "QualityProfile":
        if index not in LAMBDA_TABLE:
            raise ValueError(f"quality index must be 1..6, got {index}")
        return cls(index, LAMBDA_TABLE[index], BASE_STEP_MILLI[index] / 1000.0)

    def step_table(self, channels: int = DEFAULT_CHANNELS) -> np.ndarray:
        k = np.arange(channels, dtype=np.float64)
        return self.base_step * (1.0 + k / STEP_SLOPE_DIV)


def step_table_from_milli(base_step_milli: int, channels: int,
                          slope_div: int = STEP_SLOPE_DIV) -> np.ndarray:
    k = np.arange(channels, dtype=np.float64)
    return (base_step_milli / 1000.0) * (1.0 + k / slope_div)


@lru_cache(maxsize=4)
def zigzag_order(n: int = BLOCK) -> tuple:
    """(row, col) pairs of an n x n block in zigzag scan order."""
    order = []
    for s in range(2 * n - 1):
        cells = [(i, s - i) for i in range(n) if 0 <= s - i < n]
        if s % 2 == 0:
            cells.reverse()  # even anti-diagonals run bottom-left to top-right
        order.extend(cells)
    return tuple(order)


@lru_cache(maxsize=4)
def zigzag_flat(n: int = BLOCK) -> np.ndarray:
    idx = np.array([r * n + c for r, c in zigzag_order(n)], dtype=np.int64)
    idx.flags.writeable = False
    return idx


@dataclass(frozen=True, eq=False)
class Latent:
    """Real coefficient tensor, shape (channels, grid_h, grid_w)."""

    coeffs: np.ndarray
    base_split: int = DEFAULT_BASE_SPLIT

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 3:
            raise ValueError("latent coefficients must be 3-dimensional")
        if not 0 < self.base_split < c.shape[0]:
            raise ValueError("base_split must satisfy 0 < s < channels")
        if c.shape[0] > MAX_CHANNELS:
            raise ValueError(f"at most {MAX_CHANNELS} channels per block")
        object.__setattr__(self, "coeffs", c)

    @property
    def channels(self) -> int:
        return self.coeffs.shape[0]

    @property
    def grid_h(self) -> int:
        return self.coeffs.shape[1]

    @property
    def grid_w(self) -> int:
        return self.coeffs.shape[2]


@dataclass(frozen=True, eq=False)
class QuantizedLatent:
    """Integer latent plus the per-channel steps that dequantize it."""

    coeffs: np.ndarray
    step_table: np.ndarray
    quality_index: int
    base_split: int = DEFAULT_BASE_SPLIT

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if not np.issubdtype(c.dtype, np.integer):
            raise ValueError("quantized coefficients must be integers")
        steps = np.asarray(self.step_table, dtype=np.float64)
        if steps.shape != (c.shape[0],) or np.any(steps <= 0):
            raise ValueError("step_table must be strictly positive, one per channel")
        if not 0 < self.base_split < c.shape[0]:
            raise ValueError("base_split must satisfy 0 < s < channels")
        object.__setattr__(self, "coeffs", c.astype(np.int32))
        object.__setattr__(self, "step_table", steps)

    @property
    def channels(self) -> int:
        return self.coeffs.shape[0]

    @property
    def grid_h(self) -> int:
        return self.coeffs.shape[1]

    @property
    def grid_w(self) -> int:
        return self.coeffs.shape[2]


@dataclass(frozen=True, eq=False)
class ChannelBand:
    """Contiguous slice of latent channels (the unit the layers carry)."""

    start: int
    coeffs: np.ndarray
    step_table: np.ndarray
    quality_index: int
    total_channels: int
    base_split: int

    @property
    def count(self) -> int:
        return self.coeffs.shape[0]

    @property
    def grid_h(self) -> int:
        return self.coeffs.shape[1]

    @property
    def grid_w(self) -> int:
        return self.coeffs.shape[2]


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest with ties away from zero (-2.5 -> -3)."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def blockify(samples: np.ndarray) -> np.ndarray:
    """(H, W) -> (gh, gw, 16, 16) without copying more than needed."""
    h, w = samples.shape
    gh, gw = h // BLOCK, w // BLOCK
    return samples.reshape(gh, BLOCK, gw, BLOCK).swapaxes(1, 2)


def unblockify(blocks: np.ndarray) -> np.ndarray:
    gh, gw, _, _ = blocks.shape
    return blocks.swapaxes(1, 2).reshape(gh * BLOCK, gw * BLOCK)


def analysis(frame: Frame, channels: int = DEFAULT_CHANNELS,
             base_split: int = DEFAULT_BASE_SPLIT) -> Latent:
    """Blockwise forward transform; coefficient k of block (i,j) lands at
    coeffs[k][i][j]. For a constant frame of value v, channel 0 is 16*v."""
    blocks = blockify(frame.samples.astype(np.float64))
    spec = scipy.fft.dctn(blocks, type=2, norm="ortho", axes=(2, 3))
    gh, gw = spec.shape[:2]
    zig = spec.reshape(gh, gw, MAX_CHANNELS)[:, :, zigzag_flat()]
    coeffs = np.ascontiguousarray(zig[:, :, :channels].transpose(2, 0, 1))
    return Latent(coeffs=coeffs, base_split=base_split)


def quantize(lat: Latent, profile: QualityProfile) -> QuantizedLatent:
    """Per-channel uniform quantization, ties away from zero."""
    steps = profile.step_table(lat.channels)
    q = round_half_away(lat.coeffs / steps[:, None, None]).astype(np.int32)
    return QuantizedLatent(coeffs=q, step_table=steps,
                           quality_index=profile.index,
                           base_split=lat.base_split)


def synthesis(q: QuantizedLatent, poc: int = 0) -> Frame:
    """Dequantize, zero-fill the truncated channels, inverse transform,
    round and clamp to [0, 255]."""
    c, gh, gw = q.coeffs.shape
    deq = q.coeffs.astype(np.float64) * q.step_table[:, None, None]
    full = np.zeros((gh, gw, MAX_CHANNELS))
    full[:, :, zigzag_flat()[:c]] = deq.transpose(1, 2, 0)
    blocks = scipy.fft.idctn(full.reshape(gh, gw, BLOCK, BLOCK),
                             type=2, norm="ortho", axes=(2, 3))
    pixels = np.clip(round_half_away(unblockify(blocks)), 0, 255).astype(np.uint8)
    return Frame(gw * BLOCK, gh * BLOCK, pixels, poc=poc)


def split(q: QuantizedLatent) -> tuple[ChannelBand, ChannelBand]:
    s = q.base_split
    base = ChannelBand(0, q.coeffs[:s], q.step_table[:s],
                       q.quality_index, q.channels, s)
    enh = ChannelBand(s, q.coeffs[s:], q.step_table[s:],
                      q.quality_index, q.channels, s)
    return base, enh


def merge(base: ChannelBand, enhancement: ChannelBand) -> QuantizedLatent:
    if base.start != 0 or enhancement.start != base.count:
        raise ValueError("bands are not a contiguous 0..C partition")
    if base.coeffs.shape[1:] != enhancement.coeffs.shape[1:]:
        raise ValueError("band grids do not match")
    if base.count + enhancement.count != base.total_channels:
        raise ValueError("bands do not cover the declared channel count")
    return QuantizedLatent(
        coeffs=np.concatenate([base.coeffs, enhancement.coeffs], axis=0),
        step_table=np.concatenate([base.step_table, enhancement.step_table]),
        quality_index=base.quality_index,
        base_split=base.base_split,
    )


def zero_fill_enhancement(base: ChannelBand) -> QuantizedLatent:
    """Extend a base band to the full channel count with zero coefficients."""
    if base.start != 0:
        raise ValueError("expected the base band (start channel 0)")
    c = base.total_channels
    coeffs = np.zeros((c, base.grid_h, base.grid_w), dtype=np.int32)
    coeffs[: base.count] = base.coeffs
    steps = step_table_like(base, c)
    return QuantizedLatent(coeffs=coeffs, step_table=steps,
                           quality_index=base.quality_index,
                           base_split=base.base_split)


def step_table_like(band: ChannelBand, channels: int) -> np.ndarray:
    """Rebuild a full step table consistent with the band's own steps."""
    profile = QualityProfile.from_index(band.quality_index)
    steps = profile.step_table(channels)
    steps[band.start:band.start + band.count] = band.step_table
    return steps
