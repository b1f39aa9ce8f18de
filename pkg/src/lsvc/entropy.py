"""Lossless coding of quantized latents and inter residuals.

A 32-bit carryless range coder drives adaptive frequency models. Values in
{-64..64} are coded directly; anything outside escapes to a fixed 32-bit
raw word. Every payload ends with the 2-byte sentinel 0xCAFE; the decoder
consumes exactly the bytes the encoder produced and then verifies the
sentinel, so truncation and corruption are both detected.
"""

from __future__ import annotations

from bisect import bisect_right
from itertools import accumulate

import numpy as np

from .errors import CorruptStreamError, TruncatedStreamError

TOP = 1 << 24
BOT = 1 << 16
MASK = 0xFFFFFFFF
SENTINEL = b"\xca\xfe"

VALUE_MIN = -64
VALUE_MAX = 64
ESC = VALUE_MAX - VALUE_MIN + 1  # symbol index 129
VALUE_ALPHABET = ESC + 1  # 130 symbols including the escape


class AdaptiveModel:
    """Frequency table with deferred updates.

    Counts accumulate per symbol and are folded into the cumulative table
    every `period` updates, which keeps the per-symbol cost near O(1) while
    staying bit-identical between encoder and decoder (both defer the same
    way). Frequencies never drop below 1; the total stays below the range
    coder's precision bound, rescaling by halving when it grows past `limit`.
    """

    __slots__ = ("freq", "cum", "total", "inc", "period", "limit", "_pending")

    def __init__(self, n_symbols: int, inc: int = 32, period: int = 16,
                 limit: int = 1 << 15):
        self.freq = [1] * n_symbols
        self.inc = inc
        self.period = period
        self.limit = limit
        self._pending = 0
        self._rebuild()

    def _rebuild(self):
        cum = [0, *accumulate(self.freq)]
        if cum[-1] > self.limit:
            self.freq = [max(1, f >> 1) for f in self.freq]
            cum = [0, *accumulate(self.freq)]
        self.cum = cum
        self.total = cum[-1]

    def params(self, sym: int) -> tuple[int, int, int]:
        cum = self.cum
        return cum[sym], cum[sym + 1] - cum[sym], self.total

    def find(self, scaled: int) -> int:
        return bisect_right(self.cum, scaled) - 1

    def update(self, sym: int):
        self.freq[sym] += self.inc
        self._pending += 1
        if self._pending >= self.period:
            self._pending = 0
            self._rebuild()


class RangeEncoder:
    """Carryless byte-oriented range encoder (Subbotin style)."""

    __slots__ = ("low", "range", "out")

    def __init__(self):
        self.low = 0
        self.range = MASK
        self.out = bytearray()

    def _normalize(self):
        low, rng, out = self.low, self.range, self.out
        while True:
            if (low ^ (low + rng)) < TOP:
                pass
            elif rng < BOT:
                rng = -low & (BOT - 1)
            else:
                break
            out.append((low >> 24) & 0xFF)
            low = (low << 8) & MASK
            rng = (rng << 8) & MASK
        self.low, self.range = low, rng

    def encode(self, model: AdaptiveModel, sym: int):
        cum, freq, total = model.params(sym)
        r = self.range // total
        self.low += r * cum
        if cum + freq == total:
            self.range -= r * cum  # top symbol absorbs the division remainder
        else:
            self.range = r * freq
        self._normalize()
        model.update(sym)

    def encode_uniform(self, value: int, size: int):
        """Code `value` in [0, size) with a fixed uniform distribution."""
        r = self.range // size
        self.low += r * value
        if value == size - 1:
            self.range -= r * value
        else:
            self.range = r
        self._normalize()

    def encode_bit(self, bit: int):
        self.encode_uniform(bit & 1, 2)

    def encode_bits(self, value: int, n: int):
        """n raw bits, MSB first, in byte-sized chunks where possible."""
        while n >= 8:
            n -= 8
            self.encode_uniform((value >> n) & 0xFF, 256)
        if n:
            self.encode_uniform(value & ((1 << n) - 1), 1 << n)

    def finish(self) -> bytes:
        low = self.low
        for _ in range(4):
            self.out.append((low >> 24) & 0xFF)
            low = (low << 8) & MASK
        self.out += SENTINEL
        return bytes(self.out)


class RangeDecoder:
    """Mirror of RangeEncoder over a fixed byte buffer."""

    __slots__ = ("data", "pos", "limit", "low", "range", "code")

    def __init__(self, data: bytes):
        if len(data) < len(SENTINEL):
            raise TruncatedStreamError("payload shorter than its sentinel")
        self.data = data
        self.limit = len(data) - len(SENTINEL)
        self.pos = 0
        self.low = 0
        self.range = MASK
        code = 0
        for _ in range(4):
            code = (code << 8) | self._byte()
        self.code = code

    def _byte(self) -> int:
        if self.pos >= self.limit:
            raise TruncatedStreamError("range-coded payload ended early")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def _normalize(self):
        low, rng, code = self.low, self.range, self.code
        while True:
            if (low ^ (low + rng)) < TOP:
                pass
            elif rng < BOT:
                rng = -low & (BOT - 1)
            else:
                break
            code = ((code << 8) | self._byte()) & MASK
            low = (low << 8) & MASK
            rng = (rng << 8) & MASK
        self.low, self.range, self.code = low, rng, code

    def decode(self, model: AdaptiveModel) -> int:
        total = model.total
        r = self.range // total
        scaled = ((self.code - self.low) & MASK) // r
        if scaled >= total:
            scaled = total - 1  # corrupt data; the sentinel check will fail
        sym = model.find(scaled)
        cum, freq, total = model.params(sym)
        self.low += r * cum
        if cum + freq == total:
            self.range -= r * cum
        else:
            self.range = r * freq
        self._normalize()
        model.update(sym)
        return sym

    def decode_uniform(self, size: int) -> int:
        r = self.range // size
        value = ((self.code - self.low) & MASK) // r
        if value >= size:
            value = size - 1
        self.low += r * value
        if value == size - 1:
            self.range -= r * value
        else:
            self.range = r
        self._normalize()
        return value

    def decode_bit(self) -> int:
        return self.decode_uniform(2)

    def decode_bits(self, n: int) -> int:
        value = 0
        while n >= 8:
            value = (value << 8) | self.decode_uniform(256)
            n -= 8
        if n:
            value = (value << n) | self.decode_uniform(1 << n)
        return value

    def finish(self):
        """Verify the decoder consumed the whole payload and the sentinel."""
        if self.pos != self.limit:
            raise CorruptStreamError(
                f"decoder consumed {self.pos} of {self.limit} payload bytes"
            )
        if self.data[self.limit:] != SENTINEL:
            raise CorruptStreamError("end-of-payload sentinel mismatch")


def encode_value(enc: RangeEncoder, model: AdaptiveModel, v: int):
    """One signed value: in-alphabet symbol, or ESC plus 32 raw bits."""
    if VALUE_MIN <= v <= VALUE_MAX:
        enc.encode(model, v - VALUE_MIN)
    else:
        enc.encode(model, ESC)
        enc.encode_bits(v & MASK, 32)


def decode_value(dec: RangeDecoder, model: AdaptiveModel) -> int:
    sym = dec.decode(model)
    if sym != ESC:
        return sym + VALUE_MIN
    raw = dec.decode_bits(32)
    return raw - (1 << 32) if raw >= (1 << 31) else raw


def write_signed_eg(enc: RangeEncoder, v: int):
    """Signed exp-Golomb as raw bits: 0 -> 1, +1 -> 010, -1 -> 011, ...

    Written strictly bit by bit: the reader discovers the length from the
    prefix, so both sides must drive the coder with identical bit steps.
    """
    codenum = 2 * v - 1 if v > 0 else -2 * v
    k = codenum + 1
    nbits = k.bit_length()
    for _ in range(nbits - 1):
        enc.encode_bit(0)
    for i in range(nbits - 1, -1, -1):
        enc.encode_bit((k >> i) & 1)


def read_signed_eg(dec: RangeDecoder) -> int:
    zeros = 0
    while dec.decode_bit() == 0:
        zeros += 1
        if zeros > 32:
            raise CorruptStreamError("runaway exp-Golomb prefix")
    k = 1
    for _ in range(zeros):
        k = (k << 1) | dec.decode_bit()
    codenum = k - 1
    return (codenum + 1) // 2 if codenum % 2 else -(codenum // 2)


def signed_eg_length(v: int) -> int:
    codenum = 2 * v - 1 if v > 0 else -2 * v
    return 2 * (codenum + 1).bit_length() - 1


def encode_plane(values, context_id: int = 0) -> bytes:
    """Losslessly code one integer array with a fresh adaptive context."""
    enc = RangeEncoder()
    model = AdaptiveModel(VALUE_ALPHABET)
    for v in np.asarray(values).ravel().tolist():
        encode_value(enc, model, int(v))
    return enc.finish()


def decode_plane(data: bytes, length: int, context_id: int = 0) -> np.ndarray:
    dec = RangeDecoder(data)
    model = AdaptiveModel(VALUE_ALPHABET)
    out = [decode_value(dec, model) for _ in range(length)]
    dec.finish()
    return np.array(out, dtype=np.int32)


def encode_channel_band(coeffs: np.ndarray, start_channel: int = 0) -> bytes:
    """Code a (channels, gh, gw) integer tensor, one context per channel."""
    enc = RangeEncoder()
    for plane in coeffs:
        model = AdaptiveModel(VALUE_ALPHABET)
        for v in plane.ravel().tolist():
            encode_value(enc, model, int(v))
    return enc.finish()


def decode_channel_band(data: bytes, channels: int, grid_h: int,
                        grid_w: int, start_channel: int = 0) -> np.ndarray:
    dec = RangeDecoder(data)
    out = np.empty((channels, grid_h, grid_w), dtype=np.int32)
    n = grid_h * grid_w
    for c in range(channels):
        model = AdaptiveModel(VALUE_ALPHABET)
        plane = [decode_value(dec, model) for _ in range(n)]
        out[c] = np.array(plane, dtype=np.int32).reshape(grid_h, grid_w)
    dec.finish()
    return out


class RateEstimate:
    """Achieved rate in bits (the rate term of the loss evaluator)."""

    __slots__ = ("bits",)

    def __init__(self, bits: float):
        if bits < 0:
            raise ValueError("rate cannot be negative")
        self.bits = bits

    def __repr__(self):
        return f"RateEstimate(bits={self.bits})"


def estimate_rate(q) -> RateEstimate:
    """Exact bit length of the actual two-layer encoding of a latent."""
    s = q.base_split
    base = encode_channel_band(q.coeffs[:s], 0)
    enh = encode_channel_band(q.coeffs[s:], s)
    return RateEstimate(8 * (len(base) + len(enh)))
