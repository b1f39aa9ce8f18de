"""Inter-frame coding: hierarchical GoP, decoded picture buffer,
bidirectional frame interpolation, and Lagrangian mode decision.

Every inter frame is coded per 16x16 block. Candidate modes (SKIP, motion-
compensated INTER, DIRECT prediction from the interpolated frame, flat
INTRA_DC) compete on J = SSD + lambda * bits with lambda = 0.85 * 2^((qp-12)/3).
Residuals reuse the block transform with a uniform step 2^((qp-4)/6).
The interpolated frame enters the pipeline two ways, selectable per config:
as a motionless DIRECT block mode, and by replacing the most distant DPB
entry so normal motion compensation can reference it.

Block syntax (range-coded, per block, fixed order): mode tree bits
(SKIP=1 bit, INTER=2, DIRECT/INTRA_DC=3, adaptive contexts), ref index
(1 bit, only when two references exist), motion vector as signed
exp-Golomb raw bits, coded-residual flag, then 256 residual coefficients
in zigzag order. INTER payloads start with POC (u16), qp (u8), and a
flags byte (bit0 interpolation used, bit1 DPB replacement, bit2 direct
mode) before the range-coded block data.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft
from numpy.lib.stride_tricks import sliding_window_view

from .bitstream import (
    ENH_LAYER,
    LayeredBitstream,
    NalUnit,
    StreamHeader,
    UnitType,
)
from .entropy import (
    AdaptiveModel,
    RangeDecoder,
    RangeEncoder,
    VALUE_ALPHABET,
    decode_value,
    encode_value,
    read_signed_eg,
    signed_eg_length,
    write_signed_eg,
)
from .errors import BitstreamError, CodecError
from .frames import BLOCK, Frame, Sequence, frame_from_array
from .intra import decode_intra_base, decode_intra_full, encode_intra
from .transform import (
    BASE_STEP_MILLI,
    QualityProfile,
    round_half_away,
    zigzag_flat,
)

SEARCH_RANGE = 16
MAX_QP = 51

_SPAN = 2 * SEARCH_RANGE + 1
_MANHATTAN = (np.abs(np.arange(-SEARCH_RANGE, SEARCH_RANGE + 1))[:, None]
              + np.abs(np.arange(-SEARCH_RANGE, SEARCH_RANGE + 1))[None, :])
_RASTER = np.arange(_SPAN * _SPAN).reshape(_SPAN, _SPAN)
# lexicographic (sad, |dx|+|dy|, raster) packed into one integer key
_TIE_KEY = (_MANHATTAN.astype(np.int64) * 2048 + _RASTER).astype(np.int64)
_SAD_SCALE = 1 << 17


def mode_lambda(qp: int) -> float:
    return 0.85 * 2.0 ** ((qp - 12) / 3.0)


def residual_step(qp: int) -> float:
    return 2.0 ** ((qp - 4) / 6.0)


@dataclass(frozen=True)
class MotionVector:
    dx: int
    dy: int

    def __post_init__(self):
        if max(abs(self.dx), abs(self.dy)) > SEARCH_RANGE:
            raise ValueError(f"motion vector outside +-{SEARCH_RANGE} search range")


class BlockModeKind(enum.Enum):
    SKIP = "SKIP"
    INTER = "INTER"
    DIRECT_INTERP = "DIRECT_INTERP"
    INTRA_DC = "INTRA_DC"


@dataclass(frozen=True)
class BlockMode:
    kind: BlockModeKind
    ref_index: int = 0
    mv: MotionVector | None = None
    coded_residual: bool = False

    def __post_init__(self):
        if self.kind == BlockModeKind.DIRECT_INTERP and self.mv is not None:
            raise ValueError("direct mode carries no motion information")
        if self.kind == BlockModeKind.SKIP and self.coded_residual:
            raise ValueError("skip blocks carry no residual")


@dataclass(frozen=True)
class GopConfig:
    intra_period: int = 8
    qp_offsets: tuple = (0, 1, 2, 3)  # indexed by dyadic depth
    dpb_capacity: int = 4
    interp_integration: str = "both"  # "direct" | "replace" | "both"

    def __post_init__(self):
        p = self.intra_period
        if p < 2 or p & (p - 1):
            raise ValueError("intra_period must be a power of two >= 2")
        if self.interp_integration not in ("direct", "replace", "both"):
            raise ValueError("interp_integration must be direct|replace|both")
        if self.dpb_capacity < 2:
            raise ValueError("dpb capacity must hold at least two references")


@dataclass(frozen=True)
class DpbEntry:
    poc: int
    samples: np.ndarray
    is_synthetic: bool = False


@dataclass(frozen=True)
class DecodedPictureBuffer:
    capacity: int = 4
    entries: tuple = ()

    def __post_init__(self):
        pocs = [e.poc for e in self.entries if not e.is_synthetic]
        if len(pocs) != len(set(pocs)):
            raise ValueError("non-synthetic DPB entries must have unique POCs")
        if len(self.entries) > self.capacity:
            raise ValueError("DPB over capacity")

    def insert(self, frame: Frame) -> "DecodedPictureBuffer":
        """Add a reconstructed frame, evicting the smallest POC when full."""
        entries = list(self.entries)
        entries.append(DpbEntry(frame.poc, frame.samples))
        if len(entries) > self.capacity:
            evict = min(entries, key=lambda e: e.poc)
            entries.remove(evict)
        return DecodedPictureBuffer(self.capacity, tuple(entries))

    def nearest(self, poc: int, count: int = 2) -> list[DpbEntry]:
        order = sorted(self.entries, key=lambda e: (abs(e.poc - poc), e.poc))
        return order[:count]

    def anchors_around(self, poc: int) -> tuple[DpbEntry, DpbEntry] | None:
        """Nearest past and future entries if poc is their exact midpoint."""
        past = [e for e in self.entries if e.poc < poc]
        future = [e for e in self.entries if e.poc > poc]
        if not past or not future:
            return None
        p = max(past, key=lambda e: e.poc)
        f = min(future, key=lambda e: e.poc)
        if poc - p.poc != f.poc - poc:
            return None
        return p, f


def replace_reference(dpb: DecodedPictureBuffer, synthetic: Frame,
                      current_poc: int) -> DecodedPictureBuffer:
    """Swap the entry farthest from current_poc (ties: smaller POC) for the
    interpolated frame, marked synthetic and carrying current_poc."""
    if not dpb.entries:
        raise CodecError("cannot replace a reference in an empty DPB")
    victim = min(dpb.entries, key=lambda e: (-abs(e.poc - current_poc), e.poc))
    entries = tuple(
        DpbEntry(current_poc, synthetic.samples, is_synthetic=True)
        if e is victim else e
        for e in dpb.entries
    )
    return DecodedPictureBuffer(dpb.capacity, entries)


def frame_depth(poc: int, period: int, frame_count: int) -> int:
    if poc % period == 0:
        return 0
    last_anchor = ((frame_count - 1) // period) * period
    if poc > last_anchor:
        return 1  # trailing frames chain off the final anchor
    r = poc % period
    trailing_zeros = (r & -r).bit_length() - 1
    return period.bit_length() - 1 - trailing_zeros


def is_reference(poc: int, period: int, frame_count: int) -> bool:
    if poc % period == 0:
        return True
    last_anchor = ((frame_count - 1) // period) * period
    if poc > last_anchor:
        return True
    return (poc % period) % 2 == 0


def dyadic_order(a: int, b: int) -> list[int]:
    """Depth-first midpoint order of the open interval (a, b)."""
    if b - a <= 1:
        return []
    m = (a + b) // 2
    return [m, *dyadic_order(a, m), *dyadic_order(m, b)]


def _pad(samples: np.ndarray) -> np.ndarray:
    return np.pad(samples.astype(np.int16), SEARCH_RANGE, mode="edge")


def _colocated(padded: np.ndarray, by: int, bx: int,
               dy: int = 0, dx: int = 0) -> np.ndarray:
    y = SEARCH_RANGE + by + dy
    x = SEARCH_RANGE + bx + dx
    return padded[y:y + BLOCK, x:x + BLOCK]


def motion_search(block: np.ndarray, windows: np.ndarray,
                  by: int, bx: int) -> tuple[MotionVector, int]:
    """Full search +-16 by SAD over precomputed sliding windows of the
    padded reference. Ties break on smallest |dx|+|dy|, then raster order."""
    cands = windows[by:by + _SPAN, bx:bx + _SPAN]
    sad = np.abs(cands.astype(np.int32) - block.astype(np.int32)).sum(
        axis=(2, 3), dtype=np.int64)
    key = sad * _SAD_SCALE + _TIE_KEY
    idx = int(np.argmin(key))
    dy, dx = idx // _SPAN - SEARCH_RANGE, idx % _SPAN - SEARCH_RANGE
    return MotionVector(dx=dx, dy=dy), int(sad[dy + SEARCH_RANGE, dx + SEARCH_RANGE])


def _sample_half(padded: np.ndarray, by: int, bx: int,
                 dy2: int, dx2: int) -> np.ndarray:
    """Block sampled at a displacement of (dy2/2, dx2/2) pixels, bilinear."""
    iy, fy = dy2 // 2, dy2 % 2
    ix, fx = dx2 // 2, dx2 % 2
    y = SEARCH_RANGE + by + iy
    x = SEARCH_RANGE + bx + ix
    win = padded[y:y + BLOCK + 1, x:x + BLOCK + 1].astype(np.float64)
    ay, ax = fy * 0.5, fx * 0.5
    return ((1 - ay) * (1 - ax) * win[:BLOCK, :BLOCK]
            + (1 - ay) * ax * win[:BLOCK, 1:]
            + ay * (1 - ax) * win[1:, :BLOCK]
            + ay * ax * win[1:, 1:])


def interpolate_frame(f1: Frame, f2: Frame, t: int) -> Frame:
    """Midpoint frame prediction: blockwise motion from f1 to f2, then the
    average of both references displaced by half the motion each."""
    if not (f1.poc < t < f2.poc) or (t - f1.poc) != (f2.poc - t):
        raise ValueError(f"t={t} is not the midpoint of {f1.poc} and {f2.poc}")
    if (f1.width, f1.height) != (f2.width, f2.height):
        raise ValueError("reference frames must share dimensions")
    p1, p2 = _pad(f1.samples), _pad(f2.samples)
    windows = sliding_window_view(p2, (BLOCK, BLOCK))
    out = np.empty((f1.height, f1.width), dtype=np.uint8)
    for by in range(0, f1.height, BLOCK):
        for bx in range(0, f1.width, BLOCK):
            block = _colocated(p1, by, bx)
            mv, _ = motion_search(block, windows, by, bx)
            # displacing f1 by +mv/2 samples it at x - mv/2 (and vice versa)
            a = _sample_half(p1, by, bx, -mv.dy, -mv.dx)
            b = _sample_half(p2, by, bx, mv.dy, mv.dx)
            merged = round_half_away((a + b) * 0.5)
            out[by:by + BLOCK, bx:bx + BLOCK] = np.clip(merged, 0, 255)
    return Frame(f1.width, f1.height, out, poc=t)


class _SyntaxContexts:
    """Fresh adaptive contexts per frame payload."""

    def __init__(self):
        bin_ctx = dict(inc=16, period=8, limit=4096)
        self.skip = AdaptiveModel(2, **bin_ctx)
        self.inter = AdaptiveModel(2, **bin_ctx)
        self.direct = AdaptiveModel(2, **bin_ctx)
        self.ref = AdaptiveModel(2, **bin_ctx)
        self.resflag = AdaptiveModel(2, **bin_ctx)
        self.residual = {
            BlockModeKind.INTER: AdaptiveModel(VALUE_ALPHABET),
            BlockModeKind.DIRECT_INTERP: AdaptiveModel(VALUE_ALPHABET),
            BlockModeKind.INTRA_DC: AdaptiveModel(VALUE_ALPHABET),
        }


_ZIG = None


def _zig_block():
    global _ZIG
    if _ZIG is None:
        _ZIG = zigzag_flat(BLOCK)
    return _ZIG


def _transform_residual(residual: np.ndarray, step: float) -> np.ndarray:
    coef = scipy.fft.dctn(residual.astype(np.float64), type=2, norm="ortho")
    return round_half_away(coef / step).astype(np.int32)


def _reconstruct(pred: np.ndarray, qcoef: np.ndarray | None,
                 step: float) -> np.ndarray:
    if qcoef is None:
        return np.clip(pred, 0, 255).astype(np.uint8)
    rec = scipy.fft.idctn(qcoef.astype(np.float64) * step, type=2, norm="ortho")
    return np.clip(round_half_away(pred.astype(np.float64) + rec), 0, 255).astype(np.uint8)


def _residual_bits_estimate(qcoef: np.ndarray) -> int:
    mag = np.abs(qcoef)
    nz = mag > 0
    # ~exp-Golomb-sized proxy for the adaptive coder's cost
    bits = np.where(nz, 2 * np.floor(np.log2(np.maximum(mag, 1))) + 4, 1)
    return int(bits.sum())


def _mode_syntax_bits(kind: BlockModeKind, two_refs: bool,
                      mv: MotionVector | None) -> int:
    if kind == BlockModeKind.SKIP:
        return 1
    bits = 2 if kind == BlockModeKind.INTER else 3
    if kind == BlockModeKind.INTER:
        bits += 1 if two_refs else 0
        bits += signed_eg_length(mv.dx) + signed_eg_length(mv.dy)
    return bits + 1  # coded-residual flag


@dataclass(frozen=True, eq=False)
class InterEncodeResult:
    unit: NalUnit
    reconstruction: Frame
    mode_counts: dict


def _reference_views(dpb: DecodedPictureBuffer, interp: Frame | None,
                     poc: int, replace_mode: bool):
    view = dpb
    if interp is not None and replace_mode:
        view = replace_reference(dpb, interp, poc)
    refs = view.nearest(poc, 2)
    if not refs:
        raise CodecError(f"no references available for POC {poc}")
    return refs


def encode_inter(frame: Frame, dpb: DecodedPictureBuffer, interp: Frame | None,
                 qp: int, cfg: GopConfig, temporal_id_plus1: int = 2,
                 trace: list | None = None) -> InterEncodeResult:
    """RD-optimized block coding of one inter frame against the DPB.

    Returns the NAL unit plus the decoder-identical reconstruction (the
    caller registers it into the DPB) and per-mode selection counts.
    """
    if not 0 <= qp <= MAX_QP:
        raise ValueError(f"qp must be 0..{MAX_QP}")
    replace_mode = interp is not None and cfg.interp_integration in ("replace", "both")
    direct_mode = interp is not None and cfg.interp_integration in ("direct", "both")
    refs = _reference_views(dpb, interp, frame.poc, replace_mode)
    padded = [_pad(e.samples) for e in refs]
    windows = [sliding_window_view(p, (BLOCK, BLOCK)) for p in padded]
    interp_padded = _pad(interp.samples) if direct_mode else None

    lam = mode_lambda(qp)
    step = residual_step(qp)
    two_refs = len(refs) == 2
    enc = RangeEncoder()
    ctx = _SyntaxContexts()
    recon = np.empty((frame.height, frame.width), dtype=np.uint8)
    counts = {k.value: 0 for k in BlockModeKind}
    counts["coded_residual"] = 0

    for by in range(0, frame.height, BLOCK):
        for bx in range(0, frame.width, BLOCK):
            orig = frame.samples[by:by + BLOCK, bx:bx + BLOCK].astype(np.int32)
            best = None  # (J, mode, qcoef, recon_block)

            def consider(j, mode, qcoef, rec):
                nonlocal best
                if best is None or j < best[0]:
                    best = (j, mode, qcoef, rec)

            skip_pred = _colocated(padded[0], by, bx).astype(np.int32)
            d = float(np.sum((orig - skip_pred) ** 2, dtype=np.int64))
            consider(d + lam * 1, BlockMode(BlockModeKind.SKIP),
                     None, np.clip(skip_pred, 0, 255).astype(np.uint8))

            def consider_predicted(kind, pred, ref_index=0, mv=None):
                syntax = _mode_syntax_bits(kind, two_refs, mv)
                rec0 = np.clip(pred, 0, 255).astype(np.uint8)
                d0 = float(np.sum((orig - rec0.astype(np.int32)) ** 2, dtype=np.int64))
                consider(d0 + lam * syntax,
                         BlockMode(kind, ref_index, mv, False), None, rec0)
                qcoef = _transform_residual(orig - pred, step)
                if np.any(qcoef):
                    rec1 = _reconstruct(pred, qcoef, step)
                    d1 = float(np.sum((orig - rec1.astype(np.int32)) ** 2, dtype=np.int64))
                    bits = syntax + _residual_bits_estimate(qcoef)
                    consider(d1 + lam * bits,
                             BlockMode(kind, ref_index, mv, True), qcoef, rec1)

            for ri in range(len(refs)):
                mv, _ = motion_search(orig.astype(np.int16), windows[ri], by, bx)
                pred = _colocated(padded[ri], by, bx, mv.dy, mv.dx).astype(np.int32)
                consider_predicted(BlockModeKind.INTER, pred, ri, mv)
            if direct_mode:
                pred = _colocated(interp_padded, by, bx).astype(np.int32)
                consider_predicted(BlockModeKind.DIRECT_INTERP, pred)
            consider_predicted(BlockModeKind.INTRA_DC,
                               np.full((BLOCK, BLOCK), 128, dtype=np.int32))

            _, mode, qcoef, rec = best
            _write_block(enc, ctx, mode, qcoef, two_refs, trace)
            recon[by:by + BLOCK, bx:bx + BLOCK] = rec
            counts[mode.kind.value] += 1
            counts["coded_residual"] += int(mode.coded_residual)

    flags = 0
    if interp is not None:
        flags = 1 | (2 if replace_mode else 0) | (4 if direct_mode else 0)
    payload = struct.pack(">HBB", frame.poc, qp, flags) + enc.finish()
    unit = NalUnit(UnitType.INTER, ENH_LAYER, temporal_id_plus1, payload)
    return InterEncodeResult(
        unit=unit,
        reconstruction=Frame(frame.width, frame.height, recon, poc=frame.poc),
        mode_counts=counts,
    )


def _write_block(enc, ctx, mode: BlockMode, qcoef, two_refs: bool, trace):
    if trace is not None:
        trace.append(("mode", mode.kind.value))
    if mode.kind == BlockModeKind.SKIP:
        enc.encode(ctx.skip, 1)
        return
    enc.encode(ctx.skip, 0)
    if mode.kind == BlockModeKind.INTER:
        enc.encode(ctx.inter, 1)
        if two_refs:
            enc.encode(ctx.ref, mode.ref_index)
            if trace is not None:
                trace.append(("ref_index", mode.ref_index))
        write_signed_eg(enc, mode.mv.dx)
        write_signed_eg(enc, mode.mv.dy)
        if trace is not None:
            trace.append(("mv", (mode.mv.dx, mode.mv.dy)))
    else:
        enc.encode(ctx.inter, 0)
        enc.encode(ctx.direct, 1 if mode.kind == BlockModeKind.DIRECT_INTERP else 0)
    enc.encode(ctx.resflag, 1 if mode.coded_residual else 0)
    if trace is not None:
        trace.append(("residual_flag", mode.coded_residual))
    if mode.coded_residual:
        model = ctx.residual[mode.kind]
        for v in qcoef.ravel()[_zig_block()].tolist():
            encode_value(enc, model, v)
        if trace is not None:
            trace.append(("residual", 256))


def peek_inter_header(unit: NalUnit) -> tuple[int, int, int]:
    """(poc, qp, flags) from the fixed INTER payload prefix."""
    if unit.unit_type != UnitType.INTER:
        raise BitstreamError(f"expected an INTER unit, got {unit.unit_type.name}")
    if len(unit.payload) < 4:
        raise BitstreamError("INTER payload shorter than its fixed header")
    return struct.unpack(">HBB", unit.payload[:4])


def decode_inter(unit: NalUnit, dpb: DecodedPictureBuffer,
                 interp: Frame | None, header: StreamHeader) -> Frame:
    """Bit-exact mirror of encode_inter."""
    poc, qp, flags = peek_inter_header(unit)
    use_interp = bool(flags & 1)
    replace_mode = bool(flags & 2)
    direct_mode = bool(flags & 4)
    if use_interp and interp is None:
        raise BitstreamError(f"POC {poc} was coded with interpolation but no "
                             "interpolated frame is available")
    refs = _reference_views(dpb, interp if use_interp else None, poc,
                            use_interp and replace_mode)
    padded = [_pad(e.samples) for e in refs]
    interp_padded = _pad(interp.samples) if (use_interp and direct_mode) else None
    two_refs = len(refs) == 2
    step = residual_step(qp)
    dec = RangeDecoder(unit.payload[4:])
    ctx = _SyntaxContexts()
    recon = np.empty((header.height, header.width), dtype=np.uint8)

    for by in range(0, header.height, BLOCK):
        for bx in range(0, header.width, BLOCK):
            if dec.decode(ctx.skip):
                pred = _colocated(padded[0], by, bx).astype(np.int32)
                recon[by:by + BLOCK, bx:bx + BLOCK] = np.clip(pred, 0, 255)
                continue
            if dec.decode(ctx.inter):
                ri = dec.decode(ctx.ref) if two_refs else 0
                dx = read_signed_eg(dec)
                dy = read_signed_eg(dec)
                mv = MotionVector(dx=dx, dy=dy)
                pred = _colocated(padded[ri], by, bx, mv.dy, mv.dx).astype(np.int32)
                kind = BlockModeKind.INTER
            elif dec.decode(ctx.direct):
                if interp_padded is None:
                    raise BitstreamError("direct block without an interpolated frame")
                pred = _colocated(interp_padded, by, bx).astype(np.int32)
                kind = BlockModeKind.DIRECT_INTERP
            else:
                pred = np.full((BLOCK, BLOCK), 128, dtype=np.int32)
                kind = BlockModeKind.INTRA_DC
            if dec.decode(ctx.resflag):
                model = ctx.residual[kind]
                flat = np.empty(BLOCK * BLOCK, dtype=np.int32)
                zig = _zig_block()
                for i in range(BLOCK * BLOCK):
                    flat[zig[i]] = decode_value(dec, model)
                qcoef = flat.reshape(BLOCK, BLOCK)
                block = _reconstruct(pred, qcoef, step)
            else:
                block = np.clip(pred, 0, 255).astype(np.uint8)
            recon[by:by + BLOCK, bx:bx + BLOCK] = block
    dec.finish()
    return Frame(header.width, header.height, recon, poc=poc)


def encode_all_intra(seq: Sequence, quality_index: int,
                     channels: int = 192, base_split: int = 128) -> LayeredBitstream:
    """Every frame intra-coded as a base+enhancement pair (gop_size=1)."""
    profile = QualityProfile.from_index(quality_index)
    header = StreamHeader(
        width=seq.width, height=seq.height, gop_size=1,
        channels=channels, base_split=base_split,
        quality_index=quality_index, frame_count=len(seq),
        base_step_milli=BASE_STEP_MILLI[quality_index],
    )
    units = []
    for f in seq.frames:
        res = encode_intra(f, profile, channels=channels, base_split=base_split)
        units += [res.base_unit, res.enh_unit]
    return LayeredBitstream(header=header, units=tuple(units))


def encode_sequence(seq: Sequence, quality_index: int, qp: int,
                    cfg: GopConfig = GopConfig(), use_interp: bool = True,
                    channels: int = 192, base_split: int = 128,
                    stats: dict | None = None) -> LayeredBitstream:
    """Random-access encode: intra anchors every intra_period frames, the
    rest inter-coded in dyadic order; trailing frames chain off the last
    anchor. Mode statistics are accumulated into `stats` when given."""
    period = cfg.intra_period
    n = len(seq)
    profile = QualityProfile.from_index(quality_index)
    header = StreamHeader(
        width=seq.width, height=seq.height, gop_size=period,
        channels=channels, base_split=base_split,
        quality_index=quality_index, frame_count=n,
        base_step_milli=BASE_STEP_MILLI[quality_index],
    )
    units: list[NalUnit] = []
    dpb = DecodedPictureBuffer(capacity=cfg.dpb_capacity)
    totals: dict = {}

    def code_intra(poc: int):
        nonlocal dpb
        res = encode_intra(seq.frames[poc], profile,
                           channels=channels, base_split=base_split)
        units.extend([res.base_unit, res.enh_unit])
        dpb = dpb.insert(res.reconstruction)
        totals["frames_intra"] = totals.get("frames_intra", 0) + 1

    def code_inter(poc: int):
        nonlocal dpb
        depth = frame_depth(poc, period, n)
        offset = cfg.qp_offsets[min(depth, len(cfg.qp_offsets) - 1)]
        qp_frame = min(MAX_QP, max(0, qp + offset))
        interp = None
        if use_interp:
            anchors = dpb.anchors_around(poc)
            if anchors is not None:
                past, future = anchors
                interp = interpolate_frame(
                    frame_from_array(past.samples, poc=past.poc),
                    frame_from_array(future.samples, poc=future.poc),
                    poc,
                )
        res = encode_inter(seq.frames[poc], dpb, interp, qp_frame, cfg,
                           temporal_id_plus1=depth + 1)
        units.append(res.unit)
        if is_reference(poc, period, n):
            dpb = dpb.insert(res.reconstruction)
        for k, v in res.mode_counts.items():
            totals[k] = totals.get(k, 0) + v
        totals["frames_inter"] = totals.get("frames_inter", 0) + 1

    code_intra(0)
    g = 0
    while g + period <= n - 1:
        code_intra(g + period)
        for poc in dyadic_order(g, g + period):
            code_inter(poc)
        g += period
    for poc in range(g + 1, n):
        code_inter(poc)

    if stats is not None:
        stats.update(totals)
    return LayeredBitstream(header=header, units=tuple(units))


def decode_sequence(bs: LayeredBitstream, max_layer: int = 1,
                    cfg: GopConfig | None = None):
    """max_layer=0: (poc, base ChannelBand) per intra frame, no enhancement
    or inter data touched. max_layer=1: all frames, display order."""
    header = bs.header
    if max_layer == 0:
        out = []
        k = 0
        for u in bs.units:
            if u.unit_type == UnitType.INTRA_BASE:
                out.append((k * header.gop_size, decode_intra_base(u, header)))
                k += 1
        return out

    capacity = cfg.dpb_capacity if cfg is not None else 4
    dpb = DecodedPictureBuffer(capacity=capacity)
    frames: dict[int, Frame] = {}
    intra_count = 0
    pending_base: NalUnit | None = None
    for u in bs.units:
        if u.unit_type == UnitType.INTRA_BASE:
            if pending_base is not None:
                raise BitstreamError("INTRA_BASE without its enhancement unit")
            pending_base = u
        elif u.unit_type == UnitType.INTRA_ENH:
            if pending_base is None:
                raise BitstreamError("INTRA_ENH without a preceding INTRA_BASE")
            poc = intra_count * header.gop_size
            frame = decode_intra_full(pending_base, u, header, poc=poc)
            pending_base = None
            intra_count += 1
            frames[poc] = frame
            dpb = dpb.insert(frame)
        elif u.unit_type == UnitType.INTER:
            poc, _, flags = peek_inter_header(u)
            interp = None
            if flags & 1:
                anchors = dpb.anchors_around(poc)
                if anchors is None:
                    raise BitstreamError(
                        f"POC {poc} needs interpolation anchors not in the DPB"
                    )
                past, future = anchors
                interp = interpolate_frame(
                    frame_from_array(past.samples, poc=past.poc),
                    frame_from_array(future.samples, poc=future.poc),
                    poc,
                )
            frame = decode_inter(u, dpb, interp, header)
            frames[poc] = frame
            if is_reference(poc, header.gop_size, header.frame_count):
                dpb = dpb.insert(frame)
    if pending_base is not None:
        raise BitstreamError("INTRA_BASE without its enhancement unit")
    if header.frame_count and len(frames) != header.frame_count:
        raise BitstreamError(
            f"decoded {len(frames)} frames, header declares {header.frame_count}"
        )
    ordered = [frames[p] for p in sorted(frames)]
    return Sequence(tuple(ordered), name="decoded")
