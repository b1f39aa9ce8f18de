"""Scalable two-layer intra coding and the rate-distortion loss evaluator.

One frame becomes two NAL units: the base unit carries the entropy-coded
low-frequency channels (self-contained, enough for the machine task), the
enhancement unit the remaining channels. Decoding base+enhancement mirrors
the encoder bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bitstream import NalUnit, StreamHeader, UnitType, BASE_LAYER, ENH_LAYER
from .entropy import decode_channel_band, encode_channel_band
from .errors import BitstreamError
from .frames import Frame
from .transform import (
    GAMMA,
    ChannelBand,
    QualityProfile,
    analysis,
    merge,
    quantize,
    split,
    step_table_from_milli,
    synthesis,
)


@dataclass(frozen=True, eq=False)
class IntraEncodeResult:
    base_unit: NalUnit
    enh_unit: NalUnit
    base_bits: int
    enh_bits: int
    reconstruction: Frame

    def __post_init__(self):
        expected = 8 * (len(self.base_unit.payload) + len(self.enh_unit.payload))
        if self.base_bits + self.enh_bits != expected:
            raise ValueError("bit accounting does not match payload sizes")

    @property
    def total_bits(self) -> int:
        return self.base_bits + self.enh_bits


@dataclass(frozen=True)
class LossReport:
    """Rate + lambda-weighted pixel and feature distortions."""

    bits: float
    mse_pixel: float
    mse_feature: float
    lam: float
    gamma: float
    total: float


def compose_loss(bits: float, mse_pixel: float, mse_feature: float,
                 lam: float, gamma: float = GAMMA) -> float:
    return bits + lam * mse_pixel + lam * gamma * mse_feature


def encode_intra(frame: Frame, profile: QualityProfile,
                 channels: int = 192, base_split: int = 128) -> IntraEncodeResult:
    q = quantize(analysis(frame, channels=channels, base_split=base_split), profile)
    base, enh = split(q)
    base_payload = encode_channel_band(base.coeffs, 0)
    enh_payload = encode_channel_band(enh.coeffs, base_split)
    base_unit = NalUnit(UnitType.INTRA_BASE, BASE_LAYER, 1, base_payload)
    enh_unit = NalUnit(UnitType.INTRA_ENH, ENH_LAYER, 1, enh_payload)
    recon = synthesis(merge(base, enh), poc=frame.poc)
    return IntraEncodeResult(
        base_unit=base_unit,
        enh_unit=enh_unit,
        base_bits=8 * len(base_payload),
        enh_bits=8 * len(enh_payload),
        reconstruction=recon,
    )


def _band_from_header(header: StreamHeader, coeffs: np.ndarray,
                      start: int) -> ChannelBand:
    steps = step_table_from_milli(header.base_step_milli, header.channels,
                                  header.step_slope_div)
    n = coeffs.shape[0]
    return ChannelBand(
        start=start,
        coeffs=coeffs,
        step_table=steps[start:start + n],
        quality_index=header.quality_index,
        total_channels=header.channels,
        base_split=header.base_split,
    )


def decode_intra_base(base_unit: NalUnit, header: StreamHeader) -> ChannelBand:
    """Recover the encoder's base-channel integers exactly."""
    if base_unit.unit_type != UnitType.INTRA_BASE:
        raise BitstreamError(
            f"expected an INTRA_BASE unit, got {base_unit.unit_type.name}"
        )
    coeffs = decode_channel_band(base_unit.payload, header.base_split,
                                 header.grid_h, header.grid_w, 0)
    return _band_from_header(header, coeffs, 0)


def decode_intra_full(base_unit: NalUnit, enh_unit: NalUnit,
                      header: StreamHeader, poc: int = 0) -> Frame:
    if enh_unit.unit_type != UnitType.INTRA_ENH:
        raise BitstreamError(
            f"expected an INTRA_ENH unit, got {enh_unit.unit_type.name}"
        )
    base = decode_intra_base(base_unit, header)
    n_enh = header.channels - header.base_split
    coeffs = decode_channel_band(enh_unit.payload, n_enh,
                                 header.grid_h, header.grid_w, header.base_split)
    enh = _band_from_header(header, coeffs, header.base_split)
    return synthesis(merge(base, enh), poc=poc)


def evaluate_loss(frame: Frame, profile: QualityProfile,
                  channels: int = 192, base_split: int = 128) -> LossReport:
    """Rate is the achieved bit count; distortions are measured against the
    actual reconstruction and the base-layer task feature."""
    from .vision import lst, task_feature_reference

    result = encode_intra(frame, profile, channels=channels, base_split=base_split)
    q = quantize(analysis(frame, channels=channels, base_split=base_split), profile)
    base, _ = split(q)
    header = StreamHeader(
        width=frame.width, height=frame.height, gop_size=1,
        channels=channels, base_split=base_split, quality_index=profile.index,
        frame_count=1, base_step_milli=round(profile.base_step * 1000),
    )
    mse_pixel = float(np.mean(
        (frame.samples.astype(np.float64)
         - result.reconstruction.samples.astype(np.float64)) ** 2
    ))
    ref = task_feature_reference(frame)
    feat = lst(base, header)
    mse_feature = float(np.mean((ref.plane - feat.plane) ** 2))
    bits = float(result.total_bits)
    return LossReport(
        bits=bits,
        mse_pixel=mse_pixel,
        mse_feature=mse_feature,
        lam=profile.lam,
        gamma=GAMMA,
        total=compose_loss(bits, mse_pixel, mse_feature, profile.lam),
    )
