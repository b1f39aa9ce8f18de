"""Quality metrics, BD-rate with curve validation, break-even analysis, and
the data-processing-inequality property check.

BD-rate fits monotone piecewise-cubic interpolants of log10(rate) against
quality and integrates the difference over the overlapping quality range;
non-monotonic curves are rejected with a diagnosis instead of silently
fitted. The break-even point is the largest fraction of time the
reconstruction task may run while the layered system still spends no more
bits than a single-stream anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.signal import fftconvolve

from .errors import CurveError
from .frames import Frame

PEAK = 255.0

# 5-scale construction: 11x11 Gaussian window (sigma 1.5), per-scale
# exponents and stabilizers from the metric's original publication.
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MSSSIM_MIN_DIM = 176  # 11-tap window must survive 4 dyadic downsamplings
_C1 = (0.01 * PEAK) ** 2
_C2 = (0.03 * PEAK) ** 2

_w = np.exp(-0.5 * (np.arange(-5, 6, dtype=np.float64) / 1.5) ** 2)
_w /= _w.sum()
MSSSIM_WINDOW = np.outer(_w, _w)


def _as_plane(x) -> np.ndarray:
    if isinstance(x, Frame):
        x = x.samples
    return np.asarray(x, dtype=np.float64)


def mse(a, b) -> float:
    pa, pb = _as_plane(a), _as_plane(b)
    if pa.shape != pb.shape:
        raise ValueError(f"shape mismatch {pa.shape} vs {pb.shape}")
    return float(np.mean((pa - pb) ** 2))


def psnr(a, b) -> float:
    """10*log10(255^2 / MSE); identical inputs report +inf."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / err)


def _window_stats(x: np.ndarray, y: np.ndarray):
    mu_x = fftconvolve(x, MSSSIM_WINDOW, mode="valid")
    mu_y = fftconvolve(y, MSSSIM_WINDOW, mode="valid")
    sxx = fftconvolve(x * x, MSSSIM_WINDOW, mode="valid") - mu_x * mu_x
    syy = fftconvolve(y * y, MSSSIM_WINDOW, mode="valid") - mu_y * mu_y
    sxy = fftconvolve(x * y, MSSSIM_WINDOW, mode="valid") - mu_x * mu_y
    return mu_x, mu_y, sxx, syy, sxy


def _downsample2(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    x = x[: h - h % 2, : w - w % 2]
    return (x[0::2, 0::2] + x[0::2, 1::2] + x[1::2, 0::2] + x[1::2, 1::2]) / 4.0


def ms_ssim(a, b) -> float:
    """Multi-scale structural similarity in (0, 1]; exactly 1.0 for
    identical inputs."""
    x, y = _as_plane(a), _as_plane(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < MSSSIM_MIN_DIM:
        raise ValueError(
            f"image too small for 5 scales: min dim {min(x.shape)} < {MSSSIM_MIN_DIM}"
        )
    value = 1.0
    for scale, weight in enumerate(MSSSIM_WEIGHTS):
        mu_x, mu_y, sxx, syy, sxy = _window_stats(x, y)
        cs = np.mean((2.0 * sxy + _C2) / (sxx + syy + _C2))
        cs = max(cs, np.finfo(np.float64).tiny)
        if scale == len(MSSSIM_WEIGHTS) - 1:
            lum = np.mean(
                (2.0 * mu_x * mu_y + _C1) / (mu_x * mu_x + mu_y * mu_y + _C1)
            )
            value *= max(lum, np.finfo(np.float64).tiny) ** weight
        value *= cs ** weight
        if scale != len(MSSSIM_WEIGHTS) - 1:
            x, y = _downsample2(x), _downsample2(y)
    return min(float(value), 1.0)


METRIC_KINDS = ("PSNR", "MS_SSIM", "MAP")


@dataclass(frozen=True, eq=False)
class RDCurve:
    """Rate-quality points, sorted by rate; rates strictly increasing."""

    metric_kind: str
    points: tuple  # ((rate_bpp, quality), ...)

    def __post_init__(self):
        if self.metric_kind not in METRIC_KINDS:
            raise ValueError(f"metric_kind must be one of {METRIC_KINDS}")
        pts = tuple(sorted((float(r), float(q)) for r, q in self.points))
        if len(pts) < 4:
            raise ValueError("an RD curve needs at least 4 points")
        rates = [r for r, _ in pts]
        if any(r <= 0 for r in rates):
            raise ValueError("rates must be positive")
        if any(r1 >= r2 for r1, r2 in zip(rates, rates[1:])):
            raise ValueError("duplicate rates in RD curve")
        object.__setattr__(self, "points", pts)

    @property
    def rates(self) -> np.ndarray:
        return np.array([r for r, _ in self.points])

    @property
    def qualities(self) -> np.ndarray:
        return np.array([q for _, q in self.points])


@dataclass(frozen=True)
class CurveDiagnosis:
    monotonic: bool
    concave_in_log_rate: bool
    quality_range: tuple

    def overlap_with(self, other) -> tuple | None:
        """Overlapping quality interval with another curve/diagnosis, or None."""
        lo2, hi2 = other.quality_range if isinstance(other, CurveDiagnosis) \
            else (float(other.qualities.min()), float(other.qualities.max()))
        lo = max(self.quality_range[0], lo2)
        hi = min(self.quality_range[1], hi2)
        return (lo, hi) if lo < hi else None


def validate_curve(c: RDCurve) -> CurveDiagnosis:
    q = c.qualities
    log_r = np.log10(c.rates)
    monotonic = bool(np.all(np.diff(q) > 0))
    slopes = np.diff(q) / np.diff(log_r)
    concave = bool(np.all(np.diff(slopes) <= 1e-9))
    return CurveDiagnosis(
        monotonic=monotonic,
        concave_in_log_rate=concave,
        quality_range=(float(q.min()), float(q.max())),
    )


@dataclass(frozen=True)
class BDResult:
    """Relative rate difference in percent; negative means the test curve
    spends fewer bits than the anchor at equal quality."""

    percent: float


def bd_rate(anchor: RDCurve, test: RDCurve) -> BDResult:
    diag_a, diag_t = validate_curve(anchor), validate_curve(test)
    if not diag_a.monotonic:
        raise CurveError("anchor curve is not monotonic", diagnosis=diag_a)
    if not diag_t.monotonic:
        raise CurveError("test curve is not monotonic", diagnosis=diag_t)
    overlap = diag_a.overlap_with(diag_t)
    if overlap is None:
        raise CurveError("curves have no overlapping quality range",
                         diagnosis=diag_a)
    lo, hi = overlap
    fit_a = PchipInterpolator(anchor.qualities, np.log10(anchor.rates))
    fit_t = PchipInterpolator(test.qualities, np.log10(test.rates))
    int_a = fit_a.antiderivative()
    int_t = fit_t.antiderivative()
    mean_diff = ((int_t(hi) - int_t(lo)) - (int_a(hi) - int_a(lo))) / (hi - lo)
    return BDResult(percent=(10.0 ** mean_diff - 1.0) * 100.0)


@dataclass(frozen=True)
class BreakEvenInput:
    """Relative BD rates vs one anchor: machine task and human task.
    A BD of -0.1345 means the layered system spends 0.8655x the bits."""

    machine_bd: float
    human_bd: float


def break_even(inp: BreakEvenInput) -> float:
    """Largest time fraction t_h of reconstruction use at which the layered
    system still spends no more bits than the anchor:
    (1 - t_h) * g + t_h * h <= 1 with g, h the machine/human rate factors."""
    g = 1.0 + inp.machine_bd
    h = 1.0 + inp.human_bd
    if g <= 0 or h <= 0:
        raise ValueError("rate factors must be positive")
    if h <= 1.0:
        return 1.0  # human path is no worse than the anchor: always wins
    if g >= 1.0:
        return 0.0  # no machine-side gain to trade away
    return (1.0 - g) / (h - g)


@dataclass(frozen=True, eq=False)
class MarkovChain:
    """Finite chain X -> Y -> Xhat -> T: source pmf plus three transition
    matrices, rows summing to 1 within 1e-12, alphabets of at most 8 states."""

    p_x: np.ndarray
    x_to_y: np.ndarray
    y_to_xhat: np.ndarray
    xhat_to_t: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_x, dtype=np.float64)
        mats = [np.asarray(m, dtype=np.float64)
                for m in (self.x_to_y, self.y_to_xhat, self.xhat_to_t)]
        if p.ndim != 1 or abs(p.sum() - 1.0) > 1e-12 or np.any(p < 0):
            raise ValueError("p_x must be a probability vector")
        dims = [len(p)]
        for m in mats:
            if m.ndim != 2 or np.any(m < 0):
                raise ValueError("transition matrices must be non-negative 2-D")
            if np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
                raise ValueError("transition matrix rows must sum to 1")
            dims.append(m.shape[1])
        if any(d > 8 or d < 1 for d in dims):
            raise ValueError("alphabets must have 1..8 states")
        if mats[0].shape[0] != len(p) or mats[1].shape[0] != mats[0].shape[1] \
                or mats[2].shape[0] != mats[1].shape[1]:
            raise ValueError("chain stage dimensions do not line up")
        object.__setattr__(self, "p_x", p)
        for name, m in zip(("x_to_y", "y_to_xhat", "xhat_to_t"), mats):
            object.__setattr__(self, name, m)


def mutual_information(joint: np.ndarray) -> float:
    """I(A;B) in bits by brute-force summation over a joint pmf."""
    denom = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    mask = joint > 0
    return float(np.sum(joint[mask] * np.log2(joint[mask] / denom[mask])))


@dataclass(frozen=True)
class DpiResult:
    i_y_xhat: float
    i_y_t: float
    holds: bool


def dpi_check(chain: MarkovChain) -> DpiResult:
    """I(Y;Xhat) >= I(Y;T) for every Markov chain; a violation is a bug."""
    p_y = chain.p_x @ chain.x_to_y
    joint_y_xhat = p_y[:, None] * chain.y_to_xhat
    joint_y_t = joint_y_xhat @ chain.xhat_to_t
    i_y_xhat = mutual_information(joint_y_xhat)
    i_y_t = mutual_information(joint_y_t)
    return DpiResult(i_y_xhat, i_y_t, holds=i_y_xhat >= i_y_t - 1e-9)


RD_CSV_FIELDS = ("rate_bpp", "quality")


def save_rd_csv(curve: RDCurve, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RD_CSV_FIELDS)
        for r, q in curve.points:
            writer.writerow([f"{r:.8f}", f"{q:.8f}"])


def load_rd_csv(path, metric_kind: str) -> RDCurve:
    import csv
    points = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            try:
                points.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                continue  # header or blank
    return RDCurve(metric_kind=metric_kind, points=tuple(points))
