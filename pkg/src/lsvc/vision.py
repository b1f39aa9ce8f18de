"""Machine-vision branch: task feature extraction, blob detection, and mAP.

The latent-to-feature transform is a fixed proxy for a learned mapping:
reconstruct pixels from the base channels alone, smooth with a 5x5 Gaussian
(sigma 1), and decimate by 4. The detector thresholds contrast against the
median background and groups 8-connected components; the evaluator computes
average precision with all-points interpolation at a fixed IoU threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .bitstream import StreamHeader
from .frames import Frame, GroundTruthBox
from .transform import ChannelBand, synthesis, zero_fill_enhancement

DECIMATE = 4

_g = np.exp(-0.5 * (np.arange(-2, 3, dtype=np.float64) ** 2))
GAUSS5 = _g / _g.sum()


@dataclass(frozen=True, eq=False)
class TaskFeature:
    """Feature plane at quarter resolution; provenance records its source."""

    plane: np.ndarray
    provenance: str  # "from_input" | "from_base_latent"

    def __post_init__(self):
        p = np.asarray(self.plane, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("feature plane must be 2-dimensional")
        object.__setattr__(self, "plane", p)


@dataclass(frozen=True)
class Detection:
    poc: int
    class_id: int
    x: int
    y: int
    w: int
    h: int
    score: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("detection must have positive size")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")


@dataclass(frozen=True)
class DetectParams:
    threshold: float = 10.0  # contrast vs the median background, luma units
    min_area: int = 4        # feature-plane cells


@dataclass(frozen=True)
class APResult:
    per_class: dict
    map: float
    iou_threshold: float


def _feature_from_pixels(samples: np.ndarray) -> np.ndarray:
    plane = samples.astype(np.float64)
    plane = ndimage.correlate1d(plane, GAUSS5, axis=0, mode="reflect")
    plane = ndimage.correlate1d(plane, GAUSS5, axis=1, mode="reflect")
    return plane[::DECIMATE, ::DECIMATE]


def lst(base: ChannelBand, header: StreamHeader) -> TaskFeature:
    """Base channels -> task feature (enhancement zero-filled)."""
    if (base.grid_h, base.grid_w) != (header.grid_h, header.grid_w):
        raise ValueError("base band geometry does not match the stream header")
    recon = synthesis(zero_fill_enhancement(base))
    return TaskFeature(_feature_from_pixels(recon.samples),
                       provenance="from_base_latent")


def task_feature_reference(frame: Frame) -> TaskFeature:
    """The same operator applied to the uncompressed frame."""
    return TaskFeature(_feature_from_pixels(frame.samples),
                       provenance="from_input")


def detect(feature: TaskFeature, params: DetectParams = DetectParams()) -> list[Detection]:
    """Median-contrast thresholding + 8-connected components, boxes scaled
    back to frame coordinates. Returns [] when nothing clears the threshold."""
    plane = feature.plane
    contrast = np.abs(plane - np.median(plane))
    mask = contrast > params.threshold
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    detections = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        component = labels[sl] == idx
        area = int(component.sum())
        if area < params.min_area:
            continue
        mean_contrast = float(contrast[sl][component].mean())
        score = min(1.0, mean_contrast / (2.0 * params.threshold))
        y0, x0 = sl[0].start, sl[1].start
        h, w = sl[0].stop - y0, sl[1].stop - x0
        detections.append(Detection(
            poc=0, class_id=0,
            x=x0 * DECIMATE, y=y0 * DECIMATE,
            w=w * DECIMATE, h=h * DECIMATE,
            score=score,
        ))
    return detections


def detect_frame(feature: TaskFeature, poc: int,
                 params: DetectParams = DetectParams()) -> list[Detection]:
    """detect() with the frame's POC stamped on each detection."""
    return [Detection(poc, d.class_id, d.x, d.y, d.w, d.h, d.score)
            for d in detect(feature, params)]


def iou(ax, ay, aw, ah, bx, by, bw, bh) -> float:
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def box_iou(det: Detection, gt: GroundTruthBox) -> float:
    return iou(det.x, det.y, det.w, det.h, gt.x, gt.y, gt.w, gt.h)


def _average_precision(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """Area under the PR curve, all-points interpolation."""
    mrec = np.concatenate([[0.0], recalls, [1.0]])
    mpre = np.concatenate([[0.0], precisions, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


def evaluate_map(detections, ground_truth, iou_threshold: float = 0.5) -> APResult:
    """Greedy one-to-one matching at IoU >= threshold, per class, then the
    mean AP over classes that have ground truth. Errors on empty ground truth
    (mAP is undefined)."""
    gts = list(ground_truth)
    if not gts:
        raise ValueError("mAP is undefined without ground-truth boxes")
    classes = sorted({g.class_id for g in gts})
    per_class = {}
    for cls in classes:
        cls_gts = [g for g in gts if g.class_id == cls]
        cls_dets = sorted(
            (d for d in detections if d.class_id == cls),
            key=lambda d: (-d.score, d.poc, d.x, d.y),
        )
        matched = set()
        tp = np.zeros(len(cls_dets))
        for i, det in enumerate(cls_dets):
            best, best_iou = None, 0.0
            for j, gt in enumerate(cls_gts):
                if j in matched or gt.poc != det.poc:
                    continue
                v = box_iou(det, gt)
                if v > best_iou:
                    best, best_iou = j, v
            if best is not None and best_iou >= iou_threshold:
                matched.add(best)
                tp[i] = 1.0
        if len(cls_dets) == 0:
            per_class[cls] = 0.0
            continue
        cum_tp = np.cumsum(tp)
        recalls = cum_tp / len(cls_gts)
        precisions = cum_tp / np.arange(1, len(cls_dets) + 1)
        per_class[cls] = _average_precision(recalls, precisions)
    mean_ap = float(np.mean([per_class[c] for c in classes]))
    return APResult(per_class=per_class, map=mean_ap, iou_threshold=iou_threshold)


DETECTION_CSV_FIELDS = ("poc", "class_id", "x", "y", "w", "h", "score")


def save_detections_csv(detections, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DETECTION_CSV_FIELDS)
        for d in detections:
            writer.writerow([d.poc, d.class_id, d.x, d.y, d.w, d.h,
                             f"{d.score:.6f}"])


def load_detections_csv(path) -> list[Detection]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip().lstrip("-").isdigit():
                continue
            poc, class_id, x, y, w, h = (int(v) for v in row[:6])
            out.append(Detection(poc, class_id, x, y, w, h, float(row[6])))
    return out
