"""Pixel-domain types, raw video I/O, and the synthetic scene generator.

Frames are single-plane 8-bit luma with dimensions locked to multiples of
16 so every frame tiles exactly into transform blocks. Raw files are plain
concatenated planes (row-major, top-left origin, one byte per sample) with
dimensions supplied out of band.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BLOCK = 16


def _locked(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    """One luma picture. `samples` has shape (height, width), dtype uint8."""

    width: int
    height: int
    samples: np.ndarray
    poc: int = 0
    bit_depth: int = 8

    def __post_init__(self):
        if self.bit_depth != 8:
            raise ValueError("only 8-bit frames are supported")
        if self.width % BLOCK or self.height % BLOCK:
            raise ValueError(
                f"frame dimensions must be multiples of {BLOCK}, "
                f"got {self.width}x{self.height}"
            )
        if self.poc < 0:
            raise ValueError("poc must be non-negative")
        s = np.asarray(self.samples)
        if s.dtype != np.uint8:
            raise ValueError("samples must be uint8")
        if s.shape != (self.height, self.width):
            raise ValueError(
                f"samples shape {s.shape} does not match "
                f"{self.height}x{self.width}"
            )
        object.__setattr__(self, "samples", _locked(s))


def frame_from_array(a: np.ndarray, poc: int = 0) -> Frame:
    a = np.asarray(a, dtype=np.uint8)
    h, w = a.shape
    return Frame(width=w, height=h, samples=a, poc=poc)


@dataclass(frozen=True, eq=False)
class Sequence:
    """Ordered frames sharing one geometry; POCs run 0..n-1 in display order."""

    frames: tuple
    name: str = "sequence"
    frame_rate: float = 30.0

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a sequence must contain at least one frame")
        w, h = frames[0].width, frames[0].height
        for i, f in enumerate(frames):
            if f.poc != i:
                raise ValueError(f"frame {i} carries poc {f.poc}; expected {i}")
            if (f.width, f.height) != (w, h):
                raise ValueError("all frames in a sequence must share dimensions")
        object.__setattr__(self, "frames", frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class GroundTruthBox:
    """Axis-aligned object box on one frame, in pixel coordinates."""

    poc: int
    class_id: int
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box must have positive width and height")
        if self.x < 0 or self.y < 0:
            raise ValueError("box must lie inside the frame")


@dataclass(frozen=True)
class MovingObject:
    """One rendered object: hard-edged shape on a linear trajectory."""

    shape: str  # "rectangle" | "ellipse"
    width: int
    height: int
    intensity: int
    x0: float
    y0: float
    vx: float = 0.0
    vy: float = 0.0
    class_id: int = 0

    def __post_init__(self):
        if self.shape not in ("rectangle", "ellipse"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("object must have positive size")
        if not 0 <= self.intensity <= 255:
            raise ValueError("intensity must be a luma value in [0, 255]")

    def position(self, t: int) -> tuple[int, int]:
        return round(self.x0 + self.vx * t), round(self.y0 + self.vy * t)


@dataclass(frozen=True)
class SceneSpec:
    """Deterministic synthetic scene: same spec + seed => identical output."""

    width: int
    height: int
    frame_count: int
    objects: tuple = ()
    background_level: int = 96
    noise_sigma: float = 0.0
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.frame_count <= 0:
            raise ValueError("frame_count must be positive")
        if self.width % BLOCK or self.height % BLOCK:
            raise ValueError(f"scene dimensions must be multiples of {BLOCK}")
        if not 0 <= self.background_level <= 255:
            raise ValueError("background_level must be in [0, 255]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def _render_object(canvas: np.ndarray, obj: MovingObject, t: int):
    """Draw obj into canvas; returns its clipped box or None if fully outside."""
    h, w = canvas.shape
    x, y = obj.position(t)
    x1, y1 = x + obj.width, y + obj.height
    cx0, cy0 = max(x, 0), max(y, 0)
    cx1, cy1 = min(x1, w), min(y1, h)
    if cx0 >= cx1 or cy0 >= cy1:
        return None
    if obj.shape == "rectangle":
        canvas[cy0:cy1, cx0:cx1] = obj.intensity
    else:
        yy, xx = np.mgrid[cy0:cy1, cx0:cx1]
        # ellipse inscribed in the object's (unclipped) bounding box
        rx, ry = obj.width / 2.0, obj.height / 2.0
        mask = (((xx - (x + rx - 0.5)) / rx) ** 2
                + ((yy - (y + ry - 0.5)) / ry) ** 2) <= 1.0
        canvas[cy0:cy1, cx0:cx1][mask] = obj.intensity
    return cx0, cy0, cx1 - cx0, cy1 - cy0


def generate_synthetic(spec: SceneSpec) -> tuple[Sequence, list[GroundTruthBox]]:
    """Render the scene; returns the sequence and per-frame ground-truth boxes.

    Objects fully outside the frame are dropped (no box emitted); partially
    visible objects contribute their clipped box. Pure function of the spec.
    """
    for obj in spec.objects:
        x, y = obj.position(0)
        if x < 0 or y < 0 or x + obj.width > spec.width or y + obj.height > spec.height:
            raise ValueError("every object must fit inside the frame at t=0")
    rng = np.random.default_rng(spec.seed)
    frames = []
    boxes: list[GroundTruthBox] = []
    for t in range(spec.frame_count):
        canvas = np.full((spec.height, spec.width), float(spec.background_level))
        for obj in spec.objects:
            clipped = _render_object(canvas, obj, t)
            if clipped is not None:
                bx, by, bw, bh = clipped
                boxes.append(GroundTruthBox(t, obj.class_id, bx, by, bw, bh))
        if spec.noise_sigma > 0:
            canvas += rng.normal(0.0, spec.noise_sigma, canvas.shape)
        samples = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
        frames.append(Frame(spec.width, spec.height, samples, poc=t))
    return Sequence(tuple(frames), name=spec.name), boxes


def load_raw(path, width: int, height: int, name: str | None = None) -> Sequence:
    """Read a headerless 8-bit raw file; size must tile exactly into frames."""
    data = Path(path).read_bytes()
    frame_bytes = width * height
    if len(data) == 0 or len(data) % frame_bytes:
        raise ValueError(
            f"{path}: {len(data)} bytes is not a positive multiple of "
            f"{width}x{height}"
        )
    n = len(data) // frame_bytes
    arr = np.frombuffer(data, dtype=np.uint8).reshape(n, height, width)
    frames = tuple(Frame(width, height, arr[i], poc=i) for i in range(n))
    return Sequence(frames, name=name or Path(path).stem)


def save_raw(seq: Sequence, path) -> None:
    with open(path, "wb") as fh:
        for f in seq.frames:
            fh.write(f.samples.tobytes())


BOX_CSV_FIELDS = ("poc", "class_id", "x", "y", "w", "h")


def save_boxes_csv(boxes, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BOX_CSV_FIELDS)
        for b in boxes:
            writer.writerow([b.poc, b.class_id, b.x, b.y, b.w, b.h])


def load_boxes_csv(path) -> list[GroundTruthBox]:
    boxes = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip().lstrip("-").isdigit():
                continue  # header or blank
            poc, class_id, x, y, w, h = (int(v) for v in row[:6])
            boxes.append(GroundTruthBox(poc, class_id, x, y, w, h))
    return boxes
