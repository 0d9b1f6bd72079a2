"""Axis-aligned bounding-box algebra: IoU, CIoU, convex hulls, greedy NMS.

Boxes are stored in corner form (x_min, y_min, x_max, y_max); the center
form (x_c, y_c, w, h) is a derived view. All operations are pure functions
over immutable inputs and are safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

MODALITIES = ("vis", "ir", "fused")
SCALES = ("s80", "s40", "s20")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in corner form, in pixel units."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError(f"invalid box corners: {self!r}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def to_center(self) -> tuple[float, float, float, float]:
        """Center-form view (x_c, y_c, w, h)."""
        return (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
            self.width,
            self.height,
        )

    @classmethod
    def from_center(cls, x_c: float, y_c: float, w: float, h: float) -> "BBox":
        """Build a box from center form."""
        return cls(x_c - w / 2.0, y_c - h / 2.0, x_c + w / 2.0, y_c + h / 2.0)

    def contains(self, other: "BBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and self.x_max >= other.x_max
            and self.y_max >= other.y_max
        )


@dataclass(frozen=True)
class Detection:
    """One detector output: box, confidence, and provenance tags.

    ``strategy`` is set by post-processing to record which output strategy
    produced the detection; raw detector outputs leave it None.
    """

    box: BBox
    score: float
    modality: str
    scale_id: str
    frame_id: str
    strategy: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.scale_id not in SCALES:
            raise ValueError(f"unknown scale_id {self.scale_id!r}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes.

    Returns a value in [0, 1]; 0.0 for disjoint boxes and, by convention,
    when the union is empty (two degenerate boxes).
    """
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = iw * ih if (iw > 0.0 and ih > 0.0) else 0.0
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def convex_hull(a: BBox, b: BBox) -> BBox:
    """Smallest axis-aligned box containing both inputs."""
    return BBox(
        min(a.x_min, b.x_min),
        min(a.y_min, b.y_min),
        max(a.x_max, b.x_max),
        max(a.y_max, b.y_max),
    )


def ciou(pred: BBox, gt: BBox) -> float:
    """Complete IoU between a predicted box and a reference box.

    IoU penalized by the squared center distance over the squared enclosing
    diagonal and by an aspect-ratio consistency term:

        ciou = iou - rho2 / c2 - alpha * v
        v = (4 / pi^2) * (atan(w_gt / h_gt) - atan(w_pred / h_pred))^2
        alpha = v / ((1 - iou) + v)

    Both boxes need positive width and height for the aspect-ratio term.
    Identical boxes score exactly 1.0; the result never exceeds the IoU.
    """
    if min(pred.width, pred.height, gt.width, gt.height) <= 0.0:
        raise ValueError("degenerate aspect ratio")
    overlap = iou(pred, gt)
    hull = convex_hull(pred, gt)
    dx = (pred.x_min + pred.x_max - gt.x_min - gt.x_max) / 2.0
    dy = (pred.y_min + pred.y_max - gt.y_min - gt.y_max) / 2.0
    rho2 = dx * dx + dy * dy
    c2 = hull.width * hull.width + hull.height * hull.height
    v = (4.0 / math.pi**2) * (
        math.atan(gt.width / gt.height) - math.atan(pred.width / pred.height)
    ) ** 2
    # v == 0 makes (1 - iou) + v vanish only for identical shapes at iou 1,
    # where the whole term is zero anyway.
    aspect_term = v * v / ((1.0 - overlap) + v) if v > 0.0 else 0.0
    return overlap - rho2 / c2 - aspect_term


def nms(dets: Sequence[Detection], iou_threshold: float = 0.45) -> list[Detection]:
    """Greedy class-agnostic non-maximum suppression.

    Detections are visited in descending score order (ties keep the input
    order); a detection is suppressed when its IoU with an already kept,
    higher-scoring detection strictly exceeds ``iou_threshold``. The result
    is sorted by descending score and rerunning on its own output is the
    identity.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    ordered = sorted(dets, key=lambda d: -d.score)
    kept: list[Detection] = []
    for det in ordered:
        if all(iou(det.box, k.box) <= iou_threshold for k in kept):
            kept.append(det)
    return kept
