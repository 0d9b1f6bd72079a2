"""Cross-modal reliability scoring and KL-divergence feature alignment.

Reliability of each modality is the mean of its top-n CIoU scores against
ground truth; the more reliable modality anchors RoI feature extraction,
and a directed row-wise KL divergence between the two relation matrices
pushes the weaker feature distribution toward the stronger one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import BBox, Detection, ciou

DEFAULT_TOP_N = 300


@dataclass(frozen=True)
class ReliabilityReport:
    """Per-instance modality reliabilities and the resulting reference.

    The reference is thermal exactly when r_t > r_v (strict); ties go to
    visible. ``n_used`` is the number of reference-modality boxes available
    for downstream RoI extraction.
    """

    r_v: float
    r_t: float
    reference_modality: str
    n_used: int


@dataclass(frozen=True)
class RoiFeature:
    """Flattened RoI feature vector of length 9 * F * C for one box."""

    values: np.ndarray
    box_id: int = 0


def best_ciou_scores(dets: Sequence[Detection], gts: Sequence[BBox]) -> np.ndarray:
    """Best CIoU of each detection against any ground-truth box."""
    scores = np.empty(len(dets), dtype=np.float64)
    for i, det in enumerate(dets):
        scores[i] = max(ciou(det.box, gt) for gt in gts)
    return scores


def _top_mean(scores: np.ndarray, n_top: int) -> tuple[float, int]:
    # Mean of the n_top best scores; fewer candidates average what exists.
    if scores.size == 0:
        return 0.0, 0
    k = min(n_top, scores.size)
    top = np.sort(scores)[::-1][:k]
    return float(top.mean()), k


def reliability(
    vis_dets: Sequence[Detection],
    thermal_dets: Sequence[Detection],
    gt_boxes: Sequence[BBox],
    n_top: int = DEFAULT_TOP_N,
) -> ReliabilityReport:
    """Score both modalities against ground truth and pick the reference.

    Each detection is scored by its best CIoU over the ground-truth boxes;
    the top ``n_top`` scores per modality are averaged (all available ones
    when fewer exist; 0.0 for a modality with no detections).
    """
    if n_top < 1:
        raise ValueError(f"n_top must be >= 1, got {n_top}")
    if not gt_boxes:
        raise ValueError("no reference objects")
    r_v, k_v = _top_mean(best_ciou_scores(vis_dets, gt_boxes), n_top)
    r_t, k_t = _top_mean(best_ciou_scores(thermal_dets, gt_boxes), n_top)
    thermal_ref = r_t > r_v
    return ReliabilityReport(
        r_v=r_v,
        r_t=r_t,
        reference_modality="ir" if thermal_ref else "vis",
        n_used=k_t if thermal_ref else k_v,
    )


def _bilinear(feature_map: np.ndarray, y: float, x: float) -> np.ndarray:
    # feature_map: (F, C, H, W); returns (F, C). Half-pixel aligned lattice:
    # the value of pixel (i, j) sits at continuous coordinate (j+0.5, i+0.5).
    height, width = feature_map.shape[2:]
    if y < -1.0 or y > height or x < -1.0 or x > width:
        return np.zeros(feature_map.shape[:2], dtype=np.float64)
    y = max(y, 0.0)
    x = max(x, 0.0)
    y_low = int(y)
    x_low = int(x)
    if y_low >= height - 1:
        y_low = y_high = height - 1
        y = float(y_low)
    else:
        y_high = y_low + 1
    if x_low >= width - 1:
        x_low = x_high = width - 1
        x = float(x_low)
    else:
        x_high = x_low + 1
    ly, lx = y - y_low, x - x_low
    hy, hx = 1.0 - ly, 1.0 - lx
    return (
        hy * hx * feature_map[:, :, y_low, x_low]
        + hy * lx * feature_map[:, :, y_low, x_high]
        + ly * hx * feature_map[:, :, y_high, x_low]
        + ly * lx * feature_map[:, :, y_high, x_high]
    )


def roi_align(
    feature_map: np.ndarray,
    box: BBox,
    box_id: int = 0,
    output_size: int = 3,
    sampling_ratio: int = 2,
) -> RoiFeature:
    """Quantization-free RoI pooling of a (F, C, H, W) map to a 3x3 grid.

    The box, given in feature-map coordinates with positive area, is divided
    into output_size^2 bins; each bin averages sampling_ratio^2 bilinear
    samples placed at the bin's interior fractions (quarter points for the
    default 2x2), using half-pixel-aligned coordinates. The grid is
    flattened row-major to a vector of length output_size^2 * F * C.
    """
    feature_map = np.asarray(feature_map, dtype=np.float64)
    if feature_map.ndim != 4:
        raise ValueError(
            f"feature map: expected (F, C, H, W), got shape {feature_map.shape}"
        )
    if box.area <= 0.0:
        raise ValueError(f"RoI box must have positive area, got {box!r}")
    f, c = feature_map.shape[:2]
    # Shift by half a pixel so box coordinates line up with pixel centers.
    x0 = box.x_min - 0.5
    y0 = box.y_min - 0.5
    bin_w = box.width / output_size
    bin_h = box.height / output_size
    grid = np.empty((f, c, output_size, output_size), dtype=np.float64)
    for by in range(output_size):
        for bx in range(output_size):
            acc = np.zeros((f, c), dtype=np.float64)
            for iy in range(sampling_ratio):
                sy = y0 + (by + (iy + 0.5) / sampling_ratio) * bin_h
                for ix in range(sampling_ratio):
                    sx = x0 + (bx + (ix + 0.5) / sampling_ratio) * bin_w
                    acc += _bilinear(feature_map, sy, sx)
            grid[:, :, by, bx] = acc / (sampling_ratio * sampling_ratio)
    return RoiFeature(values=grid.reshape(-1), box_id=box_id)


def cosine_matrix(features: Sequence[RoiFeature | np.ndarray]) -> np.ndarray:
    """Pairwise cosine similarities of the feature vectors.

    The result is symmetric with a unit diagonal (both enforced exactly
    against round-off). A zero-norm vector is an error.
    """
    if len(features) < 1:
        raise ValueError("need at least one RoI feature")
    vectors = np.stack(
        [np.asarray(getattr(f, "values", f), dtype=np.float64).ravel() for f in features]
    )
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm RoI feature")
    gram = vectors @ vectors.T
    cos = gram / np.outer(norms, norms)
    cos = (cos + cos.T) / 2.0
    np.fill_diagonal(cos, 1.0)
    return cos


def relation_matrix(cos: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a similarity matrix, max-subtracted for stability.

    Every row of the result sums to 1 and every entry lies in (0, 1).
    """
    cos = np.asarray(cos, dtype=np.float64)
    if cos.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {cos.shape}")
    if not np.all(np.isfinite(cos)):
        raise ValueError("similarity matrix has non-finite entries")
    shifted = cos - cos.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def kl_rowwise(p: np.ndarray, q: np.ndarray) -> float:
    """Sum over rows of KL(p_i || q_i) with natural logarithms.

    Zero entries of p contribute nothing (0 * ln 0 = 0 convention); q must
    be strictly positive, which row-softmax output guarantees.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    if np.any(q <= 0.0):
        raise ValueError("q entries must be strictly positive")
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_loss(report: ReliabilityReport, m_v: np.ndarray, m_t: np.ndarray) -> float:
    """Directed alignment loss: KL from the reliable relation matrix to the
    other one. Thermal reference (r_t > r_v) gives KL(M_t || M_v), otherwise
    KL(M_v || M_t)."""
    m_v = np.asarray(m_v, dtype=np.float64)
    m_t = np.asarray(m_t, dtype=np.float64)
    if m_v.shape != m_t.shape:
        raise ValueError(f"dimension mismatch: {m_v.shape} vs {m_t.shape}")
    if report.r_t > report.r_v:
        return kl_rowwise(m_t, m_v)
    return kl_rowwise(m_v, m_t)


def total_loss(
    l_reg_v: float,
    l_reg_t: float,
    l_obj_v: float,
    l_obj_t: float,
    l_kl: float,
    beta: float,
) -> float:
    """Total training objective: the four detector losses plus beta * l_kl.

    The detector losses are opaque scalars produced elsewhere.
    """
    terms = (l_reg_v, l_reg_t, l_obj_v, l_obj_t, l_kl)
    if not all(math.isfinite(t) for t in terms):
        raise ValueError("loss terms must be finite")
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return l_reg_v + l_reg_t + l_obj_v + l_obj_t + beta * l_kl


def modality_alignment_loss(
    vis_dets: Sequence[Detection],
    thermal_dets: Sequence[Detection],
    gt_boxes: Sequence[BBox],
    vis_features: np.ndarray,
    thermal_features: np.ndarray,
    n_top: int = DEFAULT_TOP_N,
    stride: float = 1.0,
) -> tuple[ReliabilityReport, float]:
    """Full single-scale alignment pipeline.

    Scores reliability, takes the reference modality's top boxes, scales
    them by ``stride`` into feature-map coordinates, extracts RoI features
    from both maps, builds the relation matrices and returns the directed
    KL loss together with the reliability report.
    """
    report = reliability(vis_dets, thermal_dets, gt_boxes, n_top)
    reference = thermal_dets if report.reference_modality == "ir" else vis_dets
    if not reference:
        raise ValueError("no reference detections")
    scores = best_ciou_scores(reference, gt_boxes)
    order = np.argsort(-scores, kind="stable")[: report.n_used]
    feats_v: list[RoiFeature] = []
    feats_t: list[RoiFeature] = []
    for rank, idx in enumerate(order):
        box = reference[int(idx)].box
        scaled = BBox(
            box.x_min / stride, box.y_min / stride, box.x_max / stride, box.y_max / stride
        )
        feats_v.append(roi_align(vis_features, scaled, box_id=rank))
        feats_t.append(roi_align(thermal_features, scaled, box_id=rank))
    m_v = relation_matrix(cosine_matrix(feats_v))
    m_t = relation_matrix(cosine_matrix(feats_t))
    return report, kl_loss(report, m_v, m_t)


def thermal_reliability_percentage(
    reports: Iterable[Optional[ReliabilityReport]],
) -> float:
    """Share of valid instances where the thermal modality won.

    ``reports`` holds one entry per image and scale; None marks instances
    where neither modality overlapped ground truth, which are excluded.
    The visible percentage is the complement (100 minus the result).
    """
    valid = 0
    thermal = 0
    for report in reports:
        if report is None:
            continue
        valid += 1
        if report.r_t > report.r_v:
            thermal += 1
    if valid == 0:
        raise ValueError("no valid instances")
    return 100.0 * thermal / valid
