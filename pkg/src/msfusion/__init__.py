"""Deterministic numpy core for multispectral pedestrian detection.

The package covers four areas: bounding-box geometry (IoU, CIoU, hulls,
NMS), the strip-convolution fusion block forward pass, cross-modal
reliability scoring with a KL-divergence alignment loss, and detection
post-processing plus log-average miss-rate evaluation.
"""

from .balance import (
    DEFAULT_TOP_N,
    ReliabilityReport,
    RoiFeature,
    best_ciou_scores,
    cosine_matrix,
    kl_loss,
    kl_rowwise,
    modality_alignment_loss,
    relation_matrix,
    reliability,
    roi_align,
    thermal_reliability_percentage,
    total_loss,
)
from .containers import TENSORS_MAGIC, WEIGHTS_MAGIC, load_tensors, save_tensors
from .evaluation import (
    STANDARD_SETTINGS,
    EvalSetting,
    FrameRecord,
    GroundTruthBox,
    MatchResult,
    apply_setting,
    evaluate_matrix,
    log_average_miss_rate,
    match_frame,
    miss_rate_curve,
)
from .fusion import (
    FusionConfig,
    FusionWeights,
    cascade_strip_mix,
    channel_mix,
    conv2d_same,
    deinterleave_rows,
    dws_conv,
    fusion_forward,
    gated_strip_mix,
    gelu,
    global_response_norm,
    interleave_rows,
    layer_norm,
    merge_patches,
    pointwise_affine,
    softmax,
    split_patches,
    strip_conv,
    temporal_adaptive_conv,
    temporal_fuse,
)
from .geometry import BBox, Detection, ciou, convex_hull, iou, nms
from .ingest import (
    Manifest,
    ManifestFrame,
    RunConfig,
    attach_detections,
    format_results,
    ingest_annotations,
    ingest_detections,
    load_config,
    load_manifest,
    run_config_from_mapping,
    save_manifest,
    serialize_annotations,
    serialize_detections,
)
from .postprocess import (
    FusedDetection,
    PostprocessConfig,
    filter_by_score,
    fuse_scale,
    run_strategy,
)

__version__ = "0.1.0"
