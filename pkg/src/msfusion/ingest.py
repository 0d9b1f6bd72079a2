"""Dataset and detection file ingestion, run configuration, results output.

Formats handled here:

* annotations: bbGt text, one file per frame; header ``% bbGt version=3``,
  body lines ``label x y w h occlusion ...`` with pixel units and occlusion
  codes 0/1/2 for none/partial/heavy. Labels other than ``person`` become
  ignore regions.
* detections: one per line, ``frame_id modality scale_id x_min y_min x_max
  y_max score``; ``#`` lines are comments.
* manifest: JSON listing frames (id, time of day, file paths) and optional
  sequence grouping (frames per group and stride).
* run config: UTF-8 ``key = value`` lines.
* results: UTF-8 header block of ``# key = value`` lines followed by
  tab-separated rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .evaluation import STANDARD_SETTINGS, FrameRecord, GroundTruthBox
from .geometry import SCALES, BBox, Detection
from .postprocess import PostprocessConfig

ANNOTATION_HEADER = "% bbGt version=3"
_OCCLUSION_CODES = {0: "none", 1: "partial", 2: "heavy"}
_OCCLUSION_NAMES = {v: k for k, v in _OCCLUSION_CODES.items()}
_MODALITY_ALIASES = {
    "vis": "vis",
    "visible": "vis",
    "rgb": "vis",
    "ir": "ir",
    "thermal": "ir",
    "t": "ir",
    "fused": "fused",
}

DEFAULT_SCALE_STRIDES = {"s80": 8.0, "s40": 16.0, "s20": 32.0}


@dataclass(frozen=True)
class RunConfig:
    """Every tunable knob of the pipeline, with overridable defaults."""

    beta: float = 2.0
    n_top: int = 300
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    patch_size: int = 4
    settings: tuple[str, ...] = ("reasonable",)
    scale_strides: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_SCALE_STRIDES)
    )

    def __post_init__(self) -> None:
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.n_top < 1:
            raise ValueError(f"n_top must be >= 1, got {self.n_top}")
        for name in self.settings:
            if name not in STANDARD_SETTINGS:
                raise ValueError(f"unknown eval setting {name!r}")

    def echo(self) -> dict[str, str]:
        """Flat key/value view for provenance headers."""
        out = {
            "beta": repr(self.beta),
            "n_top": str(self.n_top),
            "conf_thres_v": repr(self.postprocess.conf_threshold_v),
            "conf_thres_t": repr(self.postprocess.conf_threshold_t),
            "iou_thres": repr(self.postprocess.iou_thres),
            "nms_thres": repr(self.postprocess.nms_threshold),
            "strategy": self.postprocess.strategy,
            "patch_size": str(self.patch_size),
            "settings": ",".join(self.settings),
        }
        for scale in SCALES:
            out[f"stride_{scale}"] = repr(float(self.scale_strides[scale]))
        return out


def load_config(path: str | Path) -> dict[str, str]:
    """Parse a ``key = value`` config file into a string mapping."""
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def run_config_from_mapping(mapping: Mapping[str, str]) -> RunConfig:
    """Build a RunConfig from string key/value pairs, applying defaults."""
    base = RunConfig()
    known = {
        "beta",
        "n_top",
        "conf_thres_v",
        "conf_thres_t",
        "iou_thres",
        "nms_thres",
        "strategy",
        "patch_size",
        "settings",
        "stride_s80",
        "stride_s40",
        "stride_s20",
    }
    unknown = set(mapping) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    def get(key: str, default):
        return mapping.get(key, default)

    post = PostprocessConfig(
        conf_threshold_v=float(get("conf_thres_v", base.postprocess.conf_threshold_v)),
        conf_threshold_t=float(get("conf_thres_t", base.postprocess.conf_threshold_t)),
        iou_thres=float(get("iou_thres", base.postprocess.iou_thres)),
        nms_threshold=float(get("nms_thres", base.postprocess.nms_threshold)),
        strategy=str(get("strategy", base.postprocess.strategy)),
    )
    settings = tuple(
        s.strip() for s in str(get("settings", ",".join(base.settings))).split(",") if s.strip()
    )
    strides = {
        scale: float(get(f"stride_{scale}", DEFAULT_SCALE_STRIDES[scale]))
        for scale in SCALES
    }
    return RunConfig(
        beta=float(get("beta", base.beta)),
        n_top=int(get("n_top", base.n_top)),
        postprocess=post,
        patch_size=int(get("patch_size", base.patch_size)),
        settings=settings,
        scale_strides=strides,
    )


def parse_annotation_text(
    text: str,
    source: str = "<string>",
    scale_x: float = 1.0,
    scale_y: float = 1.0,
) -> list[GroundTruthBox]:
    """Parse one bbGt annotation body; coordinates are multiplied by the
    scale factors (used to undo dataset-level resizing)."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("% bbGt version"):
        raise ValueError(f"{source}: missing bbGt header")
    gts: list[GroundTruthBox] = []
    for lineno, raw in enumerate(lines[1:], 2):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 6:
            raise ValueError(f"{source}:{lineno}: expected 'label x y w h occ ...'")
        label = tokens[0]
        try:
            x, y, w, h = (float(v) for v in tokens[1:5])
            occ_code = int(tokens[5])
        except ValueError:
            raise ValueError(f"{source}:{lineno}: malformed numeric fields") from None
        if w < 0 or h < 0:
            raise ValueError(f"{source}:{lineno}: negative box size")
        if occ_code not in _OCCLUSION_CODES:
            raise ValueError(f"{source}:{lineno}: occlusion code must be 0, 1, or 2")
        box = BBox(x * scale_x, y * scale_y, (x + w) * scale_x, (y + h) * scale_y)
        gts.append(
            GroundTruthBox(
                box=box,
                occlusion=_OCCLUSION_CODES[occ_code],
                ignore=label != "person",
            )
        )
    return gts


def _fmt(value: float) -> str:
    # repr of a builtin float round-trips exactly and avoids numpy scalar reprs
    return repr(float(value))


def serialize_annotations(gts: Iterable[GroundTruthBox]) -> str:
    """Inverse of :func:`parse_annotation_text` (unit scale factors)."""
    lines = [ANNOTATION_HEADER]
    for gt in gts:
        label = "person" if not gt.ignore else "ignore"
        lines.append(
            f"{label} {_fmt(gt.box.x_min)} {_fmt(gt.box.y_min)} "
            f"{_fmt(gt.box.width)} {_fmt(gt.box.height)} {_OCCLUSION_NAMES[gt.occlusion]}"
        )
    return "\n".join(lines) + "\n"


def ingest_annotations(
    path: str | Path,
    fmt: str = "kaist_txt",
    time_of_day: str = "day",
    scale_x: float = 1.0,
    scale_y: float = 1.0,
) -> list[FrameRecord]:
    """Read bbGt annotation files into frame records.

    ``path`` is a single file or a directory of ``.txt`` files; frame ids
    come from file stems. Time-of-day tags normally come from a manifest;
    the default here applies when files are ingested directly.
    """
    if fmt != "kaist_txt":
        raise ValueError(f"unknown annotation format {fmt!r}")
    path = Path(path)
    files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
    if not files:
        raise ValueError(f"{path}: no annotation files found")
    records = []
    for file in files:
        gts = parse_annotation_text(
            file.read_text(encoding="utf-8"), str(file), scale_x, scale_y
        )
        records.append(
            FrameRecord(frame_id=file.stem, time_of_day=time_of_day, gts=gts)
        )
    return records


def normalize_modality(token: str) -> str:
    try:
        return _MODALITY_ALIASES[token.lower()]
    except KeyError:
        raise ValueError(f"unknown modality {token!r}") from None


def parse_detection_line(line: str, source: str = "<string>", lineno: int = 0) -> Detection:
    tokens = line.split()
    if len(tokens) != 8:
        raise ValueError(
            f"{source}:{lineno}: expected 'frame_id modality scale_id "
            f"x_min y_min x_max y_max score'"
        )
    frame_id, modality_token, scale_id = tokens[0], tokens[1], tokens[2]
    if scale_id not in SCALES:
        raise ValueError(f"{source}:{lineno}: unknown scale_id {scale_id!r}")
    try:
        x_min, y_min, x_max, y_max, score = (float(v) for v in tokens[3:])
    except ValueError:
        raise ValueError(f"{source}:{lineno}: malformed numeric fields") from None
    try:
        return Detection(
            box=BBox(x_min, y_min, x_max, y_max),
            score=score,
            modality=normalize_modality(modality_token),
            scale_id=scale_id,
            frame_id=frame_id,
        )
    except ValueError as err:
        raise ValueError(f"{source}:{lineno}: {err}") from None


def ingest_detections(path: str | Path) -> list[Detection]:
    """Read a detection dump; duplicates are kept (suppression is NMS's job)."""
    dets: list[Detection] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        dets.append(parse_detection_line(line, str(path), lineno))
    return dets


def serialize_detections(
    dets: Iterable[Detection], header: Mapping[str, str] | None = None
) -> str:
    """Render detections in the line format accepted by ingest_detections."""
    lines = [f"# {key} = {value}" for key, value in (header or {}).items()]
    for d in dets:
        lines.append(
            f"{d.frame_id} {d.modality} {d.scale_id} "
            f"{_fmt(d.box.x_min)} {_fmt(d.box.y_min)} {_fmt(d.box.x_max)} "
            f"{_fmt(d.box.y_max)} {_fmt(d.score)}"
        )
    return "\n".join(lines) + "\n"


def group_by_frame(dets: Sequence[Detection]) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    for d in dets:
        out.setdefault(d.frame_id, []).append(d)
    return out


@dataclass(frozen=True)
class ManifestFrame:
    frame_id: str
    time_of_day: str
    annotations: str | None = None
    detections: str | None = None


@dataclass(frozen=True)
class Manifest:
    """Frame registry with optional fixed-stride sequence grouping."""

    frames: tuple[ManifestFrame, ...]
    frames_per_group: int | None = None
    stride: int | None = None
    groups: tuple[tuple[str, ...], ...] = ()
    annotation_scale: tuple[float, float] = (1.0, 1.0)
    root: Path = Path(".")

    def __post_init__(self) -> None:
        ids = [f.frame_id for f in self.frames]
        if len(ids) != len(set(ids)):
            raise ValueError("manifest frame_ids must be unique")
        known = set(ids)
        for group in self.groups:
            if self.frames_per_group is not None and len(group) != self.frames_per_group:
                raise ValueError(
                    f"sequence group {group} does not have "
                    f"{self.frames_per_group} members"
                )
            missing = [fid for fid in group if fid not in known]
            if missing:
                raise ValueError(f"sequence group references unknown frames {missing}")
            if self.stride is not None and len(group) > 1:
                try:
                    numeric = [int(fid) for fid in group]
                except ValueError:
                    raise ValueError(
                        f"sequence group {group} needs numeric frame ids to "
                        f"check the stride"
                    ) from None
                deltas = {b - a for a, b in zip(numeric, numeric[1:])}
                if deltas != {self.stride}:
                    raise ValueError(
                        f"sequence group {group} is not spaced by stride {self.stride}"
                    )

    def current_frames(self) -> list[str]:
        """Last frame of each sequence group (the detected frame); all
        frames when no grouping is declared."""
        if self.groups:
            return [group[-1] for group in self.groups]
        return [f.frame_id for f in self.frames]

    def load_records(self) -> list[FrameRecord]:
        """Ingest the referenced annotation files into frame records."""
        sx, sy = self.annotation_scale
        records = []
        for frame in self.frames:
            gts: list[GroundTruthBox] = []
            if frame.annotations is not None:
                file = self.root / frame.annotations
                gts = parse_annotation_text(
                    file.read_text(encoding="utf-8"), str(file), sx, sy
                )
            records.append(
                FrameRecord(
                    frame_id=frame.frame_id, time_of_day=frame.time_of_day, gts=gts
                )
            )
        return records


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ValueError(f"{path}: invalid manifest JSON ({err})") from None
    frames = tuple(
        ManifestFrame(
            frame_id=str(entry["frame_id"]),
            time_of_day=str(entry.get("time_of_day", "day")),
            annotations=entry.get("annotations"),
            detections=entry.get("detections"),
        )
        for entry in payload.get("frames", [])
    )
    sequence = payload.get("sequence", {})
    scale = payload.get("annotation_scale", [1.0, 1.0])
    return Manifest(
        frames=frames,
        frames_per_group=sequence.get("frames_per_group"),
        stride=sequence.get("stride"),
        groups=tuple(tuple(str(f) for f in g) for g in sequence.get("groups", [])),
        annotation_scale=(float(scale[0]), float(scale[1])),
        root=path.parent,
    )


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    payload: dict = {
        "frames": [
            {
                "frame_id": f.frame_id,
                "time_of_day": f.time_of_day,
                **({"annotations": f.annotations} if f.annotations else {}),
                **({"detections": f.detections} if f.detections else {}),
            }
            for f in manifest.frames
        ],
        "annotation_scale": list(manifest.annotation_scale),
    }
    if manifest.groups:
        payload["sequence"] = {
            "frames_per_group": manifest.frames_per_group,
            "stride": manifest.stride,
            "groups": [list(g) for g in manifest.groups],
        }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def attach_detections(
    records: Sequence[FrameRecord],
    dets: Sequence[Detection],
    source: str,
) -> list[FrameRecord]:
    """Return records with ``dets`` grouped by frame under key ``source``."""
    by_frame = group_by_frame(dets)
    out = []
    for record in records:
        detections = dict(record.detections)
        detections[source] = by_frame.get(record.frame_id, [])
        out.append(replace(record, detections=detections))
    return out


def format_results(
    rows: Sequence[tuple[str, str, str, float | None, int]],
    header: Mapping[str, str],
) -> str:
    """Render the results table: header block, column names, one row per
    (setting, split, strategy) with the MR percent and evaluated-gt count."""
    lines = [f"# {key} = {value}" for key, value in header.items()]
    lines.append("setting\tsplit\tstrategy\tmr_percent\tnum_gt")
    for setting, split, strategy, mr, num_gt in rows:
        mr_text = "n/a" if mr is None else f"{mr:.6f}"
        lines.append(f"{setting}\t{split}\t{strategy}\t{mr_text}\t{num_gt}")
    return "\n".join(lines) + "\n"
