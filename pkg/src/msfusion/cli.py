"""Command-line surface tying the library modules into runnable workflows.

Subcommands: ``fuse`` (strategy post-processing of a detection dump),
``eval`` (MR tables from detections plus annotations), ``kl-loss``
(single-scale alignment loss from feature tensors, detections and ground
truth), ``reliability`` (thermal reliability percentage over a corpus),
``forward`` (fusion block forward pass over tensor files), and
``gen-weights`` (deterministic seeded weights for testing).

Exit codes: 0 on success, 1 on runtime/I-O failure (with a one-line
diagnostic on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .balance import modality_alignment_loss, reliability, thermal_reliability_percentage
from .containers import TENSORS_MAGIC, load_tensors, save_tensors
from .evaluation import STANDARD_SETTINGS, SPLITS, apply_setting, log_average_miss_rate
from .fusion import FusionConfig, FusionWeights, fusion_forward
from .geometry import SCALES, iou
from .ingest import (
    RunConfig,
    attach_detections,
    format_results,
    group_by_frame,
    ingest_detections,
    load_config,
    load_manifest,
    parse_annotation_text,
    run_config_from_mapping,
    serialize_detections,
)
from .postprocess import run_strategy


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--out", help="output file path")


def _add_threshold_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--strategy", choices=("vis", "ir", "both", "algo1"))
    parser.add_argument("--iou-thres", type=float, dest="iou_thres")
    parser.add_argument("--conf-thres-v", type=float, dest="conf_thres_v")
    parser.add_argument("--conf-thres-t", type=float, dest="conf_thres_t")
    parser.add_argument("--nms-thres", type=float, dest="nms_thres")
    parser.add_argument("--beta", type=float)
    parser.add_argument("--n-top", type=int, dest="n_top")


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    mapping = load_config(args.config) if getattr(args, "config", None) else {}
    cfg = run_config_from_mapping(mapping)
    post = cfg.postprocess
    if getattr(args, "strategy", None):
        post = replace(post, strategy=args.strategy)
    if getattr(args, "iou_thres", None) is not None:
        post = replace(post, iou_thres=args.iou_thres)
    if getattr(args, "conf_thres_v", None) is not None:
        post = replace(post, conf_threshold_v=args.conf_thres_v)
    if getattr(args, "conf_thres_t", None) is not None:
        post = replace(post, conf_threshold_t=args.conf_thres_t)
    if getattr(args, "nms_thres", None) is not None:
        post = replace(post, nms_threshold=args.nms_thres)
    overrides: dict = {"postprocess": post}
    if getattr(args, "beta", None) is not None:
        overrides["beta"] = args.beta
    if getattr(args, "n_top", None) is not None:
        overrides["n_top"] = args.n_top
    if getattr(args, "setting", None):
        overrides["settings"] = tuple(args.setting)
    return replace(cfg, **overrides)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_fuse(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    dets = ingest_detections(args.detections)
    vis = [d for d in dets if d.modality == "vis"]
    ir = [d for d in dets if d.modality == "ir"]
    kept = run_strategy(vis, ir, cfg.postprocess)
    header = {"command": "fuse", **cfg.echo()}
    _emit(serialize_detections(kept, header), args.out)
    if args.out:
        print(f"wrote {len(kept)} detections to {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    manifest = load_manifest(args.manifest)
    records = manifest.load_records()
    dets = ingest_detections(args.detections)
    label = args.label
    records = attach_detections(records, dets, label)
    splits = [args.split] if args.split else list(SPLITS)
    rows = []
    for setting_name in cfg.settings:
        setting = STANDARD_SETTINGS[setting_name]
        for split in splits:
            subset = (
                records
                if split == "all"
                else [r for r in records if r.time_of_day == split]
            )
            num_gt = sum(len(apply_setting(r.gts, setting)[0]) for r in subset)
            try:
                mr = log_average_miss_rate(subset, setting, label)
            except ValueError:
                mr = None
            rows.append((setting_name, split, label, mr, num_gt))
    header = {"command": "eval", **cfg.echo()}
    text = format_results(rows, header)
    _emit(text, args.out)
    if args.out:
        sys.stdout.write(text)
    return 0


def _cmd_kl_loss(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    features = load_tensors(args.features, TENSORS_MAGIC)
    for name in ("vis", "ir"):
        if name not in features:
            raise ValueError(f"{args.features}: missing tensor {name!r}")
    dets = ingest_detections(args.detections)
    frames = sorted({d.frame_id for d in dets})
    frame_id = args.frame_id
    if frame_id is None:
        if len(frames) != 1:
            raise ValueError(
                f"detections cover frames {frames}; pass --frame-id to pick one"
            )
        frame_id = frames[0]
    scale = args.scale
    stride = args.stride if args.stride is not None else cfg.scale_strides[scale]
    vis = [d for d in dets if d.frame_id == frame_id and d.scale_id == scale and d.modality == "vis"]
    ir = [d for d in dets if d.frame_id == frame_id and d.scale_id == scale and d.modality == "ir"]
    gts = [
        g.box
        for g in parse_annotation_text(
            Path(args.annotations).read_text(encoding="utf-8"), args.annotations
        )
        if not g.ignore
    ]
    report, loss = modality_alignment_loss(
        vis, ir, gts, features["vis"], features["ir"], n_top=cfg.n_top, stride=stride
    )
    lines = [
        f"frame_id = {frame_id}",
        f"scale = {scale}",
        f"stride = {stride!r}",
        f"beta = {cfg.beta!r}",
        f"n_top = {cfg.n_top}",
        f"r_v = {report.r_v!r}",
        f"r_t = {report.r_t!r}",
        f"reference = {report.reference_modality}",
        f"n_used = {report.n_used}",
        f"kl_loss = {loss!r}",
    ]
    _emit("\n".join(lines) + "\n", args.out)
    if args.out:
        print(f"kl_loss = {loss!r}")
    return 0


def _cmd_reliability(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    manifest = load_manifest(args.manifest)
    records = manifest.load_records()
    by_frame = group_by_frame(ingest_detections(args.detections))
    reports = []
    lines = []
    for record in records:
        gts = [g.box for g in record.gts if not g.ignore]
        if not gts:
            continue
        frame_dets = by_frame.get(record.frame_id, [])
        for scale in SCALES:
            vis = [d for d in frame_dets if d.scale_id == scale and d.modality == "vis"]
            ir = [d for d in frame_dets if d.scale_id == scale and d.modality == "ir"]
            overlaps = any(
                iou(d.box, g) > 0.0 for d in vis + ir for g in gts
            )
            if not overlaps:
                reports.append(None)
                continue
            report = reliability(vis, ir, gts, cfg.n_top)
            reports.append(report)
            lines.append(
                f"{record.frame_id}\t{scale}\t{report.r_v!r}\t{report.r_t!r}\t"
                f"{report.reference_modality}"
            )
    thermal = thermal_reliability_percentage(reports)
    lines.append(f"# thermal_percent = {thermal!r}")
    lines.append(f"# visible_percent = {100.0 - thermal!r}")
    _emit("\n".join(lines) + "\n", args.out)
    print(f"thermal reliability: {thermal:.2f}% over "
          f"{sum(r is not None for r in reports)} valid instances")
    return 0


def _cmd_forward(args: argparse.Namespace) -> int:
    weights = FusionWeights.load(args.weights)
    tensors = load_tensors(args.input, TENSORS_MAGIC)
    for name in ("vis", "ir"):
        if name not in tensors:
            raise ValueError(f"{args.input}: missing tensor {name!r}")
    fused_vis, fused_ir = fusion_forward(tensors["vis"], tensors["ir"], weights)
    save_tensors(args.out, {"vis": fused_vis, "ir": fused_ir}, TENSORS_MAGIC)
    print(f"wrote fused tensors {tuple(fused_vis.shape)} to {args.out}")
    return 0


def _cmd_gen_weights(args: argparse.Namespace) -> int:
    config = FusionConfig(
        frames=args.frames,
        channels=args.channels,
        height=args.height,
        width=args.width,
        patch_size=args.patch_size,
        cascade_groups=args.cascade_groups,
    )
    weights = FusionWeights.seeded(config, seed=args.seed)
    weights.save(args.out)
    print(f"wrote {len(weights.tensors)} weight tensors to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msfusion",
        description="Deterministic multispectral fusion, alignment-loss, "
        "post-processing, and miss-rate tooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="run an output strategy over a detection dump")
    p.add_argument("--detections", required=True)
    _add_threshold_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("eval", help="log-average miss-rate table")
    p.add_argument("--detections", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--setting", action="append", choices=sorted(STANDARD_SETTINGS))
    p.add_argument("--split", choices=SPLITS)
    p.add_argument("--label", default="default", help="strategy label for the rows")
    _add_threshold_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("kl-loss", help="single-scale modality alignment loss")
    p.add_argument("--features", required=True, help="tensor file with vis/ir maps")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True, help="bbGt file for the frame")
    p.add_argument("--frame-id", dest="frame_id")
    p.add_argument("--scale", choices=SCALES, default="s80")
    p.add_argument("--stride", type=float, help="override the per-scale box stride")
    p.add_argument("--n-top", type=int, dest="n_top")
    p.add_argument("--beta", type=float)
    _add_common(p)
    p.set_defaults(func=_cmd_kl_loss)

    p = sub.add_parser("reliability", help="thermal reliability percentage")
    p.add_argument("--detections", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-top", type=int, dest="n_top")
    _add_common(p)
    p.set_defaults(func=_cmd_reliability)

    p = sub.add_parser("forward", help="fusion block forward pass on tensor files")
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True, help="tensor file with vis/ir inputs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_forward)

    p = sub.add_parser("gen-weights", help="deterministic seeded weights file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--patch-size", type=int, dest="patch_size", default=4)
    p.add_argument("--cascade-groups", type=int, dest="cascade_groups", default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_weights)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:  # one-line diagnostic, nonzero exit
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
