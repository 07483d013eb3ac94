"""Subcommand CLI: synth, detect, describe, match, evaluate, pipeline.

Exit codes: 0 success, 2 input error (missing or malformed files, bad
arguments), 3 pipeline failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import PipelineConfig, load_config
from .core import load_intrinsics, load_pose, save_intrinsics, save_pose
from .dataio import (
    load_descriptors,
    load_frame,
    load_keypoints,
    plot_pr_curve,
    save_depth,
    save_descriptors,
    save_gray,
    save_keypoints,
    save_matches,
    save_pr_curve,
)
from .descriptor import describe_frame
from .detector import detect
from .errors import (
    DimensionMismatchError,
    RisasError,
    UnsupportedBitDepthError,
)
from .matching import inlier_percentage, label_correct, nndr_match, pr_curve
from .pipeline import run_pipeline
from .surface import compute_shape_channel, label_angles
from .synth import render, scene_from_dict

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PIPELINE = 3

_INPUT_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    UnsupportedBitDepthError,
    DimensionMismatchError,
    json.JSONDecodeError,
    KeyError,
    ValueError,
)


def _load_cfg(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return PipelineConfig()


def _dump_intermediates(out_dir, nimg, dp, n_s: int, prefix: str = "") -> None:
    """Write the shape channel and per-axis angle labels as 8-bit PNGs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_gray(dp.values, out / f"{prefix}dp.png")
    labels = label_angles(nimg, n_s=n_s)
    for ch, name in enumerate(("x", "y", "z")):
        img = (labels.labels[..., ch].astype(np.uint16) * 255 // n_s).astype(np.uint8)
        save_gray(img, out / f"{prefix}angle_labels_{name}.png")


def _cmd_synth(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as f:
        spec = scene_from_dict(json.load(f))
    frame = render(spec)
    save_gray(frame.gray, args.out_color)
    save_depth(frame.depth, args.out_depth)
    if args.out_pose:
        save_pose(spec.camera_pose, args.out_pose)
    if args.out_intrinsics:
        save_intrinsics(spec.intrinsics, args.out_intrinsics)
    return EXIT_OK


def _cmd_detect(args) -> int:
    cfg = _load_cfg(args)
    det = cfg.detector
    if args.tau is not None:
        det = replace(det, tau=args.tau)
    if args.max_kp is not None:
        det = replace(det, max_keypoints=args.max_kp)
    frame = load_frame(args.input, args.depth, args.intrinsics)
    nimg, dp = compute_shape_channel(frame, window=cfg.normal_window, n_s=cfg.n_s,
                                     depth_gate=cfg.normal_depth_gate)
    if args.dump_intermediates:
        _dump_intermediates(args.dump_intermediates, nimg, dp, cfg.n_s)
    keypoints = detect(frame, dp, det)
    save_keypoints(keypoints, args.out)
    print(f"{len(keypoints)} keypoints -> {args.out}")
    return EXIT_OK


def _cmd_describe(args) -> int:
    cfg = _load_cfg(args)
    intrinsics = load_intrinsics(args.intrinsics)
    frame = load_frame(args.input, args.depth, intrinsics)
    keypoints = load_keypoints(args.keypoints, intrinsics)
    nimg, dp = compute_shape_channel(frame, window=cfg.normal_window, n_s=cfg.n_s,
                                     depth_gate=cfg.normal_depth_gate)
    if args.dump_intermediates:
        _dump_intermediates(args.dump_intermediates, nimg, dp, cfg.n_s)
    result = describe_frame(frame, nimg, keypoints, cfg.descriptor)
    save_descriptors(result.items, args.out)
    print(f"{len(result.items)} descriptors ({len(result.rejects)} rejected) -> {args.out}")
    return EXIT_OK


def _cmd_match(args) -> int:
    cfg = _load_cfg(args)
    ratio_max = args.ratio_max if args.ratio_max is not None else cfg.eval.ratio_max
    intrinsics = load_intrinsics(args.intrinsics)
    items_a = load_descriptors(args.desc_a, intrinsics)
    items_b = load_descriptors(args.desc_b, intrinsics)
    desc_a = [d for _, d in items_a]
    desc_b = [d for _, d in items_b]
    matches = nndr_match(desc_a, desc_b, ratio_max=ratio_max)
    if args.pose:
        pose = load_pose(args.pose)
        matches = label_correct(matches, [k for k, _ in items_a],
                                [k for k, _ in items_b], pose, cfg.eval.d_min)
    save_matches(matches, args.out)
    print(f"{len(matches)} matches -> {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    intrinsics = load_intrinsics(args.intrinsics)
    pose = load_pose(args.pose)
    items_a = load_descriptors(args.desc_a, intrinsics)
    items_b = load_descriptors(args.desc_b, intrinsics)
    desc_a = [d for _, d in items_a]
    desc_b = [d for _, d in items_b]
    kps_a = [k for k, _ in items_a]
    kps_b = [k for k, _ in items_b]
    curve = pr_curve(desc_a, desc_b, kps_a, kps_b, pose, cfg.eval)
    save_pr_curve(curve, args.out)
    if args.plot:
        plot_pr_curve(curve, args.plot)
    labeled = label_correct(nndr_match(desc_a, desc_b, cfg.eval.ratio_max),
                            kps_a, kps_b, pose, cfg.eval.d_min)
    pct = inlier_percentage(labeled) if labeled else 0.0
    print(f"PR curve ({len(curve.points)} points) -> {args.out}; "
          f"inliers at ratio {cfg.eval.ratio_max}: {pct:.3f} ({len(labeled)} matches)")
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    cfg = _load_cfg(args)
    intrinsics = load_intrinsics(args.intrinsics)
    frame_a = load_frame(args.color_a, args.depth_a, intrinsics)
    frame_b = load_frame(args.color_b, args.depth_b, intrinsics)
    pose = load_pose(args.pose)
    if args.dump_intermediates:
        for name, frame in (("a_", frame_a), ("b_", frame_b)):
            nimg, dp = compute_shape_channel(frame, window=cfg.normal_window,
                                             n_s=cfg.n_s,
                                             depth_gate=cfg.normal_depth_gate)
            _dump_intermediates(args.dump_intermediates, nimg, dp, cfg.n_s, prefix=name)
    report = run_pipeline(cfg, frame_a, frame_b, pose)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    print(f"report -> {args.out}: {report['matches']} matches, "
          f"inliers {report['inlier_percentage']:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risas",
        description="RGB-D keypoint detection, description, matching, and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="pipeline config JSON (partial, overrides defaults)")
        p.add_argument("--dump-intermediates", metavar="DIR",
                       help="write shape-channel debug PNGs into DIR")

    p = sub.add_parser("synth", help="render a synthetic RGB-D scene")
    p.add_argument("--spec", required=True, help="scene description JSON")
    p.add_argument("--out-color", required=True)
    p.add_argument("--out-depth", required=True, help="16-bit millimeter PNG")
    p.add_argument("--out-pose", help="write the camera pose JSON")
    p.add_argument("--out-intrinsics", help="write the camera intrinsics JSON")
    common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("detect", help="detect keypoints on one frame")
    p.add_argument("--input", required=True, help="color PNG (8-bit gray or RGB)")
    p.add_argument("--depth", required=True, help="16-bit millimeter depth PNG")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--tau", type=float, help="appearance blend weight override")
    p.add_argument("--max-kp", type=int, help="keypoint cap override")
    p.add_argument("--out", required=True, help="keypoints JSON")
    common(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("describe", help="build descriptors for detected keypoints")
    p.add_argument("--keypoints", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out", required=True, help="binary descriptor file")
    common(p)
    p.set_defaults(func=_cmd_describe)

    p = sub.add_parser("match", help="NNDR matching between two descriptor files")
    p.add_argument("--desc-a", required=True)
    p.add_argument("--desc-b", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--ratio-max", type=float)
    p.add_argument("--pose", help="label correctness against this ground-truth pose")
    p.add_argument("--out", required=True, help="matches CSV")
    common(p)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("evaluate", help="precision-recall sweep under a ground-truth pose")
    p.add_argument("--desc-a", required=True)
    p.add_argument("--desc-b", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--pose", required=True)
    p.add_argument("--out", required=True, help="PR curve CSV")
    p.add_argument("--plot", help="optional SVG plot path")
    common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("pipeline", help="full two-frame evaluation report")
    p.add_argument("--color-a", required=True)
    p.add_argument("--depth-a", required=True)
    p.add_argument("--color-b", required=True)
    p.add_argument("--depth-b", required=True)
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--pose", required=True)
    p.add_argument("--out", required=True, help="report JSON")
    common(p)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RisasError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
