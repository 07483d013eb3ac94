"""End-to-end orchestration: detect, describe, match, label, evaluate."""

from __future__ import annotations

from dataclasses import asdict

from .config import PipelineConfig
from .core import Pose, RgbdFrame
from .descriptor import describe_frame
from .detector import detect
from .matching import inlier_percentage, label_correct, nndr_match, pr_curve
from .surface import compute_shape_channel


def process_frame(frame: RgbdFrame, config: PipelineConfig):
    """Shape channel, keypoints, and descriptors for one frame.

    Returns (describe_result, stats dict).
    """
    nimg, dp = compute_shape_channel(frame, window=config.normal_window,
                                     n_s=config.n_s,
                                     depth_gate=config.normal_depth_gate)
    keypoints = detect(frame, dp, config.detector)
    result = describe_frame(frame, nimg, keypoints, config.descriptor)
    reject_counts: dict[str, int] = {}
    for rec in result.rejects:
        reject_counts[rec.reason] = reject_counts.get(rec.reason, 0) + 1
    stats = {
        "keypoints": len(keypoints),
        "described": len(result.items),
        "rejects": reject_counts,
    }
    return result, stats


def run_pipeline(config: PipelineConfig, frame_a: RgbdFrame, frame_b: RgbdFrame,
                 pose: Pose) -> dict:
    """Full two-frame evaluation; the pose maps frame-b points into frame a.

    Per-stage failures degrade the report (zero counts, empty curve) instead
    of aborting: a frame with no usable structure still yields a report.
    """
    report: dict = {"errors": []}

    result_a, stats_a = process_frame(frame_a, config)
    result_b, stats_b = process_frame(frame_b, config)
    report["frame_a"] = stats_a
    report["frame_b"] = stats_b

    report["matches"] = 0
    report["correct_matches"] = 0
    report["inlier_percentage"] = 0.0
    report["total_gt_correspondences"] = 0
    report["pr_curve"] = []

    if not result_a.items or not result_b.items:
        report["errors"].append("matching skipped: a frame produced no descriptors")
        return report

    matches = nndr_match(result_a.descriptors(), result_b.descriptors(),
                         ratio_max=config.eval.ratio_max)
    labeled = label_correct(matches, result_a.keypoints(), result_b.keypoints(),
                            pose, config.eval.d_min)
    curve = pr_curve(result_a.descriptors(), result_b.descriptors(),
                     result_a.keypoints(), result_b.keypoints(), pose, config.eval)

    report["matches"] = len(labeled)
    report["correct_matches"] = sum(1 for m in labeled if m.correct)
    report["inlier_percentage"] = inlier_percentage(labeled) if labeled else 0.0
    report["total_gt_correspondences"] = curve.total_gt
    report["pr_curve"] = [asdict(p) for p in curve.points]
    return report
