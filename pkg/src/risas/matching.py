"""Nearest-neighbor distance-ratio matching and reprojection-based evaluation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import Pose
from .errors import DimensionMismatchError


@dataclass(frozen=True)
class Match:
    index_a: int
    index_b: int
    distance: float
    ratio: float
    correct: bool | None = None


@dataclass(frozen=True)
class EvalConfig:
    d_min: float = 0.05                  # reprojection radius for correctness, meters
    ratio_max: float = 0.8               # NNDR acceptance threshold for single match sets
    ratio_sweep: tuple = tuple(i / 20.0 for i in range(1, 21))

    def __post_init__(self):
        if self.d_min <= 0:
            raise ValueError(f"d_min must be positive, got {self.d_min}")
        sweep = tuple(float(r) for r in self.ratio_sweep)
        if any(r <= 0 or r > 1 for r in sweep):
            raise ValueError("ratio_sweep values must lie in (0, 1]")
        if any(b <= a for a, b in zip(sweep, sweep[1:])):
            raise ValueError("ratio_sweep must be strictly increasing")
        object.__setattr__(self, "ratio_sweep", sweep)


@dataclass(frozen=True)
class PrPoint:
    ratio: float
    precision: float
    recall: float
    n_matches: int
    n_correct: int
    degenerate: bool = False


@dataclass(frozen=True)
class PrCurve:
    points: list
    total_gt: int


def _as_matrix(descs) -> np.ndarray:
    if isinstance(descs, np.ndarray):
        mat = np.asarray(descs, dtype=np.float64)
    else:
        mat = np.array([getattr(d, "bins", d) for d in descs], dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionMismatchError("descriptors must form an (N, dim) matrix")
    return mat


def _distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
          - 2.0 * (a @ b.T))
    return np.sqrt(np.maximum(sq, 0.0))


def nndr_match(desc_a, desc_b, ratio_max: float = 0.8) -> list[Match]:
    """Match each query descriptor to its nearest neighbor when sufficiently
    better than the second nearest.

    The ratio is nearest/second-nearest Euclidean distance; with a single
    candidate the ratio is defined as 0, and a zero second distance (exact
    duplicates) yields the maximally ambiguous ratio 1. Ties go to the lower
    index, making the output independent of input ordering up to relabeling.
    """
    a = _as_matrix(desc_a)
    b = _as_matrix(desc_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("descriptor lists must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(
            f"descriptor dims differ: {a.shape[1]} vs {b.shape[1]}"
        )
    dist = _distance_matrix(a, b)
    order = np.argsort(dist, axis=1, kind="stable")
    matches = []
    for i in range(a.shape[0]):
        j1 = int(order[i, 0])
        d1 = float(dist[i, j1])
        if b.shape[0] == 1:
            ratio = 0.0
        else:
            d2 = float(dist[i, int(order[i, 1])])
            ratio = d1 / d2 if d2 > 0 else 1.0
        if ratio <= ratio_max:
            matches.append(Match(index_a=i, index_b=j1, distance=d1, ratio=ratio))
    return matches


def _positions(keypoints) -> np.ndarray:
    return np.array([kp.position.to_array() for kp in keypoints], dtype=np.float64)


def label_correct(matches: list[Match], kps_a, kps_b, pose: Pose,
                  d_min: float = 0.05) -> list[Match]:
    """Mark each match correct when its reprojection error is within d_min.

    The pose maps frame-b coordinates into frame-a coordinates; the error is
    ||p_a - (R p_b + t)|| on the keypoints' 3-D positions.
    """
    pa = _positions(kps_a)
    pb_in_a = pose.apply(_positions(kps_b))
    out = []
    for m in matches:
        err = float(np.linalg.norm(pa[m.index_a] - pb_in_a[m.index_b]))
        out.append(replace(m, correct=err <= d_min))
    return out


def count_gt_correspondences(kps_a, kps_b, pose: Pose, d_min: float = 0.05) -> int:
    """Keypoint pairs within d_min under the ground-truth pose, descriptors ignored."""
    pa = _positions(kps_a)
    pb_in_a = pose.apply(_positions(kps_b))
    d = np.linalg.norm(pa[:, None, :] - pb_in_a[None, :, :], axis=2)
    return int(np.count_nonzero(d <= d_min))


def pr_curve(desc_a, desc_b, kps_a, kps_b, pose: Pose,
             config: EvalConfig = EvalConfig()) -> PrCurve:
    """Precision and recall as the NNDR acceptance threshold sweeps upward.

    Match sets are nested across the sweep by construction. Thresholds that
    return no matches emit precision 1 by convention, flagged degenerate.
    """
    labeled = label_correct(nndr_match(desc_a, desc_b, ratio_max=1.0),
                            kps_a, kps_b, pose, config.d_min)
    ratios = np.array([m.ratio for m in labeled])
    correct = np.array([bool(m.correct) for m in labeled])
    total_gt = count_gt_correspondences(kps_a, kps_b, pose, config.d_min)

    points = []
    for thr in config.ratio_sweep:
        sel = ratios <= thr
        n_matches = int(np.count_nonzero(sel))
        n_correct = int(np.count_nonzero(correct & sel))
        degenerate = n_matches == 0 or total_gt == 0
        precision = n_correct / n_matches if n_matches > 0 else 1.0
        recall = n_correct / total_gt if total_gt > 0 else 0.0
        points.append(PrPoint(ratio=float(thr), precision=precision, recall=recall,
                              n_matches=n_matches, n_correct=n_correct,
                              degenerate=degenerate))
    return PrCurve(points=points, total_gt=total_gt)


def inlier_percentage(matches: list[Match]) -> float:
    """Fraction of labeled matches that are correct; 0 for an empty set."""
    if not matches:
        return 0.0
    if any(m.correct is None for m in matches):
        raise ValueError("matches must be labeled before computing inliers")
    return sum(1 for m in matches if m.correct) / len(matches)
