"""Ordinal appearance + shape descriptor over a depth-aware support region.

Per keypoint: a scale from depth, an initial pixel radius from the scale
spread of the frame, background elimination by 3-D distance, an ellipsoid
moment fit that refines the radius, a PCA-derived dominant orientation, and
finally a histogram over (spatial sector x intensity rank bin x normal rank
bin), L1-normalized. Ranks rather than raw values make the descriptor exactly
invariant to any strictly increasing remap of either channel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .core import CameraIntrinsics, RgbdFrame, project_direction
from .detector import Keypoint
from .errors import DegenerateDirectionError, TooFewPointsError
from .surface import NormalImage

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DescriptorParams:
    n_pie: int = 8          # spatial sectors
    n_bin: int = 8          # intensity rank bins
    n_vec: int = 2          # normal rank bins (plus one same-as-keypoint bin)
    rho_bar: float = 0.9    # |normal dot| above which a point counts as keypoint-like
    gamma: float = 0.8      # eigenvalue closeness ratio for orientation branching
    t_bg: float = 0.1       # background elimination distance, meters
    min_points: int = 10    # fewest 3-D inliers a usable support region may have
    # Empirical radius law constants, exposed for experimentation.
    radius_bias: float = -5.0
    radius_gain: float = 25.0
    radius_ratio_cap: float = 3.0
    radius_floor: float = 5.0

    def __post_init__(self):
        if self.n_pie < 2 or self.n_bin < 2 or self.n_vec < 1:
            raise ValueError("need n_pie >= 2, n_bin >= 2, n_vec >= 1")
        if not 0.0 < self.rho_bar < 1.0:
            raise ValueError(f"rho_bar must lie in (0, 1), got {self.rho_bar}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.t_bg <= 0:
            raise ValueError(f"t_bg must be positive, got {self.t_bg}")

    @property
    def dim(self) -> int:
        return self.n_pie * self.n_bin * (self.n_vec + 1)


@dataclass(frozen=True)
class SupportPatch:
    """The filtered neighborhood a descriptor is built from.

    pixels_2d holds (u, v) rows in scanline order, index-aligned with the
    back-projected points_3d rows; every 3-D point lies within t_bg meters of
    the keypoint.
    """

    keypoint: Keypoint
    scale: float
    radius_initial: float
    pixels_2d: np.ndarray   # (N, 2) int
    points_3d: np.ndarray   # (N, 3) float64
    radius_refined: float
    theta: float | None = None


@dataclass(frozen=True)
class Descriptor:
    bins: np.ndarray        # (dim,) float64, nonneg, sums to 1 unless empty
    keypoint: Keypoint
    theta: float
    empty: bool = False


class OrientationBranch(Enum):
    LINEAR = "linear"    # one dominant eigenvalue: direction is v1
    PLANAR = "planar"    # two close eigenvalues: direction is v1 x v2
    REJECTED = "rejected"  # three close eigenvalues: no distinctive shape


def estimate_scale(d: float) -> float:
    """Patch scale from depth: 1.0 at or below 2 m, linear to 0.2 at 8 m.

    Written as (19 - 2*max(2, d))/15, an exact rescale of
    (3.8 - 0.4*max(2, d))/3, so the 1.0/0.6/0.2 breakpoints land exactly.
    """
    if d <= 0:
        raise ValueError(f"depth must be positive, got {d}")
    return max(0.2, (19.0 - 2.0 * max(2.0, d)) / 15.0)


def initial_radius(s: float, s_max: float, s_min: float,
                   params: DescriptorParams = DescriptorParams()) -> float:
    """Support radius in pixels, grown when the frame's scale spread is wide."""
    ratio = max(0.2, s_max) / max(0.2, s_min)
    r = (params.radius_bias + params.radius_gain * min(params.radius_ratio_cap, ratio)) * s
    return max(params.radius_floor, r)


def scale_bounds(frame: RgbdFrame) -> tuple[float, float]:
    """(s_max, s_min) over the frame's valid depths."""
    d = frame.depth[frame.valid_depth]
    if d.size == 0:
        return 1.0, 1.0
    return estimate_scale(float(d.min())), estimate_scale(float(d.max()))


def _gather_disk(frame: RgbdFrame, u: int, v: int, radius: float):
    """Pixels of the radius-disk around (u, v) with valid depth, scanline order.

    Returns (pixels (N, 2) int of (u, v), points (N, 3) float64).
    """
    h, w = frame.depth.shape
    r = int(math.floor(radius))
    v0, v1 = max(0, v - r), min(h - 1, v + r)
    u0, u1 = max(0, u - r), min(w - 1, u + r)
    depth = frame.depth[v0:v1 + 1, u0:u1 + 1]
    vs, us = np.mgrid[v0:v1 + 1, u0:u1 + 1]
    mask = ((us - u) ** 2 + (vs - v) ** 2 <= radius * radius) & (depth > 0)
    us_sel = us[mask]
    vs_sel = vs[mask]
    d_sel = depth[mask]
    k = frame.intrinsics
    x = (us_sel - k.cx) * d_sel / k.fx
    y = (vs_sel - k.cy) * d_sel / k.fy
    pixels = np.column_stack([us_sel, vs_sel])
    points = np.column_stack([x, y, d_sel])
    return pixels, points


def select_support(frame: RgbdFrame, kp: Keypoint,
                   params: DescriptorParams = DescriptorParams(),
                   bounds: tuple[float, float] | None = None) -> SupportPatch:
    """Build the background-filtered, radius-refined support region.

    Points farther than t_bg meters from the keypoint are dropped, an
    axis-aligned ellipsoid with semi-axes twice the inliers' per-axis standard
    deviation is projected back to the image for the refined radius, and the
    final patch is re-gathered at that radius with the same distance filter.
    Raises TooFewPointsError when fewer than min_points inliers survive.
    """
    if bounds is None:
        bounds = scale_bounds(frame)
    s_max, s_min = bounds
    s = estimate_scale(kp.depth)
    radius = initial_radius(s, s_max, s_min, params)

    kpos = kp.position.to_array()
    pixels, points = _gather_disk(frame, kp.u, kp.v, radius)
    dist = np.linalg.norm(points - kpos, axis=1)
    inliers = points[dist < params.t_bg]
    if inliers.shape[0] < params.min_points:
        raise TooFewPointsError(
            f"{inliers.shape[0]} support points at ({kp.u}, {kp.v}), "
            f"need {params.min_points}"
        )

    # Ellipsoid moment fit; only the projected extent is consumed.
    semi_axes = 2.0 * inliers.std(axis=0)
    k = frame.intrinsics
    radius_refined = max(semi_axes[0] * k.fx, semi_axes[1] * k.fy) / kp.depth

    pixels, points = _gather_disk(frame, kp.u, kp.v, radius_refined)
    dist = np.linalg.norm(points - kpos, axis=1)
    keep = dist < params.t_bg
    pixels = pixels[keep]
    points = points[keep]
    if points.shape[0] < params.min_points:
        raise TooFewPointsError(
            f"{points.shape[0]} refined support points at ({kp.u}, {kp.v}), "
            f"need {params.min_points}"
        )
    return SupportPatch(keypoint=kp, scale=s, radius_initial=radius,
                        pixels_2d=pixels, points_3d=points,
                        radius_refined=radius_refined)


def principal_direction(points: np.ndarray, gamma: float):
    """PCA shape branch of a 3-D point set.

    Returns (branch, direction): the largest-eigenvalue eigenvector for
    elongated sets, the normal v1 x v2 when the top two eigenvalues are close,
    or (REJECTED, None) when all three are close. The direction's sign is
    fixed to positive z, tie-broken toward positive x then positive y.
    """
    pts = np.asarray(points, dtype=np.float64)
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    e1, e2, e3 = evals[2], evals[1], evals[0]
    v1, v2 = evecs[:, 2], evecs[:, 1]

    if e2 > gamma * e1 and e3 > gamma * e1:
        return OrientationBranch.REJECTED, None
    if e2 > gamma * e1:
        d = np.cross(v1, v2)
        d = d / np.linalg.norm(d)
        branch = OrientationBranch.PLANAR
    else:
        d = v1
        branch = OrientationBranch.LINEAR

    if d[2] < 0 or (d[2] == 0 and (d[0] < 0 or (d[0] == 0 and d[1] < 0))):
        d = -d
    return branch, d


def dominant_orientation(patch: SupportPatch, k: CameraIntrinsics,
                         params: DescriptorParams = DescriptorParams()) -> float | None:
    """Image-plane angle of the patch's dominant 3-D direction, or None if rejected."""
    branch, d = principal_direction(patch.points_3d, params.gamma)
    if branch is OrientationBranch.REJECTED:
        return None
    direction = project_direction(d, k)
    return math.atan2(direction[1], direction[0])


def spatial_sector(du, dv, theta: float, n_pie: int):
    """1-based sector of offset (du, dv) in a frame rotated by theta."""
    ang = np.mod(np.arctan2(dv, du) - theta, 2.0 * np.pi)
    sector = np.floor(ang * n_pie / (2.0 * np.pi)).astype(np.int64)
    return np.minimum(sector, n_pie - 1) + 1


def _rank_labels(values: np.ndarray, n_groups: int) -> np.ndarray:
    """Equal-cardinality rank groups, 1-based; ties keep input (scanline) order."""
    n = values.shape[0]
    order = np.argsort(values, kind="stable")
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    return (ranks * n_groups) // n + 1


def build_descriptor(frame: RgbdFrame, nimg: NormalImage, patch: SupportPatch,
                     params: DescriptorParams = DescriptorParams()) -> Descriptor:
    """Histogram the patch over spatial, intensity-rank, and normal-rank labels.

    Only pixels with a valid normal participate; ranks are computed within
    that set. Returns a flagged-empty descriptor when no pixel qualifies or
    the keypoint itself has no valid normal.
    """
    if patch.theta is None:
        raise ValueError("patch has no orientation; run dominant_orientation first")
    kp = patch.keypoint
    dim = params.dim

    n_k = nimg.normals[kp.v, kp.u]
    us = patch.pixels_2d[:, 0]
    vs = patch.pixels_2d[:, 1]
    sel = nimg.valid[vs, us]
    if not nimg.valid[kp.v, kp.u] or not sel.any():
        return Descriptor(bins=np.zeros(dim), keypoint=kp, theta=patch.theta, empty=True)

    us = us[sel]
    vs = vs[sel]
    normals = nimg.normals[vs, us]

    sectors = spatial_sector(us.astype(np.float64) - kp.u,
                             vs.astype(np.float64) - kp.v,
                             patch.theta, params.n_pie)

    intensity = frame.gray[vs, us]
    int_labels = _rank_labels(intensity, params.n_bin)

    rho = np.abs(normals @ n_k)
    norm_labels = np.empty(rho.shape[0], dtype=np.int64)
    top = rho >= params.rho_bar
    norm_labels[top] = params.n_vec + 1
    rest = ~top
    if rest.any():
        norm_labels[rest] = _rank_labels(rho[rest], params.n_vec)

    idx = ((sectors - 1) * params.n_bin + (int_labels - 1)) * (params.n_vec + 1) \
        + (norm_labels - 1)
    bins = np.bincount(idx, minlength=dim).astype(np.float64)
    bins /= bins.sum()
    return Descriptor(bins=bins, keypoint=kp, theta=patch.theta, empty=False)


@dataclass(frozen=True)
class RejectRecord:
    index: int
    keypoint: Keypoint
    reason: str


@dataclass(frozen=True)
class DescribeResult:
    items: list          # list of (Keypoint, Descriptor)
    rejects: list        # list of RejectRecord

    def descriptors(self) -> np.ndarray:
        return np.array([d.bins for _, d in self.items])

    def keypoints(self) -> list:
        return [kp for kp, _ in self.items]


def describe_frame(frame: RgbdFrame, nimg: NormalImage, keypoints: list,
                   params: DescriptorParams = DescriptorParams()) -> DescribeResult:
    """Run scale, support, orientation, and histogram for every keypoint.

    Keypoints that fail any stage are omitted from the results and recorded
    with the failing reason.
    """
    bounds = scale_bounds(frame)
    items = []
    rejects = []
    for i, kp in enumerate(keypoints):
        try:
            patch = select_support(frame, kp, params, bounds=bounds)
        except TooFewPointsError:
            rejects.append(RejectRecord(i, kp, "too_few_points"))
            continue
        try:
            theta = dominant_orientation(patch, frame.intrinsics, params)
        except DegenerateDirectionError:
            rejects.append(RejectRecord(i, kp, "degenerate_direction"))
            continue
        if theta is None:
            rejects.append(RejectRecord(i, kp, "orientation_rejected"))
            continue
        patch = replace(patch, theta=theta)
        desc = build_descriptor(frame, nimg, patch, params)
        if desc.empty:
            rejects.append(RejectRecord(i, kp, "empty_descriptor"))
            continue
        items.append((kp, desc))
    for rec in rejects:
        log.debug("keypoint %d at (%d, %d) dropped: %s",
                  rec.index, rec.keypoint.u, rec.keypoint.v, rec.reason)
    return DescribeResult(items=items, rejects=rejects)
