"""Keypoint detection from a blended appearance + shape corner response.

Structure tensors are computed separately for the grayscale image and the
dot-product shape channel, combined as tau * M_gray + (1 - tau) * M_shape,
and scored with the classical det(M) - k * trace(M)^2 corner response.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Point3, RgbdFrame, backproject
from .errors import DimensionMismatchError
from .surface import DotProductImage


@dataclass(frozen=True)
class DetectorParams:
    tau: float = 0.8              # appearance weight in [0, 1]
    window_sigma: float = 2.0     # Gaussian window scale, pixels
    harris_k: float = 0.04
    nms_radius: int = 4
    max_keypoints: int = 1000
    response_floor: float = 0.01  # relative to the per-frame max response

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.window_sigma <= 0:
            raise ValueError(f"window_sigma must be positive, got {self.window_sigma}")
        if self.nms_radius < 1:
            raise ValueError(f"nms_radius must be >= 1, got {self.nms_radius}")


@dataclass(frozen=True)
class Keypoint:
    u: int
    v: int
    response: float
    depth: float
    position: Point3


def _structure_tensor(img: np.ndarray, weight_mask: np.ndarray | None,
                      sigma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian-weighted gradient outer products (Sxx, Syy, Sxy).

    weight_mask, when given, zeroes the gradient products at pixels whose 3x3
    Sobel stencil touches an invalid pixel, so those pixels contribute nothing
    to any window they fall in.
    """
    gx = ndimage.sobel(img, axis=1, mode="reflect")
    gy = ndimage.sobel(img, axis=0, mode="reflect")
    pxx = gx * gx
    pyy = gy * gy
    pxy = gx * gy
    if weight_mask is not None:
        pxx = np.where(weight_mask, pxx, 0.0)
        pyy = np.where(weight_mask, pyy, 0.0)
        pxy = np.where(weight_mask, pxy, 0.0)
    sxx = ndimage.gaussian_filter(pxx, sigma, truncate=3.0, mode="reflect")
    syy = ndimage.gaussian_filter(pyy, sigma, truncate=3.0, mode="reflect")
    sxy = ndimage.gaussian_filter(pxy, sigma, truncate=3.0, mode="reflect")
    return sxx, syy, sxy


def blended_response(frame: RgbdFrame, dp: DotProductImage,
                     params: DetectorParams = DetectorParams()) -> np.ndarray:
    """Corner response of the tau-blended gray + shape structure tensor."""
    if dp.values.shape != frame.gray.shape:
        raise DimensionMismatchError(
            f"dp shape {dp.values.shape} != frame shape {frame.gray.shape}"
        )
    gray = frame.gray.astype(np.float64)
    dpf = np.where(dp.valid, dp.values.astype(np.float64), 0.0)
    # A dp gradient is trusted only where the whole Sobel stencil is valid.
    stencil_ok = ndimage.binary_erosion(
        dp.valid, structure=np.ones((3, 3), dtype=bool), border_value=1
    )

    ixx, iyy, ixy = _structure_tensor(gray, None, params.window_sigma)
    pxx, pyy, pxy = _structure_tensor(dpf, stencil_ok, params.window_sigma)

    tau = params.tau
    mxx = tau * ixx + (1.0 - tau) * pxx
    myy = tau * iyy + (1.0 - tau) * pyy
    mxy = tau * ixy + (1.0 - tau) * pxy

    det = mxx * myy - mxy * mxy
    trace = mxx + myy
    return det - params.harris_k * trace * trace


def _greedy_nms(candidates: np.ndarray, radius: int) -> np.ndarray:
    """Greedy non-max suppression; keeps points pairwise farther than radius.

    candidates: (N, 2) array of (v, u), pre-sorted by decreasing response.
    Returns indices of the surviving rows.
    """
    r2 = radius * radius
    cell = max(radius, 1)
    grid: dict[tuple[int, int], list[int]] = {}
    kept: list[int] = []
    for idx in range(candidates.shape[0]):
        v, u = candidates[idx]
        cv, cu = v // cell, u // cell
        ok = True
        for gv in range(cv - 2, cv + 3):
            for gu in range(cu - 2, cu + 3):
                for j in grid.get((gv, gu), ()):
                    dv = int(candidates[j, 0]) - int(v)
                    du = int(candidates[j, 1]) - int(u)
                    if dv * dv + du * du <= r2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            kept.append(idx)
            grid.setdefault((cv, cu), []).append(idx)
    return np.asarray(kept, dtype=np.intp)


def detect(frame: RgbdFrame, dp: DotProductImage,
           params: DetectorParams = DetectorParams()) -> list[Keypoint]:
    """Threshold the blended response, suppress non-maxima, keep the best.

    Pixels without valid depth are never candidates (no 3-D position makes
    them unusable downstream). Returns an empty list when nothing passes.
    """
    response = blended_response(frame, dp, params)
    max_resp = float(response.max(initial=0.0))
    if max_resp <= 0.0:
        return []
    threshold = params.response_floor * max_resp

    mask = (response >= threshold) & frame.valid_depth
    vs, us = np.nonzero(mask)
    if vs.size == 0:
        return []
    resp = response[vs, us]
    # Decreasing response, scanline tie-break: deterministic output.
    order = np.lexsort((us, vs, -resp))
    cand = np.column_stack([vs[order], us[order]])
    kept = _greedy_nms(cand, params.nms_radius)
    kept = kept[: params.max_keypoints]

    k = frame.intrinsics
    out = []
    for idx in kept:
        v, u = int(cand[idx, 0]), int(cand[idx, 1])
        d = float(frame.depth[v, u])
        out.append(Keypoint(u=u, v=v, response=float(response[v, u]), depth=d,
                            position=backproject(u, v, d, k)))
    return out
