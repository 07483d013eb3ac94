"""Per-pixel surface normals and the viewpoint-normalized shape channel.

The shape channel is built in four steps: estimate a unit normal per depth
pixel, quantize the angles each normal makes with the camera axes into
sectors, vote a scene-wide "main" normal from the per-axis sector histograms,
and encode |normal . main| as an 8-bit image. Invalid pixels propagate: any
stage reading an invalid pixel emits invalid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import RgbdFrame
from .errors import EmptyFrameError

# Minimum fraction of the window that must hold usable neighbors.
MIN_VALID_NEIGHBOR_FRAC = 0.3


@dataclass(frozen=True)
class NormalImage:
    """Unit normals per pixel; entries at invalid pixels are zero."""

    normals: np.ndarray  # (H, W, 3) float64, camera-facing (nz <= 0)
    valid: np.ndarray    # (H, W) bool

    def __post_init__(self):
        self.normals.flags.writeable = False
        self.valid.flags.writeable = False


@dataclass(frozen=True)
class AngleLabels:
    """Per-pixel sector labels of the angles to the x, y, z camera axes.

    Sector k (1-based) covers [(k-1)*180/n_s, k*180/n_s) degrees, with 180
    clamped into sector n_s. Label 0 marks invalid pixels.
    """

    labels: np.ndarray  # (H, W, 3) int16
    n_s: int
    valid: np.ndarray   # (H, W) bool


@dataclass(frozen=True)
class MainNormal:
    """Most frequent per-axis sector triple and its reconstructed direction."""

    label_triple: tuple[int, int, int]
    vector: np.ndarray  # unit 3-vector


@dataclass(frozen=True)
class DotProductImage:
    """8-bit image of |normal . main normal| per pixel; the detector's shape channel."""

    values: np.ndarray  # (H, W) uint8
    valid: np.ndarray   # (H, W) bool


def estimate_normals(frame: RgbdFrame, window: int = 11,
                     depth_gate: float = 0.1) -> NormalImage:
    """Plane-fit a unit normal at every valid depth pixel.

    The normal is the smallest-eigenvalue eigenvector of the covariance of the
    back-projected points in a `window` x `window` neighborhood, oriented to
    face the camera (nz <= 0). Neighbors farther than `depth_gate` meters in
    depth from the center are excluded so normals do not bridge depth
    discontinuities; pass `depth_gate=float("inf")` to disable the gate.
    Pixels with fewer than 30% usable neighbors come out invalid.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd count >= 3, got {window}")
    k = frame.intrinsics
    normals, valid = _kernels.estimate_normals_field(
        frame.depth, k.fx, k.fy, k.cx, k.cy, window,
        MIN_VALID_NEIGHBOR_FRAC, depth_gate,
    )
    return NormalImage(normals=normals, valid=valid)


def _sector_index(angles_deg: np.ndarray, n_s: int) -> np.ndarray:
    """Right-open sector of an angle in [0, 180]; the top value clamps to n_s."""
    idx = np.floor(angles_deg * n_s / 180.0).astype(np.int16) + 1
    return np.clip(idx, 1, n_s)


def label_angles(nimg: NormalImage, n_s: int = 4) -> AngleLabels:
    """Quantize each normal's angles to the x, y, z axes into n_s sectors."""
    if n_s < 2:
        raise ValueError(f"n_s must be >= 2, got {n_s}")
    comp = np.clip(nimg.normals, -1.0, 1.0)
    angles = np.degrees(np.arccos(comp))
    labels = _sector_index(angles, n_s)
    labels[~nimg.valid] = 0
    return AngleLabels(labels=labels, n_s=n_s, valid=nimg.valid)


def main_normal(labels: AngleLabels, n_s: int | None = None) -> MainNormal:
    """Vote the scene's dominant normal from the per-axis sector histograms.

    Each axis channel takes its most frequent sector; the direction is rebuilt
    from the winning sectors' midpoint-angle cosines and renormalized (the
    quantized midpoints generally violate the direction-cosine identity).
    """
    if n_s is None:
        n_s = labels.n_s
    if not labels.valid.any():
        raise EmptyFrameError("no valid pixels to vote a main normal from")
    triple = []
    for ch in range(3):
        votes = labels.labels[..., ch][labels.valid]
        hist = np.bincount(votes, minlength=n_s + 1)[1:]
        triple.append(int(np.argmax(hist)) + 1)
    midpoints = np.radians((np.array(triple, dtype=np.float64) - 0.5) * 180.0 / n_s)
    vec = np.cos(midpoints)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        # All midpoints at 90 degrees (possible for odd n_s); fall back to
        # the optical axis.
        vec = np.array([0.0, 0.0, 1.0])
        norm = 1.0
    return MainNormal(label_triple=tuple(triple), vector=vec / norm)


def dot_product_image(nimg: NormalImage, main: MainNormal) -> DotProductImage:
    """Encode |normal . main normal| into [0, 255] per valid pixel."""
    dots = np.abs(nimg.normals @ main.vector)
    values = np.rint(255.0 * np.clip(dots, 0.0, 1.0)).astype(np.uint8)
    values[~nimg.valid] = 0
    return DotProductImage(values=values, valid=nimg.valid)


def compute_shape_channel(frame: RgbdFrame, window: int = 11, n_s: int = 4,
                          depth_gate: float = 0.1) -> tuple[NormalImage, DotProductImage]:
    """Run the full normal -> labels -> main normal -> dot-product chain."""
    nimg = estimate_normals(frame, window=window, depth_gate=depth_gate)
    if not nimg.valid.any():
        # Depth-free frame: an all-invalid shape channel, detector degrades
        # to appearance only.
        empty = DotProductImage(values=np.zeros(frame.depth.shape, dtype=np.uint8),
                                valid=nimg.valid)
        return nimg, empty
    labels = label_angles(nimg, n_s=n_s)
    main = main_normal(labels)
    return nimg, dot_product_image(nimg, main)
