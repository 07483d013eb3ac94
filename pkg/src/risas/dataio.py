"""Dataset and artifact I/O.

File conventions follow the common RGB-D corpus layout: color as 8-bit
grayscale or RGB PNG, depth as 16-bit PNG in millimeters with 0 marking
invalid pixels. Descriptors use a little-endian binary format:
magic "RISD", u32 count, u32 dim, then per record
{f32 u, f32 v, f32 depth, f32 theta, dim x f32 bins}.
"""

from __future__ import annotations

import csv
import json
import struct

import numpy as np
from PIL import Image

from .core import CameraIntrinsics, RgbdFrame, backproject, load_intrinsics
from .descriptor import Descriptor
from .detector import Keypoint
from .errors import DimensionMismatchError, UnsupportedBitDepthError
from .matching import Match

_MAGIC = b"RISD"

# ITU-R 601 luma weights for RGB to gray conversion.
_LUMA = np.array([0.299, 0.587, 0.114])


def load_gray(path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)
        if img.mode in ("RGB", "RGBA"):
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
            return np.rint(rgb @ _LUMA).astype(np.uint8)
        raise UnsupportedBitDepthError(
            f"color image must be 8-bit gray or RGB, got mode {img.mode!r}"
        )


def load_depth(path) -> np.ndarray:
    """16-bit millimeter PNG to float64 meters; 0 stays invalid."""
    with Image.open(path) as img:
        if img.mode not in ("I", "I;16", "I;16B", "I;16L"):
            raise UnsupportedBitDepthError(
                f"depth image must be a 16-bit PNG, got mode {img.mode!r}"
            )
        raw = np.asarray(img)
    if raw.min() < 0 or raw.max() > 65535:
        raise UnsupportedBitDepthError("depth values exceed the 16-bit range")
    return raw.astype(np.float64) / 1000.0


def save_depth(depth_m: np.ndarray, path) -> None:
    mm = np.clip(np.rint(np.asarray(depth_m) * 1000.0), 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(path, format="PNG")


def save_gray(gray: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(gray, dtype=np.uint8), mode="L").save(path, format="PNG")


def load_frame(color_path, depth_path, intrinsics) -> RgbdFrame:
    """Assemble an RGB-D frame from files, validating dimensions."""
    if not isinstance(intrinsics, CameraIntrinsics):
        intrinsics = load_intrinsics(intrinsics)
    gray = load_gray(color_path)
    depth = load_depth(depth_path)
    if gray.shape != depth.shape:
        raise DimensionMismatchError(
            f"color {gray.shape} and depth {depth.shape} sizes differ"
        )
    return RgbdFrame(gray=gray, depth=depth, intrinsics=intrinsics)


def save_keypoints(keypoints: list, path) -> None:
    data = [{"u": kp.u, "v": kp.v, "response": kp.response, "depth": kp.depth}
            for kp in keypoints]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def load_keypoints(path, intrinsics: CameraIntrinsics) -> list:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    out = []
    for rec in data:
        u, v, d = int(rec["u"]), int(rec["v"]), float(rec["depth"])
        out.append(Keypoint(u=u, v=v, response=float(rec.get("response", 0.0)),
                            depth=d, position=backproject(u, v, d, intrinsics)))
    return out


def save_descriptors(items: list, path) -> None:
    """items: list of (Keypoint, Descriptor) pairs sharing one dimension."""
    dim = len(items[0][1].bins) if items else 0
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", len(items), dim))
        for kp, desc in items:
            if len(desc.bins) != dim:
                raise DimensionMismatchError("descriptors have mixed dimensions")
            f.write(struct.pack("<ffff", kp.u, kp.v, kp.depth, desc.theta))
            f.write(np.asarray(desc.bins, dtype="<f4").tobytes())


def load_descriptors(path, intrinsics: CameraIntrinsics) -> list:
    """Read (Keypoint, Descriptor) pairs; responses are not stored and read 0."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad descriptor file magic {magic!r}")
        count, dim = struct.unpack("<II", f.read(8))
        items = []
        for _ in range(count):
            u, v, depth, theta = struct.unpack("<ffff", f.read(16))
            bins = np.frombuffer(f.read(4 * dim), dtype="<f4").astype(np.float64)
            kp = Keypoint(u=int(round(u)), v=int(round(v)), response=0.0,
                          depth=float(depth),
                          position=backproject(round(u), round(v), float(depth),
                                               intrinsics))
            items.append((kp, Descriptor(bins=bins, keypoint=kp, theta=float(theta))))
    return items


def save_matches(matches: list, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index_a", "index_b", "distance", "ratio", "correct"])
        for m in matches:
            correct = "" if m.correct is None else ("1" if m.correct else "0")
            writer.writerow([m.index_a, m.index_b, repr(m.distance), repr(m.ratio),
                             correct])


def load_matches(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            correct = None if row["correct"] == "" else row["correct"] == "1"
            out.append(Match(index_a=int(row["index_a"]), index_b=int(row["index_b"]),
                             distance=float(row["distance"]), ratio=float(row["ratio"]),
                             correct=correct))
    return out


def save_pr_curve(curve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["ratio", "precision", "recall"])
        for p in curve.points:
            writer.writerow([repr(p.ratio), repr(p.precision), repr(p.recall)])


def plot_pr_curve(curve, path) -> None:
    """Optional SVG plot of the precision-recall sweep."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    recalls = [p.recall for p in curve.points]
    precisions = [p.precision for p in curve.points]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(recalls, precisions, marker="o")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.0)
    ax.set_ylim(0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
