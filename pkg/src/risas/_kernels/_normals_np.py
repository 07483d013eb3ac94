"""Pure-numpy normal-estimation kernel; fallback when the compiled one is absent.

Same contract as the Cython kernel: per-pixel plane fit (PCA) over the
back-projected points of a square window, keeping only neighbors whose depth
is within `depth_gate` of the center pixel so depth discontinuities do not
bend normals across object boundaries.
"""

from __future__ import annotations

import numpy as np

# Shared with the compiled kernel; keep in sync.
_P_TINY = 1e-30
_GAP_REL = 1e-9


def _smallest_eigenvector_sym3(a, b, c, d, e, f):
    """Smallest-eigenvalue eigenvector of symmetric [[a,d,e],[d,b,f],[e,f,c]].

    All arguments are broadcastable arrays. Returns (vec, ok) where vec has
    shape (..., 3) and ok flags entries with a well-separated smallest
    eigenvalue (gap test); vec rows with ok=False are unspecified.
    """
    q = (a + b + c) / 3.0
    aq, bq, cq = a - q, b - q, c - q
    p2 = aq * aq + bq * bq + cq * cq + 2.0 * (d * d + e * e + f * f)
    p = np.sqrt(np.maximum(p2 / 6.0, 0.0))
    ok = p > _P_TINY
    ps = np.where(ok, p, 1.0)

    # det((A - qI)/p) / 2, clamped for acos.
    ba, bb, bc = aq / ps, bq / ps, cq / ps
    bd, be, bf = d / ps, e / ps, f / ps
    detb = (ba * (bb * bc - bf * bf)
            - bd * (bd * bc - bf * be)
            + be * (bd * bf - bb * be))
    r = np.clip(detb / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0

    e1 = q + 2.0 * p * np.cos(phi)
    e3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    e2 = 3.0 * q - e1 - e3

    # Ambiguous smallest eigenspace (collinear or isotropic windows).
    ok &= (e2 - e3) > _GAP_REL * np.maximum(e1, _P_TINY)
    ok &= e1 > 0.0

    # Null-space extraction: cross products of rows of (A - e3 I).
    am, bm, cm = a - e3, b - e3, c - e3
    r0 = np.stack([am, d, e], axis=-1)
    r1 = np.stack([d, bm, f], axis=-1)
    r2 = np.stack([e, f, cm], axis=-1)
    c01 = np.cross(r0, r1)
    c02 = np.cross(r0, r2)
    c12 = np.cross(r1, r2)
    n01 = np.sum(c01 * c01, axis=-1)
    n02 = np.sum(c02 * c02, axis=-1)
    n12 = np.sum(c12 * c12, axis=-1)

    vec = np.where(((n01 >= n02) & (n01 >= n12))[..., None], c01,
                   np.where((n02 >= n12)[..., None], c02, c12))
    best = np.maximum(n01, np.maximum(n02, n12))
    ok &= best > 0.0
    norm = np.sqrt(np.where(best > 0.0, best, 1.0))
    vec = vec / norm[..., None]
    return vec, ok


def estimate_normals_field(depth, fx, fy, cx, cy, window, min_valid_frac, depth_gate):
    """Estimate unit surface normals for every pixel of a depth image.

    Returns (normals, valid): normals is (H, W, 3) float64 with camera-facing
    orientation (nz <= 0); valid is (H, W) bool. A pixel is invalid when its
    own depth is invalid, fewer than `min_valid_frac` of the window's pixels
    are usable (valid depth and within `depth_gate` meters of the center
    depth), or the window geometry is degenerate.
    """
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    half = window // 2
    valid_px = depth > 0

    xs = (np.arange(w, dtype=np.float64) - cx) / fx
    ys = (np.arange(h, dtype=np.float64) - cy) / fy
    x = xs[None, :] * depth
    y = ys[:, None] * depth
    z = depth

    # Moment stack: count, x, y, z, xx, yy, zz, xy, xz, yz.
    prods = np.empty((10, h, w), dtype=np.float64)
    prods[0] = 1.0
    prods[1], prods[2], prods[3] = x, y, z
    prods[4], prods[5], prods[6] = x * x, y * y, z * z
    prods[7], prods[8], prods[9] = x * y, x * z, y * z

    acc = np.zeros((10, h, w), dtype=np.float64)
    for di in range(-half, half + 1):
        for dj in range(-half, half + 1):
            a_r = slice(max(0, -di), h - max(0, di))
            a_c = slice(max(0, -dj), w - max(0, dj))
            b_r = slice(max(0, di), h - max(0, -di))
            b_c = slice(max(0, dj), w - max(0, -dj))
            m = valid_px[b_r, b_c] & (
                np.abs(depth[b_r, b_c] - depth[a_r, a_c]) <= depth_gate
            )
            acc[:, a_r, a_c] += m * prods[:, b_r, b_c]

    cnt = acc[0]
    enough = cnt >= min_valid_frac * (window * window)
    usable = valid_px & enough & (cnt >= 3)

    safe = np.where(cnt > 0, cnt, 1.0)
    mx, my, mz = acc[1] / safe, acc[2] / safe, acc[3] / safe
    cxx = acc[4] / safe - mx * mx
    cyy = acc[5] / safe - my * my
    czz = acc[6] / safe - mz * mz
    cxy = acc[7] / safe - mx * my
    cxz = acc[8] / safe - mx * mz
    cyz = acc[9] / safe - my * mz

    vec, ok = _smallest_eigenvector_sym3(cxx, cyy, czz, cxy, cxz, cyz)
    valid = usable & ok

    nx, ny, nz = vec[..., 0], vec[..., 1], vec[..., 2]
    flip = (nz > 0) | ((nz == 0) & ((nx < 0) | ((nx == 0) & (ny < 0))))
    vec = np.where(flip[..., None], -vec, vec)

    normals = np.where(valid[..., None], vec, 0.0)
    return normals, valid
