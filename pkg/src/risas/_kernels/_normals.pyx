# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled normal-estimation kernel.

Per-pixel plane fit over the back-projected points of a square window,
gated so only neighbors within `depth_gate` meters of the center depth
contribute. Must stay semantically in sync with _normals_np.py.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport acos, cos, fabs, sqrt

cnp.import_array()

cdef double P_TINY = 1e-30
cdef double GAP_REL = 1e-9
cdef double TWO_PI_3 = 2.0943951023931953  # 2*pi/3


cdef inline void _cross(double ax, double ay, double az,
                        double bx, double by, double bz,
                        double* ox, double* oy, double* oz) nogil:
    ox[0] = ay * bz - az * by
    oy[0] = az * bx - ax * bz
    oz[0] = ax * by - ay * bx


cdef inline int _smallest_eigenvector(double a, double b, double c,
                                      double d, double e, double f,
                                      double* nx, double* ny, double* nz) nogil:
    """Smallest-eigenvalue eigenvector of [[a,d,e],[d,b,f],[e,f,c]].

    Returns 1 on success; 0 when the smallest eigenspace is ambiguous.
    """
    cdef double q, aq, bq, cq, p2, p, ba, bb, bc, bd, be, bf
    cdef double detb, r, phi, e1, e2, e3
    cdef double am, bm, cm
    cdef double c0x, c0y, c0z, c1x, c1y, c1z, c2x, c2y, c2z
    cdef double n0, n1, n2, best, norm
    cdef double vx, vy, vz

    q = (a + b + c) / 3.0
    aq = a - q
    bq = b - q
    cq = c - q
    p2 = aq * aq + bq * bq + cq * cq + 2.0 * (d * d + e * e + f * f)
    p = sqrt(p2 / 6.0) if p2 > 0.0 else 0.0
    if p <= P_TINY:
        return 0

    ba = aq / p
    bb = bq / p
    bc = cq / p
    bd = d / p
    be = e / p
    bf = f / p
    detb = (ba * (bb * bc - bf * bf)
            - bd * (bd * bc - bf * be)
            + be * (bd * bf - bb * be))
    r = detb / 2.0
    if r < -1.0:
        r = -1.0
    elif r > 1.0:
        r = 1.0
    phi = acos(r) / 3.0

    e1 = q + 2.0 * p * cos(phi)
    e3 = q + 2.0 * p * cos(phi + TWO_PI_3)
    e2 = 3.0 * q - e1 - e3

    if e1 <= 0.0:
        return 0
    if (e2 - e3) <= GAP_REL * (e1 if e1 > P_TINY else P_TINY):
        return 0

    am = a - e3
    bm = b - e3
    cm = c - e3
    # Rows of (A - e3 I): (am, d, e), (d, bm, f), (e, f, cm).
    _cross(am, d, e, d, bm, f, &c0x, &c0y, &c0z)
    _cross(am, d, e, e, f, cm, &c1x, &c1y, &c1z)
    _cross(d, bm, f, e, f, cm, &c2x, &c2y, &c2z)
    n0 = c0x * c0x + c0y * c0y + c0z * c0z
    n1 = c1x * c1x + c1y * c1y + c1z * c1z
    n2 = c2x * c2x + c2y * c2y + c2z * c2z

    if n0 >= n1 and n0 >= n2:
        best = n0
        vx = c0x
        vy = c0y
        vz = c0z
    elif n1 >= n2:
        best = n1
        vx = c1x
        vy = c1y
        vz = c1z
    else:
        best = n2
        vx = c2x
        vy = c2y
        vz = c2z
    if best <= 0.0:
        return 0
    norm = sqrt(best)
    nx[0] = vx / norm
    ny[0] = vy / norm
    nz[0] = vz / norm
    return 1


def estimate_normals_field(depth, double fx, double fy, double cx, double cy,
                           int window, double min_valid_frac, double depth_gate):
    """Estimate unit camera-facing surface normals for every depth pixel.

    Returns (normals, valid) exactly as the numpy fallback does.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dep = np.ascontiguousarray(depth, dtype=np.float64)
    cdef Py_ssize_t h = dep.shape[0]
    cdef Py_ssize_t w = dep.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] normals = np.zeros((h, w, 3), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] valid = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = (np.arange(w, dtype=np.float64) - cx) / fx
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ys = (np.arange(h, dtype=np.float64) - cy) / fy

    cdef Py_ssize_t half = window // 2
    cdef double min_cnt = min_valid_frac * window * window
    cdef Py_ssize_t i, j, ii, jj, i0, i1, j0, j1
    cdef double dc, dn, px, py, pz
    cdef double cnt, sx, sy, sz, sxx, syy, szz, sxy, sxz, syz
    cdef double mx, my, mz, cxx, cyy, czz, cxy, cxz, cyz
    cdef double nx, ny, nz
    cdef int okflag

    with nogil:
        for i in range(h):
            for j in range(w):
                dc = dep[i, j]
                if dc <= 0.0:
                    continue
                i0 = i - half if i - half > 0 else 0
                i1 = i + half if i + half < h - 1 else h - 1
                j0 = j - half if j - half > 0 else 0
                j1 = j + half if j + half < w - 1 else w - 1
                cnt = 0.0
                sx = sy = sz = 0.0
                sxx = syy = szz = 0.0
                sxy = sxz = syz = 0.0
                for ii in range(i0, i1 + 1):
                    for jj in range(j0, j1 + 1):
                        dn = dep[ii, jj]
                        if dn <= 0.0:
                            continue
                        if fabs(dn - dc) > depth_gate:
                            continue
                        px = xs[jj] * dn
                        py = ys[ii] * dn
                        pz = dn
                        cnt += 1.0
                        sx += px
                        sy += py
                        sz += pz
                        sxx += px * px
                        syy += py * py
                        szz += pz * pz
                        sxy += px * py
                        sxz += px * pz
                        syz += py * pz
                if cnt < min_cnt or cnt < 3.0:
                    continue
                mx = sx / cnt
                my = sy / cnt
                mz = sz / cnt
                cxx = sxx / cnt - mx * mx
                cyy = syy / cnt - my * my
                czz = szz / cnt - mz * mz
                cxy = sxy / cnt - mx * my
                cxz = sxz / cnt - mx * mz
                cyz = syz / cnt - my * mz
                okflag = _smallest_eigenvector(cxx, cyy, czz, cxy, cxz, cyz,
                                               &nx, &ny, &nz)
                if okflag == 0:
                    continue
                if nz > 0.0 or (nz == 0.0 and (nx < 0.0 or (nx == 0.0 and ny < 0.0))):
                    nx = -nx
                    ny = -ny
                    nz = -nz
                normals[i, j, 0] = nx
                normals[i, j, 1] = ny
                normals[i, j, 2] = nz
                valid[i, j] = 1

    return normals, valid.astype(bool)
