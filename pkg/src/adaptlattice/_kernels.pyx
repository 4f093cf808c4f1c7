# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def ensemble_rk4(psi_in, xhat_in, stage_X_in, stage_x_in, corr_in, double gain, double dt):
    cdef double[:, :, ::1] psi = np.ascontiguousarray(psi_in, dtype=np.float64)
    cdef double[:, ::1] xhat = np.ascontiguousarray(xhat_in, dtype=np.float64)
    cdef double[:, ::1] SX = np.ascontiguousarray(stage_X_in, dtype=np.float64)
    cdef double[:, ::1] Sx = np.ascontiguousarray(stage_x_in, dtype=np.float64)
    cdef double[:, ::1] corr = np.ascontiguousarray(corr_in, dtype=np.float64)
    cdef Py_ssize_t q = psi.shape[0], n = psi.shape[1], r = psi.shape[2]
    psi_out_arr = np.empty((q, n, r))
    xhat_out_arr = np.empty((q, n))
    cdef double[:, :, ::1] psi_out = psi_out_arr
    cdef double[:, ::1] xhat_out = xhat_out_arr
    cdef double[:, ::1] kx = np.empty((4, n))
    cdef double[:, :, ::1] kp = np.empty((4, n, r))
    cdef double[::1] xs = np.empty(n)
    cdef double[:, ::1] ps = np.empty((n, r))
    cdef double c[4]
    cdef double w[4]
    c[0] = 0.0; c[1] = 0.5 * dt; c[2] = 0.5 * dt; c[3] = dt
    w[0] = 1.0; w[1] = 2.0; w[2] = 2.0; w[3] = 1.0
    cdef Py_ssize_t i, s, a, b
    cdef double acc, e
    for i in range(q):
        for s in range(4):
            for a in range(n):
                if s == 0:
                    xs[a] = xhat[i, a]
                else:
                    xs[a] = xhat[i, a] + c[s] * kx[s - 1, a]
                for b in range(r):
                    if s == 0:
                        ps[a, b] = psi[i, a, b]
                    else:
                        ps[a, b] = psi[i, a, b] + c[s] * kp[s - 1, a, b]
            for a in range(n):
                acc = corr[i, a]
                for b in range(r):
                    acc = acc + ps[a, b] * SX[s, b]
                kx[s, a] = acc
                e = gain * (Sx[s, a] - xs[a])
                for b in range(r):
                    kp[s, a, b] = e * SX[s, b]
        for a in range(n):
            acc = 0.0
            for s in range(4):
                acc = acc + w[s] * kx[s, a]
            xhat_out[i, a] = xhat[i, a] + dt / 6.0 * acc
            for b in range(r):
                acc = 0.0
                for s in range(4):
                    acc = acc + w[s] * kp[s, a, b]
                psi_out[i, a, b] = psi[i, a, b] + dt / 6.0 * acc
    return psi_out_arr, xhat_out_arr


def polyline_clear(points_in, box_lo_in, box_hi_in, bound_lo_in, bound_hi_in):
    cdef double[:, ::1] pts = np.ascontiguousarray(points_in, dtype=np.float64)
    cdef Py_ssize_t k = pts.shape[0], d = pts.shape[1]
    cdef double[:, ::1] blo = np.ascontiguousarray(box_lo_in, dtype=np.float64).reshape(-1, d)
    cdef double[:, ::1] bhi = np.ascontiguousarray(box_hi_in, dtype=np.float64).reshape(-1, d)
    cdef double[::1] lo = np.ascontiguousarray(bound_lo_in, dtype=np.float64)
    cdef double[::1] hi = np.ascontiguousarray(bound_hi_in, dtype=np.float64)
    cdef Py_ssize_t nb = blo.shape[0], i, j, a
    cdef double tmin, tmax, t1, t2, dd, p
    cdef bint blocked, inside
    for i in range(k):
        for a in range(d):
            if pts[i, a] < lo[a] or pts[i, a] > hi[a]:
                return False
    if k == 1:
        for j in range(nb):
            inside = True
            for a in range(d):
                if not (pts[0, a] > blo[j, a] and pts[0, a] < bhi[j, a]):
                    inside = False
                    break
            if inside:
                return False
        return True
    for i in range(k - 1):
        for j in range(nb):
            tmin = 0.0
            tmax = 1.0
            blocked = False
            for a in range(d):
                p = pts[i, a]
                dd = pts[i + 1, a] - p
                if dd == 0.0:
                    if not (p > blo[j, a] and p < bhi[j, a]):
                        blocked = True
                        break
                else:
                    t1 = (blo[j, a] - p) / dd
                    t2 = (bhi[j, a] - p) / dd
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > tmin:
                        tmin = t1
                    if t2 < tmax:
                        tmax = t2
            if not blocked and tmin < tmax:
                return False
    return True
