"""Pure-numpy reference versions of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np


def ensemble_rk4(psi, xhat, stage_X, stage_x, corr, gain, dt):
    """RK4 step of every vertex estimator.

    Vertex ``i`` obeys ``xhat_i' = psi_i X + corr_i`` and
    ``psi_i' = gain (x - xhat_i) X^T`` where ``x`` and ``X`` are the plant
    measurement and lumped regressor at each of the four RK4 stages.
    """
    psi = np.asarray(psi, dtype=float)
    xhat = np.asarray(xhat, dtype=float)

    def rates(p, xh, s):
        X = stage_X[s]
        dx = np.einsum("qnr,r->qn", p, X) + corr
        dp = gain * (stage_x[s] - xh)[:, :, None] * X[None, None, :]
        return dx, dp

    kx1, kp1 = rates(psi, xhat, 0)
    kx2, kp2 = rates(psi + 0.5 * dt * kp1, xhat + 0.5 * dt * kx1, 1)
    kx3, kp3 = rates(psi + 0.5 * dt * kp2, xhat + 0.5 * dt * kx2, 2)
    kx4, kp4 = rates(psi + dt * kp3, xhat + dt * kx3, 3)
    xhat_new = xhat + dt / 6.0 * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4)
    psi_new = psi + dt / 6.0 * (kp1 + 2.0 * kp2 + 2.0 * kp3 + kp4)
    return psi_new, xhat_new


def polyline_clear(points, box_lo, box_hi, bound_lo, bound_hi):
    """True when every vertex lies in the closed bounds and no segment enters
    the open interior of any box."""
    pts = np.asarray(points, dtype=float)
    if np.any(pts < bound_lo) or np.any(pts > bound_hi):
        return False
    box_lo = np.asarray(box_lo, dtype=float).reshape(-1, pts.shape[1])
    box_hi = np.asarray(box_hi, dtype=float).reshape(-1, pts.shape[1])
    if box_lo.shape[0] == 0:
        return True
    if len(pts) == 1:
        inside = np.all((pts[0] > box_lo) & (pts[0] < box_hi), axis=1)
        return not bool(np.any(inside))
    a = pts[:-1, None, :]
    d = (pts[1:] - pts[:-1])[:, None, :]
    lo = box_lo[None, :, :]
    hi = box_hi[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - a) / d
        t2 = (hi - a) / d
    flat = d == 0
    tmin_ax = np.where(flat, -np.inf, np.minimum(t1, t2))
    tmax_ax = np.where(flat, np.inf, np.maximum(t1, t2))
    # parallel axis: overlap only if the coordinate is strictly inside the slab
    blocked = flat & ~((a > lo) & (a < hi))
    tmin = np.maximum(0.0, tmin_ax.max(axis=2))
    tmax = np.minimum(1.0, tmax_ax.min(axis=2))
    hit = (tmin < tmax) & ~blocked.any(axis=2)
    return not bool(hit.any())
