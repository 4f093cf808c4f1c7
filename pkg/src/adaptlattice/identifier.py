"""Multi-model adaptive identifier.

``q`` vertex estimators ``(psi_i, xhat_i)`` start at the vertices of the
uncertainty polytope and follow

    xhat_i' = theta_x_i phi(x) + theta_u_i u - theta_u_hat (u - uhat_i)
    psi_i'  = Gamma (x - xhat_i) [phi(x); u]^T,   then projected onto Psi.

Their convex hull is the model set ``S(t)``; the combined estimate is the
gamma-weighted vertex mean.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .dynamics import SystemModel
from .paramspace import (LumpedParams, ParamPolytope, check_weights, diam,
                         project_flat)
from .tube import check_input_matrix


@dataclass(frozen=True)
class IdentifierState:
    psi: np.ndarray  # (q, n, p + m)
    xhat: np.ndarray  # (q, n)
    gamma: np.ndarray
    Gamma: float
    k: float
    Psi: ParamPolytope
    S0_diam: float
    time: float = 0.0

    @property
    def q(self) -> int:
        return self.psi.shape[0]

    @property
    def p(self) -> int:
        return self.Psi.vertices[0].p

    def vertex_params(self) -> list[LumpedParams]:
        p = self.p
        return [LumpedParams.from_matrix(m, p) for m in self.psi]


def init_identifier(Psi: ParamPolytope, gamma, Gamma: float, k: float, x0) -> IdentifierState:
    g = check_weights(gamma, Psi.q)
    if not (Gamma > 0 and k > 0):
        raise ValueError("Gamma and k must be positive")
    psi = np.array([v.matrix for v in Psi.vertices])
    xhat = np.tile(np.asarray(x0, dtype=float), (Psi.q, 1))
    return IdentifierState(psi, xhat, g, float(Gamma), float(k), Psi, diam(Psi), 0.0)


def combined_estimate(ident: IdentifierState) -> tuple[LumpedParams, np.ndarray]:
    theta = (ident.gamma @ ident.psi.reshape(ident.q, -1)).reshape(ident.psi.shape[1:])
    return LumpedParams.from_matrix(theta, ident.p), ident.gamma @ ident.xhat


def model_set(ident: IdentifierState) -> ParamPolytope:
    return ParamPolytope(tuple(ident.vertex_params()))


def current_diam(ident: IdentifierState) -> float:
    return diam(model_set(ident))


def delta_bound(S0_diam: float, Gamma: float) -> float:
    """Tube radius ``sqrt(1/Gamma) * diam(S(t0))``."""
    if Gamma <= 0:
        raise ValueError("Gamma must be positive")
    return math.sqrt(1.0 / Gamma) * S0_diam


def identifier_step(sys: SystemModel, ident: IdentifierState, x_meas, u_applied, aux,
                    dt: float, stages: Sequence[tuple[float, np.ndarray]] | None = None
                    ) -> IdentifierState:
    """Advance every vertex estimator by ``dt`` and project onto ``Psi``.

    ``aux`` holds the per-vertex inputs ``uhat_i`` (shape (q, m)); inputs are
    held over the step.  ``stages`` are the four RK4 ``(t, x)`` measurement
    points of the plant step; without them ``x_meas`` is held over the step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = ident.p
    theta_hat = (ident.gamma @ ident.psi.reshape(ident.q, -1)).reshape(ident.psi.shape[1:])
    theta_u_hat = theta_hat[:, p:]
    check_input_matrix(theta_u_hat)
    u = np.asarray(u_applied, dtype=float)
    uhat = np.asarray(aux, dtype=float).reshape(ident.q, -1)
    corr = -(u[None, :] - uhat) @ theta_u_hat.T
    if stages is None:
        x = np.asarray(x_meas, dtype=float)
        t = ident.time
        stages = ((t, x), (t + 0.5 * dt, x), (t + 0.5 * dt, x), (t + dt, x))
    stage_x = np.array([s[1] for s in stages], dtype=float)
    stage_X = np.empty((4, p + u.shape[0]))
    for j, (ts, xs) in enumerate(stages):
        stage_X[j, :p] = sys.phi(xs, ts)
    stage_X[:, p:] = u
    psi_new, xhat_new = kernels.ensemble_rk4(ident.psi, ident.xhat, stage_X, stage_x, corr,
                                             ident.Gamma, dt)
    box = ident.Psi.box
    if box is not None:
        psi_new = np.clip(psi_new.reshape(ident.q, -1), box[0], box[1]).reshape(psi_new.shape)
    else:
        for i in range(ident.q):
            psi_new[i] = project_flat(ident.Psi, psi_new[i].ravel()).reshape(psi_new[i].shape)
    return replace(ident, psi=psi_new, xhat=xhat_new, time=ident.time + dt)


def raw_parameter_rates(sys: SystemModel, ident: IdentifierState, x, u, t: float = 0.0) -> np.ndarray:
    """Unprojected ``Gamma xtilde_i X^T`` for every vertex, shape (q, n, p + m)."""
    X = np.concatenate([sys.phi(x, t), np.asarray(u, dtype=float)])
    xt = np.asarray(x, dtype=float)[None, :] - ident.xhat
    return ident.Gamma * xt[:, :, None] * X[None, None, :]


def resync(ident: IdentifierState, x) -> IdentifierState:
    """Start a new segment: every ``xhat_i`` set to the measured state and
    ``S0_diam`` refreshed from the current model set."""
    xhat = np.tile(np.asarray(x, dtype=float), (ident.q, 1))
    return replace(ident, xhat=xhat, S0_diam=current_diam(ident))


def lyapunov_values(ident: IdentifierState, theta_true: LumpedParams, x) -> np.ndarray:
    """``0.5 |xtilde_i|^2 + 0.5 |Theta - psi_i|_F^2 / Gamma`` per vertex (test use)."""
    xt = np.asarray(x, dtype=float)[None, :] - ident.xhat
    pt = theta_true.matrix[None, :, :] - ident.psi
    return 0.5 * np.sum(xt ** 2, axis=1) + 0.5 * np.sum(pt ** 2, axis=(1, 2)) / ident.Gamma


class MetricsWriter:
    """Optional per-step CSV ``t,diam_S,norm_xtilde,delta``."""

    def __init__(self, path):
        self._fh = Path(path).open("w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(["t", "diam_S", "norm_xtilde", "delta"])

    def write(self, ident: IdentifierState, x) -> None:
        _, xh = combined_estimate(ident)
        row = (ident.time, current_diam(ident), float(np.linalg.norm(np.asarray(x) - xh)),
               delta_bound(ident.S0_diam, ident.Gamma))
        self._w.writerow([f"{v:.17g}" for v in row])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
