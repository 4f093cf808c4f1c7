"""Feedback that keeps the true state inside a tube around a nominal trajectory.

``h`` is the measurable mismatch between the estimated and nominal models,
``nu`` cancels it and adds ``-k`` feedback on ``x - xbar`` so that the applied
input is ``u = ubar + nu``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import SystemModel
from .paramspace import LumpedParams

COND_LIMIT = 1e12


class SingularInputMatrix(np.linalg.LinAlgError):
    """The input block is too badly conditioned to invert."""


_last_checked: list[bytes] = [b""]


def check_input_matrix(theta_u: np.ndarray) -> None:
    if theta_u.ndim != 2 or theta_u.shape[0] != theta_u.shape[1]:
        raise SingularInputMatrix(f"input block of shape {theta_u.shape} is not square")
    key = theta_u.tobytes()
    if key == _last_checked[0]:
        # the input block rarely changes between control steps
        return
    cond = np.linalg.cond(theta_u)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularInputMatrix(f"input block condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    _last_checked[0] = key


@dataclass(frozen=True)
class ControlContext:
    theta_bar: LumpedParams
    k: float
    sys: SystemModel

    def __post_init__(self):
        self.sys.check_params(self.theta_bar)
        check_input_matrix(self.theta_bar.theta_u)
        if self.k <= 0:
            raise ValueError("gain k must be positive")


def h_term(x, xbar, ubar, theta_hat: LumpedParams, ctx: ControlContext, t: float = 0.0) -> np.ndarray:
    tb = ctx.theta_bar
    phi_x = ctx.sys.phi(x, t)
    phi_xbar = ctx.sys.phi(xbar, t)
    return (theta_hat.theta_x @ phi_x - tb.theta_x @ phi_xbar
            + (theta_hat.theta_u - tb.theta_u) @ np.asarray(ubar, dtype=float))


def nu(x, xbar, ubar, theta_hat: LumpedParams, ctx: ControlContext, t: float = 0.0) -> np.ndarray:
    """Correction so that ``u = ubar + nu`` gives exponential nominal tracking."""
    check_input_matrix(theta_hat.theta_u)
    h = h_term(x, xbar, ubar, theta_hat, ctx, t)
    err = np.asarray(x, dtype=float) - np.asarray(xbar, dtype=float)
    return -np.linalg.solve(theta_hat.theta_u, h + ctx.k * err)


def combined_control(x, xbar, ubar, theta_hat: LumpedParams, x_hat, ctx: ControlContext,
                     t: float = 0.0) -> np.ndarray:
    """Input for the estimated system that makes ``x_hat`` track ``xbar``."""
    check_input_matrix(theta_hat.theta_u)
    h = h_term(x, xbar, ubar, theta_hat, ctx, t)
    err = np.asarray(x_hat, dtype=float) - np.asarray(xbar, dtype=float)
    return np.asarray(ubar, dtype=float) - np.linalg.solve(theta_hat.theta_u, h + ctx.k * err)


def vertex_controls(x, xbar, ubar, psi_hats: Sequence[LumpedParams], x_hats, gamma,
                    ctx: ControlContext, t: float = 0.0) -> list[np.ndarray]:
    """Per-vertex inputs whose gamma-combination is :func:`combined_control`.

    Each vertex uses its own parameter matrix inside ``h`` and its own state
    estimate in the feedback term; the inverse uses the combined input block.
    """
    gamma = np.asarray(gamma, dtype=float)
    theta_u_hat = sum(g * ps.theta_u for g, ps in zip(gamma, psi_hats))
    check_input_matrix(theta_u_hat)
    ubar = np.asarray(ubar, dtype=float)
    out = []
    for ps, xh in zip(psi_hats, x_hats):
        h = h_term(x, xbar, ubar, ps, ctx, t)
        err = np.asarray(xh, dtype=float) - np.asarray(xbar, dtype=float)
        out.append(ubar - np.linalg.solve(theta_u_hat, h + ctx.k * err))
    return out


def adaptive_vertex_controls(u, x, x_hats, theta_u_hat: np.ndarray, k: float) -> np.ndarray:
    """Per-vertex inputs giving each estimator the ``-k`` error feedback.

    ``u_hat_i = u + (theta_u_hat)^-1 k (x - x_hat_i)``, so that
    ``u - u_hat_i = -(theta_u_hat)^-1 k xtilde_i``.  Returns shape (q, m).
    """
    check_input_matrix(theta_u_hat)
    xt = np.asarray(x, dtype=float)[None, :] - np.asarray(x_hats, dtype=float)
    return np.asarray(u, dtype=float)[None, :] + np.linalg.solve(theta_u_hat, k * xt.T).T
