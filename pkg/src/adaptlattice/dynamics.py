"""Linearly parameterised models ``xdot = theta_x phi(x) + theta_u u`` and RK4 rollouts."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .paramspace import DimensionError, LumpedParams, ParamPolytope


class NonFiniteRegressor(ValueError):
    pass


class BlowUp(RuntimeError):
    """The integrated state left the configured magnitude bound."""


Box = tuple[np.ndarray, np.ndarray]


def make_box(lo, hi) -> Box:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or np.any(lo > hi):
        raise ValueError(f"invalid box {lo} .. {hi}")
    return lo, hi


@dataclass(frozen=True)
class SystemModel:
    n: int
    m: int
    p: int
    regressor: Callable[[np.ndarray, float], np.ndarray]
    state_box: Box
    input_box: Box
    label: str = ""
    # d phi / d x, shape (p, n); finite differences are used when absent
    regressor_jacobian: Callable[[np.ndarray, float], np.ndarray] | None = None

    def __post_init__(self):
        if min(self.n, self.m, self.p) < 1:
            raise ValueError("n, m and p must all be >= 1")

    def phi(self, x, t: float = 0.0) -> np.ndarray:
        out = np.asarray(self.regressor(np.asarray(x, dtype=float), t), dtype=float)
        if out.shape != (self.p,):
            raise DimensionError(f"regressor returned shape {out.shape}, expected ({self.p},)")
        # a non-finite entry makes the plain sum non-finite; the full check
        # only runs then, to rule out overflow of the sum itself
        total = sum(out.tolist())
        if total - total != 0.0 and not np.all(np.isfinite(out)):
            raise NonFiniteRegressor(f"regressor is not finite at x={x}")
        return out

    def phi_jacobian(self, x, t: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.regressor_jacobian is not None:
            return np.asarray(self.regressor_jacobian(x, t), dtype=float)
        jac = np.empty((self.p, self.n))
        for j in range(self.n):
            h = 1e-7 * max(1.0, abs(x[j]))
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            jac[:, j] = (self.phi(xp, t) - self.phi(xm, t)) / (2 * h)
        return jac

    def check_params(self, theta: LumpedParams) -> None:
        if theta.shape != (self.n, self.p, self.m):
            raise DimensionError(
                f"parameters of shape {theta.shape} do not fit model {(self.n, self.p, self.m)}")


def eval_dynamics(sys: SystemModel, theta: LumpedParams, x, u, t: float = 0.0) -> np.ndarray:
    sys.check_params(theta)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (sys.n,) or u.shape != (sys.m,):
        raise DimensionError(f"state/input shapes {x.shape}/{u.shape} do not fit model")
    return theta.theta_x @ sys.phi(x, t) + theta.theta_u @ u


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, x: np.ndarray, dt: float):
    """One classical RK4 step.

    Returns ``(x_next, stages)`` where ``stages`` lists the four ``(t, x)``
    points at which ``f`` was evaluated; estimators that must see the same
    measurement signal as the plant integrate against these.
    """
    k1 = f(t, x)
    x2 = x + 0.5 * dt * k1
    k2 = f(t + 0.5 * dt, x2)
    x3 = x + 0.5 * dt * k2
    k3 = f(t + 0.5 * dt, x3)
    x4 = x + dt * k3
    k4 = f(t + dt, x4)
    x_next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    stages = ((t, x), (t + 0.5 * dt, x2), (t + 0.5 * dt, x3), (t + dt, x4))
    return x_next, stages


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (N, n)
    inputs: np.ndarray  # (N, m), input applied at each sample time

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if not (len(self.times) == len(self.states) == len(self.inputs)):
            raise ValueError("times, states and inputs must have equal length")
        if len(self.times) > 2:
            steps = np.diff(self.times)
            if np.any(steps <= 0) or np.ptp(steps) > 1e-12 * max(1.0, abs(self.times[-1])):
                raise ValueError("trajectory times must form a uniform increasing grid")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self.times, self.states, self.inputs)


def write_trajectory_csv(path, times, states, inputs) -> None:
    states = np.atleast_2d(states)
    inputs = np.atleast_2d(inputs)
    n = states.shape[1]
    m = inputs.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, x, u in zip(times, states, inputs):
            w.writerow([f"{v:.17g}" for v in (t, *x, *u)])


def integrate(sys: SystemModel, theta: LumpedParams, x0, control: Callable[[float], np.ndarray],
              dt: float, T: float, blowup: float = 1e8) -> Trajectory:
    """Fixed-step RK4 rollout; ``control`` is evaluated at the RK4 stage times."""
    if dt <= 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    steps = T / dt
    n_steps = int(round(steps))
    if abs(steps - n_steps) > 1e-9 * max(1.0, steps):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    sys.check_params(theta)
    x = np.array(x0, dtype=float)

    def f(t, xs):
        return theta.theta_x @ sys.phi(xs, t) + theta.theta_u @ np.asarray(control(t), dtype=float)

    times = [0.0]
    states = [x]
    inputs = [np.asarray(control(0.0), dtype=float)]
    for k in range(n_steps):
        t = k * dt
        x, _ = rk4_step(f, t, x, dt)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > blowup:
            raise BlowUp(f"state magnitude exceeded {blowup:g} at t={t + dt:g}")
        times.append((k + 1) * dt)
        states.append(x)
        inputs.append(np.asarray(control((k + 1) * dt), dtype=float))
    if n_steps:
        times[-1] = float(T)
    return Trajectory(np.array(times), np.array(states), np.array(inputs))


# --------------------------------------------------------------------------
# quadrotor attitude-rate model


@dataclass(frozen=True)
class QuadrotorConstants:
    mass: float = 0.61
    Ixx: float = 1.54e-2
    Iyy: float = 1.54e-2
    Izz: float = 3.09e-2
    arm: float = 0.305
    a1: float = -1.0065
    a2: float = 1.0065
    a3: float = 0.0
    b1: float = 19.8052
    b2: float = 19.8052
    b3: float = 32.3625
    g: float = 9.81


@dataclass(frozen=True)
class OmegaSignal:
    """Net rotor spin rate: ``mean + amplitude * sin(2 pi freq t)``."""

    mean: float = 2.0
    amplitude: float = 0.0
    freq: float = 0.0

    def __call__(self, t: float) -> float:
        if self.amplitude == 0.0:
            return self.mean
        return self.mean + self.amplitude * math.sin(2.0 * math.pi * self.freq * t)

    def extreme_times(self) -> list[float]:
        if self.amplitude == 0.0 or self.freq == 0.0:
            return [0.0]
        return [0.25 / self.freq, 0.75 / self.freq]


# Flat indices of c1, c2 inside the 3 x 8 lumped matrix.
C1_INDEX = (0, 1)
C2_INDEX = (1, 3)


def quadrotor_params(c1: float, c2: float, const: QuadrotorConstants = QuadrotorConstants()) -> LumpedParams:
    theta_x = np.zeros((3, 5))
    theta_x[0, 0] = const.a1
    theta_x[0, 1] = c1
    theta_x[1, 2] = const.a2
    theta_x[1, 3] = c2
    theta_x[2, 4] = const.a3
    return LumpedParams(theta_x, np.diag([const.b1, const.b2, const.b3]))


def c_coordinates(theta: LumpedParams) -> tuple[float, float]:
    return float(theta.theta_x[C1_INDEX]), float(theta.theta_x[C2_INDEX])


def quadrotor_uncertainty_set(corners, const: QuadrotorConstants = QuadrotorConstants()) -> ParamPolytope:
    """Embed (c1, c2) corner points into full lumped matrices."""
    return ParamPolytope(tuple(quadrotor_params(c1, c2, const) for c1, c2 in corners))


PSI_CORNERS = ((-5e-3, 2.25e-3), (0.0, 2.25e-3), (0.0, 7.75e-3), (-5e-3, 7.75e-3))


def quadrotor_attitude_model(const: QuadrotorConstants = QuadrotorConstants(),
                             omega: Callable[[float], float] = OmegaSignal(),
                             c1: float = -2.5e-3, c2: float = 5.0e-3,
                             rate_bound: float = 2.0, torque_bound: float = 3.0):
    """Rate model of roll/pitch/yaw.  Returns ``(model, true_params)``.

    regressor ``[r2 r3, r2 W, r1 r3, r1 W, r1 r2]`` with ``W`` the net rotor
    spin rate signal.
    """

    def phi(r, t):
        w = omega(t)
        r1, r2, r3 = r.tolist()
        return np.array([r2 * r3, r2 * w, r1 * r3, r1 * w, r1 * r2])

    def jac(r, t):
        w = omega(t)
        return np.array([
            [0.0, r[2], r[1]],
            [0.0, w, 0.0],
            [r[2], 0.0, r[0]],
            [w, 0.0, 0.0],
            [r[1], r[0], 0.0],
        ])

    model = SystemModel(
        n=3, m=3, p=5, regressor=phi,
        state_box=make_box([-rate_bound] * 3, [rate_bound] * 3),
        input_box=make_box([-torque_bound] * 3, [torque_bound] * 3),
        label="quadrotor_attitude", regressor_jacobian=jac,
    )
    return model, quadrotor_params(c1, c2, const)


def integrator_chain_model(dims: int = 1, order: int = 2, bounds: Sequence[float] = (),
                           input_bound: float = 3.0, label: str = ""):
    """Per-axis chain of ``order`` integrators driven by the top derivative.

    State is ordered in blocks ``(positions, velocities, ...)``, each of
    length ``dims``.  ``bounds`` gives the magnitude limit of every block
    after the position block.  Returns ``(model, params)``.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    bounds = list(bounds) + [math.inf] * (order - 1 - len(bounds))
    n = order * dims
    theta_x = np.zeros((n, n))
    for b in range(order - 1):
        theta_x[b * dims:(b + 1) * dims, (b + 1) * dims:(b + 2) * dims] = np.eye(dims)
    theta_u = np.zeros((n, dims))
    theta_u[(order - 1) * dims:, :] = np.eye(dims)
    big = 1e9
    lim = [big] * dims + [min(b, big) for b in bounds[:order - 1] for _ in range(dims)]
    model = SystemModel(
        n=n, m=dims, p=n, regressor=lambda x, t: x,
        state_box=make_box([-v for v in lim], lim),
        input_box=make_box([-input_bound] * dims, [input_bound] * dims),
        label=label or f"integrator_chain_{dims}x{order}",
        regressor_jacobian=lambda x, t: np.eye(n),
    )
    return model, LumpedParams(theta_x, theta_u)


def double_integrator_model(dims: int = 1, vel_bound: float = 3.0, acc_bound: float = 3.0):
    """Per-axis double integrator, state ``(positions, velocities)``."""
    return integrator_chain_model(dims, 2, [vel_bound], acc_bound,
                                  label=f"double_integrator_{dims}d")


def jerk_model(dims: int = 2, vel_bound: float = 3.0, acc_bound: float = 3.0,
               jerk_bound: float = 5.0):
    """Per-axis triple integrator, state ``(positions, velocities, accelerations)``.

    Used as the translational planning model of the quadrotor: with hover
    boundary conditions (zero velocity and acceleration at lattice nodes) the
    small-angle tilt is ``acceleration / g`` and the tilt rate is ``jerk / g``.
    """
    return integrator_chain_model(dims, 3, [vel_bound, acc_bound], jerk_bound,
                                  label=f"jerk_chain_{dims}d")
