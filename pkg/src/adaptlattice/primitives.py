"""State lattice, motion-primitive generation and the primitive library.

A primitive connects the lattice origin to a neighbouring node offset.  It is
found by trapezoidal direct collocation at fixed duration (solved with SLSQP),
an outer golden-section search over the duration, and a short shooting polish
so that the stored input samples, replayed through the model, land on the
target node.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .dynamics import SystemModel, rk4_step
from .paramspace import LumpedParams

LIBRARY_VERSION = "adaptlattice-library/1"
N_SAMPLES = 50
ENDPOINT_TOL = 1e-4  # grid units


class InfeasibleBVP(RuntimeError):
    pass


class EmptyLattice(ValueError):
    pass


# --------------------------------------------------------------------------
# lattice


@dataclass(frozen=True)
class LatticeSpec:
    planning_dims: tuple[int, ...]
    bounds: tuple[tuple[float, float], ...]
    resolution: tuple[float, ...]
    connectivity: tuple[tuple[int, ...], ...]
    boundary_state: tuple[float, ...]

    @property
    def dims(self) -> int:
        return len(self.planning_dims)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(int(math.floor((hi - lo) / r + 1e-9)) + 1
                     for (lo, hi), r in zip(self.bounds, self.resolution))

    @property
    def node_count(self) -> int:
        return math.prod(self.counts)

    def in_grid(self, node: Sequence[int]) -> bool:
        return all(0 <= i < c for i, c in zip(node, self.counts))

    def nodes(self):
        return itertools.product(*(range(c) for c in self.counts))

    def position(self, node: Sequence[int]) -> np.ndarray:
        return np.array([lo + i * r for i, (lo, _), r in zip(node, self.bounds, self.resolution)])

    def node_state(self, node: Sequence[int]) -> np.ndarray:
        x = np.array(self.boundary_state, dtype=float)
        x[list(self.planning_dims)] = self.position(node)
        return x

    def offset_state(self, offset: Sequence[int]) -> np.ndarray:
        """Boundary state displaced by ``offset`` grid steps from the origin."""
        x = np.array(self.boundary_state, dtype=float)
        x[list(self.planning_dims)] = np.asarray(offset) * np.asarray(self.resolution)
        return x

    def nearest_node(self, point: Sequence[float]) -> tuple[int, ...]:
        idx = [int(round((p - lo) / r)) for p, (lo, _), r in zip(point, self.bounds, self.resolution)]
        return tuple(idx)

    def to_dict(self) -> dict:
        return {
            "planning_dims": list(self.planning_dims),
            "bounds": [list(b) for b in self.bounds],
            "resolution": list(self.resolution),
            "connectivity": [list(o) for o in self.connectivity],
            "boundary_state": list(self.boundary_state),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeSpec":
        return build_lattice(d["planning_dims"], d["bounds"], d["resolution"],
                             d["connectivity"], d["boundary_state"])


def grid_offsets(dims: int, kind: str) -> list[tuple[int, ...]]:
    """``"4"``-style axis neighbours or ``"8"``-style king moves (any dimension)."""
    if kind in ("4", "axis"):
        out = []
        for d in range(dims):
            for s in (1, -1):
                o = [0] * dims
                o[d] = s
                out.append(tuple(o))
        return out
    if kind in ("8", "king"):
        return [o for o in itertools.product((-1, 0, 1), repeat=dims) if any(o)]
    raise ValueError(f"unknown connectivity {kind!r}")


def build_lattice(planning_dims, bounds, resolution, connectivity, boundary_state) -> LatticeSpec:
    planning_dims = tuple(int(d) for d in planning_dims)
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    resolution = tuple(float(r) for r in resolution)
    if not (len(planning_dims) == len(bounds) == len(resolution)) or not planning_dims:
        raise ValueError("planning_dims, bounds and resolution must have equal non-zero length")
    if any(r <= 0 for r in resolution):
        raise ValueError("resolution must be positive")
    if any(hi < lo for lo, hi in bounds):
        raise EmptyLattice("lattice bounds are empty")
    if isinstance(connectivity, str):
        connectivity = grid_offsets(len(planning_dims), connectivity)
    conn = tuple(tuple(int(v) for v in o) for o in connectivity)
    if not conn:
        raise ValueError("connectivity must not be empty")
    for o in conn:
        if len(o) != len(planning_dims) or not any(o):
            raise ValueError(f"invalid offset {o}")
    boundary = tuple(float(v) for v in boundary_state)
    if any(d >= len(boundary) for d in planning_dims):
        raise ValueError("boundary_state must cover every planning dimension")
    spec = LatticeSpec(planning_dims, bounds, resolution, conn, boundary)
    if not any(all(abs(v) < c for v, c in zip(o, spec.counts)) for o in conn):
        raise EmptyLattice("no connectivity offset fits inside the grid")
    return spec


# --------------------------------------------------------------------------
# primitives


@dataclass(frozen=True)
class MotionPrimitive:
    from_offset: tuple[int, ...]
    to_offset: tuple[int, ...]
    nominal_id: int
    duration: float
    states: np.ndarray  # (N_SAMPLES, n), uniform in time over [0, duration]
    inputs: np.ndarray  # (N_SAMPLES, m)
    cost: float
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def offset(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in zip(self.from_offset, self.to_offset))

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.duration, len(self.states))

    @property
    def footprint(self) -> np.ndarray:
        return self.states

    def input_at(self, t: float) -> np.ndarray:
        return interp_samples(self.inputs, self.duration, t)

    def state_at(self, t: float) -> np.ndarray:
        return interp_samples(self.states, self.duration, t)


def interp_samples(samples: np.ndarray, duration: float, t: float) -> np.ndarray:
    """Linear interpolation of uniformly spaced samples over ``[0, duration]``."""
    if duration <= 0 or len(samples) == 1:
        return samples[0].copy()
    s = min(max(t / duration, 0.0), 1.0) * (len(samples) - 1)
    i = min(int(s), len(samples) - 2)
    w = s - i
    return (1.0 - w) * samples[i] + w * samples[i + 1]


@dataclass(frozen=True)
class RunningCost:
    """``l(x, u) = 1 + u^T R u``."""

    R: np.ndarray

    @classmethod
    def identity(cls, m: int) -> "RunningCost":
        return cls(np.eye(m))

    def energy(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        return np.einsum("ij,jk,ik->i", u, self.R, u)

    def integrate(self, inputs: np.ndarray, duration: float) -> float:
        """Exact integral of ``l`` for linearly interpolated input samples."""
        if duration <= 0:
            return 0.0
        h = duration / (len(inputs) - 1)
        a, b = inputs[:-1], inputs[1:]
        seg = self.energy(a) + 4.0 * self.energy(0.5 * (a + b)) + self.energy(b)
        return duration + math.fsum(h / 6.0 * seg)


@dataclass(frozen=True)
class Constraints:
    """Tightened state box ``X_S`` and input box ``U_S`` used at generation."""

    state_box: tuple[np.ndarray, np.ndarray]
    input_box: tuple[np.ndarray, np.ndarray]

    def state_ok(self, states: np.ndarray) -> bool:
        lo, hi = self.state_box
        return bool(np.all(states >= lo) and np.all(states <= hi))

    def input_ok(self, inputs: np.ndarray) -> bool:
        lo, hi = self.input_box
        return bool(np.all(inputs >= lo) and np.all(inputs <= hi))


@dataclass(frozen=True)
class SolverConfig:
    segments: int = 20
    t_min: float = 0.1
    t_max: float = 10.0
    t_tol: float = 1e-3
    scan_points: int = 12
    kkt_tol: float = 1e-8
    max_iter: int = 100
    samples: int = N_SAMPLES
    polish_refine: int = 20


def _dynamics_fn(sys: SystemModel, theta: LumpedParams):
    tx, tu = theta.theta_x, theta.theta_u

    def f(x, u):
        return tx @ sys.phi(x) + tu @ u

    def jac(x):
        return tx @ sys.phi_jacobian(x)

    return f, jac


def _collocation(sys, theta, x0, xf, T, cost: RunningCost, cons: Constraints, cfg: SolverConfig,
                 guess=None):
    """Fixed-duration trapezoidal transcription.  Returns ``(objective, X, U)`` or None."""
    n, m, N = sys.n, sys.m, cfg.segments
    h = T / N
    f, jac = _dynamics_fn(sys, theta)
    nx = (N + 1) * n

    def unpack(z):
        return z[:nx].reshape(N + 1, n), z[nx:].reshape(N + 1, m)

    w = np.full(N + 1, h)
    w[0] = w[-1] = 0.5 * h
    R2 = cost.R + cost.R.T

    def obj(z):
        _, U = unpack(z)
        return T + float(np.sum(w * cost.energy(U)))

    def obj_grad(z):
        _, U = unpack(z)
        g = np.zeros_like(z)
        g[nx:] = (w[:, None] * (U @ R2.T)).ravel()
        return g

    def defects(z):
        X, U = unpack(z)
        F = np.array([f(X[k], U[k]) for k in range(N + 1)])
        d = X[1:] - X[:-1] - 0.5 * h * (F[1:] + F[:-1])
        return np.concatenate([d.ravel(), X[0] - x0, X[-1] - xf])

    tu = theta.theta_u

    def defects_jac(z):
        X, _ = unpack(z)
        J = np.zeros((N * n + 2 * n, z.size))
        eye = np.eye(n)
        A = [jac(X[k]) for k in range(N + 1)]
        for k in range(N):
            r = slice(k * n, (k + 1) * n)
            J[r, k * n:(k + 1) * n] = -eye - 0.5 * h * A[k]
            J[r, (k + 1) * n:(k + 2) * n] = eye - 0.5 * h * A[k + 1]
            J[r, nx + k * m:nx + (k + 1) * m] = -0.5 * h * tu
            J[r, nx + (k + 1) * m:nx + (k + 2) * m] = -0.5 * h * tu
        J[N * n:N * n + n, :n] = eye
        J[N * n + n:, N * n:nx] = eye
        return J

    xlo, xhi = cons.state_box
    ulo, uhi = cons.input_box
    bounds = [(lo, hi) for _ in range(N + 1) for lo, hi in zip(xlo, xhi)]
    bounds += [(lo, hi) for _ in range(N + 1) for lo, hi in zip(ulo, uhi)]
    if guess is None:
        s = np.linspace(0.0, 1.0, N + 1)[:, None]
        X0 = (1 - s) * x0 + s * xf
        U0 = np.zeros((N + 1, m))
    else:
        X0, U0 = guess
    z0 = np.clip(np.concatenate([X0.ravel(), U0.ravel()]),
                 [b[0] for b in bounds], [b[1] for b in bounds])
    with warnings.catch_warnings():
        # SLSQP clips line-search points to the bounds and says so
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(obj, z0, jac=obj_grad, method="SLSQP", bounds=bounds,
                       constraints=[{"type": "eq", "fun": defects, "jac": defects_jac}],
                       options={"ftol": cfg.kkt_tol, "maxiter": cfg.max_iter})
    if not res.success or np.max(np.abs(defects(res.x))) > 1e-6:
        return None
    X, U = unpack(res.x)
    return float(res.fun), X, U


def _rollout(sys, theta, x0, inputs, duration, refine):
    """RK4 replay of linearly interpolated inputs, ``refine`` steps per sample interval."""
    f, _ = _dynamics_fn(sys, theta)
    steps = (len(inputs) - 1) * refine
    dt = duration / steps
    x = np.array(x0, dtype=float)
    out = [x]
    for s in range(steps):
        def rhs(t, xs):
            return f(xs, interp_samples(inputs, duration, t))

        x, _ = rk4_step(rhs, s * dt, x, dt)
        if (s + 1) % refine == 0:
            out.append(x)
    return np.array(out)


def _polish(sys, theta, x0, xf, inputs, duration, cfg: SolverConfig, scale: np.ndarray):
    """Gauss-Newton correction of the input samples so the replay ends on ``xf``.

    Corrections are smooth: per input channel, a polynomial in normalised
    time of just enough degree to span the state dimension.
    """
    n, m = sys.n, sys.m
    deg = max(1, math.ceil(n / m))
    s = np.linspace(0.0, 1.0, len(inputs))
    basis = np.stack([np.polynomial.legendre.legval(2 * s - 1, np.eye(deg + 1)[j])
                      for j in range(deg + 1)], axis=1)
    ncol = m * (deg + 1)

    def perturb(U, coef):
        return U + basis @ coef.reshape(deg + 1, m)

    def endpoint(U):
        return _rollout(sys, theta, x0, U, duration, cfg.polish_refine)[-1]

    U = inputs.copy()
    for _ in range(6):
        r = (endpoint(U) - xf) / scale
        if np.max(np.abs(r)) < 1e-11:
            break
        J = np.empty((n, ncol))
        eps = 1e-6
        for c in range(ncol):
            e = np.zeros(ncol)
            e[c] = eps
            J[:, c] = ((endpoint(perturb(U, e)) - xf) / scale - r) / eps
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        U = perturb(U, step)
    return U


def _resample(U_nodes: np.ndarray, samples: int) -> np.ndarray:
    s_nodes = np.linspace(0.0, 1.0, len(U_nodes))
    s = np.linspace(0.0, 1.0, samples)
    return np.stack([np.interp(s, s_nodes, U_nodes[:, j]) for j in range(U_nodes.shape[1])], axis=1)


def _golden(fun, a, b, tol):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fun(d)
    return c if fc <= fd else d


def solve_primitive_bvp(sys: SystemModel, from_state, to_state, theta_bar: LumpedParams,
                        cost: RunningCost, constraints: Constraints,
                        config: SolverConfig = SolverConfig(), *, lattice: LatticeSpec | None = None,
                        from_offset=(), to_offset=(), nominal_id: int = 0) -> MotionPrimitive:
    """Minimum-cost free-duration transfer between two states under ``theta_bar``."""
    x0 = np.asarray(from_state, dtype=float)
    xf = np.asarray(to_state, dtype=float)
    if not (constraints.state_ok(x0) and constraints.state_ok(xf)):
        raise InfeasibleBVP("endpoint outside the tightened state set")
    if np.array_equal(x0, xf):
        return MotionPrimitive(tuple(from_offset), tuple(to_offset), nominal_id, 0.0,
                               np.tile(x0, (config.samples, 1)),
                               np.zeros((config.samples, sys.m)), 0.0)

    cache: dict[float, tuple | None] = {}

    def solve_at(T):
        if T not in cache:
            # warm start from the nearest solved duration
            done = [(abs(T - k), k) for k, v in cache.items() if v is not None]
            guess = cache[min(done)[1]][1:] if done else None
            cache[T] = _collocation(sys, theta_bar, x0, xf, T, cost, constraints, config, guess)
        return cache[T]

    def value(T):
        out = solve_at(T)
        return math.inf if out is None else out[0]

    # Scan durations from long to short and stop once the cost turns up, so
    # that the (slow to reject) infeasible short durations are rarely visited.
    grid = np.geomspace(config.t_max, config.t_min, config.scan_points)
    vals = []
    for T in grid:
        vals.append(value(float(T)))
        if len(vals) >= 3 and math.isfinite(vals[-2]) and vals[-1] > vals[-2]:
            break
    best = int(np.argmin(vals))
    if not math.isfinite(vals[best]):
        raise InfeasibleBVP("no duration in the search range admits a feasible transcription")
    hi = float(grid[max(best - 1, 0)])
    lo = float(grid[min(best + 1, len(grid) - 1)])
    T = _golden(value, lo, hi, config.t_tol)
    if value(T) > vals[best]:
        T = float(grid[best])
    _, _, U_nodes = solve_at(T)

    scale = np.ones(sys.n)
    if lattice is not None:
        scale[list(lattice.planning_dims)] = lattice.resolution
    inputs = _resample(U_nodes, config.samples)
    inputs = _polish(sys, theta_bar, x0, xf, inputs, T, config, scale)
    states = _rollout(sys, theta_bar, x0, inputs, T, config.polish_refine)
    if not constraints.input_ok(inputs):
        raise InfeasibleBVP("polished inputs leave the tightened input set")
    if not constraints.state_ok(states):
        raise InfeasibleBVP("primitive states leave the tightened state set")
    err = np.max(np.abs((states[-1] - xf) / scale))
    if err > ENDPOINT_TOL:
        raise InfeasibleBVP(f"endpoint error {err:.3g} grid units after polishing")
    return MotionPrimitive(tuple(from_offset), tuple(to_offset), nominal_id, float(T), states,
                           inputs, cost.integrate(inputs, T))


def verify_primitive(sys: SystemModel, prim: MotionPrimitive, theta_bar: LumpedParams,
                     lattice: LatticeSpec, refine: int = 10, anchor: Sequence[int] | None = None
                     ) -> float:
    """Terminal gap, in grid units, of a finer-step replay of the stored inputs.

    The replay starts from the from-node (shifted to ``anchor`` when given)
    and is compared with the matching to-node.
    """
    base = np.zeros(lattice.dims, dtype=int) if anchor is None else np.asarray(anchor)
    x0 = lattice.node_state(base + np.asarray(prim.from_offset))
    xf = lattice.node_state(base + np.asarray(prim.to_offset))
    if prim.duration == 0.0:
        return float(np.max(np.abs(x0 - xf)))
    x_end = _rollout(sys, theta_bar, x0, prim.inputs, prim.duration, refine)[-1]
    scale = np.ones(sys.n)
    scale[list(lattice.planning_dims)] = lattice.resolution
    return float(np.max(np.abs((x_end - xf) / scale)))


# --------------------------------------------------------------------------
# library


@dataclass
class PrimitiveLibrary:
    lattice: LatticeSpec
    nominal_params: list[LumpedParams]
    entries: dict[tuple[int, tuple[int, ...]], MotionPrimitive]
    digest: str
    report: list[dict] = field(default_factory=list)
    version: str = LIBRARY_VERSION
    meta: dict = field(default_factory=dict)

    def for_nominal(self, nominal_id: int) -> list[MotionPrimitive]:
        return [p for (i, _), p in self.entries.items() if i == nominal_id]

    def to_dict(self) -> dict:
        def params(p: LumpedParams):
            return {"theta_x": p.theta_x.tolist(), "theta_u": p.theta_u.tolist()}

        entries = []
        for (i, off), p in self.entries.items():
            entries.append({
                "nominal_id": i, "offset": list(off), "from_offset": list(p.from_offset),
                "to_offset": list(p.to_offset), "duration": p.duration, "cost": p.cost,
                "states": p.states.tolist(), "inputs": p.inputs.tolist(),
                "extras": {k: np.asarray(v).tolist() for k, v in p.extras.items()},
            })
        return {
            "version": self.version, "digest": self.digest, "lattice": self.lattice.to_dict(),
            "nominal_params": [params(p) for p in self.nominal_params],
            "entries": entries, "report": self.report, "meta": self.meta,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, d: dict) -> "PrimitiveLibrary":
        if d.get("version") != LIBRARY_VERSION:
            raise ValueError(f"unsupported library version {d.get('version')!r}")
        lattice = LatticeSpec.from_dict(d["lattice"])
        nominal = [LumpedParams(p["theta_x"], p["theta_u"]) for p in d["nominal_params"]]
        entries = {}
        for e in d["entries"]:
            prim = MotionPrimitive(tuple(e["from_offset"]), tuple(e["to_offset"]), e["nominal_id"],
                                   float(e["duration"]), np.array(e["states"], dtype=float),
                                   np.array(e["inputs"], dtype=float), float(e["cost"]),
                                   {k: np.array(v, dtype=float) for k, v in e["extras"].items()})
            entries[(e["nominal_id"], tuple(e["offset"]))] = prim
        return cls(lattice, nominal, entries, d["digest"], d.get("report", []), d["version"],
                   d.get("meta", {}))

    @classmethod
    def load(cls, path) -> "PrimitiveLibrary":
        return cls.from_dict(json.loads(Path(path).read_text()))


def config_digest(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


AttachHook = Callable[[MotionPrimitive, LumpedParams], dict]

_BVP_CACHE: dict[tuple, list] = {}


def _bvp_key(sys, params, x0, xf, cost, cfg):
    return (sys.label, params.matrix.tobytes(), x0.tobytes(), xf.tobytes(), cost.R.tobytes(), cfg)


def _within(inner: Constraints, outer: Constraints) -> bool:
    return all(np.all(a[0] >= b[0]) and np.all(a[1] <= b[1])
               for a, b in ((inner.state_box, outer.state_box), (inner.input_box, outer.input_box)))


def cached_bvp(sys, x0, xf, params, cost, constraints, config, **kw) -> MotionPrimitive:
    """:func:`solve_primitive_bvp` with reuse across calls in this process.

    A solution found under looser constraints is reused when it already
    satisfies the tighter ones: it stays optimal because tightening only
    removes candidates.  Otherwise the problem is solved again.
    """
    key = _bvp_key(sys, params, x0, xf, cost, config)
    for cons, found in _BVP_CACHE.get(key, []):
        same = _within(cons, constraints) and _within(constraints, cons)
        if isinstance(found, InfeasibleBVP):
            if same or _within(constraints, cons):
                raise found
        elif (same or _within(constraints, cons)) and constraints.state_ok(found.states) \
                and constraints.input_ok(found.inputs):
            return found
    try:
        found = solve_primitive_bvp(sys, x0, xf, params, cost, constraints, config, **kw)
    except InfeasibleBVP as exc:
        _BVP_CACHE.setdefault(key, []).append((constraints, exc))
        raise
    _BVP_CACHE.setdefault(key, []).append((constraints, found))
    return found


def build_library(sys: SystemModel, Psi_d: Sequence[LumpedParams], lattice: LatticeSpec,
                  cost: RunningCost, constraints: Constraints,
                  config: SolverConfig = SolverConfig(), *,
                  planning_params: LumpedParams | None = None,
                  attach: AttachHook | None = None, digest: str = "",
                  meta: dict | None = None) -> PrimitiveLibrary:
    """Solve one primitive per (nominal id, connectivity offset).

    The BVP uses ``Psi_d[i]`` unless ``planning_params`` fixes a known
    planning model; ``attach(primitive, Psi_d[i])`` may add per-nominal data
    or reject the entry by raising :class:`InfeasibleBVP`.  Identical BVPs are
    solved once per process.  Failures are listed in the report; ``meta`` is
    stored verbatim (for example, how to rebuild the planning model).
    """
    entries = {}
    report = []
    origin = tuple(0 for _ in lattice.planning_dims)
    for i, theta_bar in enumerate(Psi_d):
        params = planning_params if planning_params is not None else theta_bar
        sys.check_params(params)
        for off in lattice.connectivity:
            x0 = lattice.offset_state(origin)
            xf = lattice.offset_state(off)
            try:
                found = cached_bvp(sys, x0, xf, params, cost, constraints, config,
                                   lattice=lattice, from_offset=origin, to_offset=off)
                prim = MotionPrimitive(found.from_offset, found.to_offset, i, found.duration,
                                       found.states, found.inputs, found.cost)
                if attach is not None:
                    prim = MotionPrimitive(prim.from_offset, prim.to_offset, i, prim.duration,
                                           prim.states, prim.inputs, prim.cost,
                                           attach(prim, theta_bar))
                entries[(i, off)] = prim
                report.append({"nominal_id": i, "offset": list(off), "status": "ok",
                               "cost": prim.cost, "duration": prim.duration})
            except InfeasibleBVP as exc:
                report.append({"nominal_id": i, "offset": list(off), "status": "infeasible",
                               "message": str(exc)})
    return PrimitiveLibrary(lattice, list(Psi_d), entries, digest, report, meta=dict(meta or {}))
