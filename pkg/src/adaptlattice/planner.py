"""Workspace tightening, nominal selection and A* search over a primitive lattice."""
from __future__ import annotations

import heapq
import itertools
import json
import math
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .dynamics import SystemModel, write_trajectory_csv
from .paramspace import MEMBERSHIP_TOL, LumpedParams, ParamPolytope, contains
from .primitives import LatticeSpec, MotionPrimitive, PrimitiveLibrary


TIE_RTOL = 1e-9
GEOM_TOL = 1e-9


class NoPath(RuntimeError):
    pass


class NoNominalInSet(RuntimeError):
    pass


class InfeasibleEndpoint(ValueError):
    """Start or goal node lies outside the tightened free space."""


class EmptyTightening(ValueError):
    pass


@dataclass(frozen=True)
class Workspace:
    """Box ``bounds`` in the planning coordinates minus axis-aligned box obstacles."""

    bounds: tuple[tuple[float, float], ...]
    obstacles: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...] = ()

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        obstacles = tuple((tuple(map(float, lo)), tuple(map(float, hi))) for lo, hi in self.obstacles)
        for lo, hi in obstacles:
            if len(lo) != len(bounds) or len(hi) != len(bounds):
                raise ValueError("obstacle dimension does not match the workspace")
            if any(a > b for a, b in zip(lo, hi)):
                raise ValueError(f"inverted obstacle {lo} .. {hi}")
            if any(a < blo or b > bhi for a, b, (blo, bhi) in zip(lo, hi, bounds)):
                raise ValueError(f"obstacle {lo} .. {hi} is not inside the bounds")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "obstacles", obstacles)

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def obstacle_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        d = len(self.bounds)
        lo = np.array([o[0] for o in self.obstacles], dtype=float).reshape(-1, d)
        hi = np.array([o[1] for o in self.obstacles], dtype=float).reshape(-1, d)
        return lo, hi

    def point_free(self, p: Sequence[float]) -> bool:
        return path_clear(self, np.asarray(p, dtype=float)[None, :])

    def to_dict(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds],
                "obstacles": [[list(lo), list(hi)] for lo, hi in self.obstacles]}


def path_clear(w: Workspace, points: np.ndarray, tol: float = GEOM_TOL) -> bool:
    """Polyline inside the closed bounds and outside every open obstacle box.

    Bounds are widened and obstacles shrunk by ``tol`` so that round-off in
    stored footprints does not reject paths that run along a boundary.
    """
    lo, hi = w.obstacle_arrays()
    return kernels.polyline_clear(np.ascontiguousarray(points, dtype=float), lo + tol, hi - tol,
                                  w.lo - tol, w.hi + tol)


def tighten_workspace(w: Workspace, delta: float) -> Workspace:
    """Shrink the bounds and grow every obstacle by ``delta`` per coordinate.

    Grown obstacles are clipped to the shrunken bounds; obstacles that fall
    completely outside them are dropped.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return w
    bounds = tuple((lo + delta, hi - delta) for lo, hi in w.bounds)
    if any(lo > hi for lo, hi in bounds):
        raise EmptyTightening(f"tightening by {delta:g} leaves an empty workspace")
    obstacles = []
    for olo, ohi in w.obstacles:
        lo = tuple(max(a - delta, b[0]) for a, b in zip(olo, bounds))
        hi = tuple(min(a + delta, b[1]) for a, b in zip(ohi, bounds))
        if all(a <= b for a, b in zip(lo, hi)):
            obstacles.append((lo, hi))
    return Workspace(bounds, tuple(obstacles))


# --------------------------------------------------------------------------
# input tightening


def _grid_points(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Corners and midpoints of a box (3**d points)."""
    levels = [(a, 0.5 * (a + b), b) for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*levels)), dtype=float)


def param_samples(S: ParamPolytope) -> list[LumpedParams]:
    """Vertices of ``S`` followed by all pairwise vertex midpoints."""
    out = list(S.vertices)
    for a, b in itertools.combinations(S.vertices, 2):
        out.append(a.like(0.5 * (a.flat + b.flat)))
    return out


def nu_extremes(sys: SystemModel, theta_bar: LumpedParams, k: float, X, X_S, U,
                S: ParamPolytope, times: Sequence[float] = (0.0,)) -> np.ndarray:
    """Largest ``|nu_j|`` over the grid ``X x X_S x U x samples(S) x times``.

    ``X``, ``X_S`` and ``U`` are boxes sampled at their corners and
    midpoints.  For fixed parameters and time, ``nu`` is a sum of one term in
    ``x``, one in ``xbar`` and one in ``ubar``, so the maximum over the product
    grid is the sum of the three per-factor maxima; no product enumeration is
    needed.
    """
    xs = _grid_points(*X)
    xbs = _grid_points(*X_S)
    us = _grid_points(*U)
    best = np.zeros(sys.m)
    for t in times:
        phi_x = np.array([sys.phi(x, t) for x in xs])
        phi_xb = np.array([sys.phi(x, t) for x in xbs])
        nominal = phi_xb @ theta_bar.theta_x.T + k * xbs
        for est in param_samples(S):
            M = np.linalg.inv(est.theta_u)
            # nu = -M (theta_x phi(x) + k x) + M (theta_bar_x phi(xbar) + k xbar)
            #      - M (theta_u - theta_bar_u) ubar
            tx = -(phi_x @ est.theta_x.T + k * xs) @ M.T
            tb = nominal @ M.T
            tu = -us @ (M @ (est.theta_u - theta_bar.theta_u)).T
            hi = tx.max(axis=0) + tb.max(axis=0) + tu.max(axis=0)
            lo = tx.min(axis=0) + tb.min(axis=0) + tu.min(axis=0)
            best = np.maximum(best, np.maximum(hi, -lo))
    return best


def tighten_inputs(U, nu_max, margin: float = 1.25):
    """``U`` shrunk per coordinate by ``margin * nu_max``."""
    if margin < 1:
        raise ValueError("margin must be at least 1")
    lo, hi = (np.asarray(b, dtype=float) for b in U)
    shrink = margin * np.asarray(nu_max, dtype=float)
    lo, hi = lo + shrink, hi - shrink
    if np.any(lo > hi):
        raise EmptyTightening("input set is empty after tightening")
    return lo, hi


# --------------------------------------------------------------------------
# nominal selection


def select_nominal(Psi_d: Sequence[LumpedParams], S: ParamPolytope, theta_hat: LumpedParams,
                   tol: float = MEMBERSHIP_TOL) -> tuple[int, LumpedParams]:
    """Closest element of ``Psi_d`` to ``theta_hat`` among those inside ``S``."""
    best = None
    for i, cand in enumerate(Psi_d):
        if not contains(S, cand, tol):
            continue
        d = cand.distance(theta_hat)
        # distances equal up to rounding count as ties (lowest index wins)
        if best is None or d < best[0] - TIE_RTOL * best[0]:
            best = (d, i)
    if best is None:
        raise NoNominalInSet("no nominal parameter lies inside the model set")
    return best[1], Psi_d[best[1]]


# --------------------------------------------------------------------------
# search


@dataclass
class Plan:
    nodes: list[tuple[int, ...]]
    primitives: list[MotionPrimitive]
    cost: float
    delta: float
    nominal_id: int
    lattice: LatticeSpec
    meta: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return math.fsum(p.duration for p in self.primitives)

    def segments(self):
        """``(start_time, anchor_state, primitive)`` for every step."""
        t = 0.0
        for node, prim in zip(self.nodes, self.primitives):
            anchor = self.lattice.node_state(node) - self.lattice.node_state(
                tuple(0 for _ in node))
            yield t, anchor, prim
            t += prim.duration

    def reference(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Concatenated nominal samples ``(times, states, inputs)``."""
        ts, xs, us = [], [], []
        for k, (t0, anchor, prim) in enumerate(self.segments()):
            keep = slice(0 if k == 0 else 1, None)
            ts.append(t0 + prim.times[keep])
            xs.append(prim.states[keep] + anchor)
            us.append(prim.inputs[keep])
        if not ts:
            x = self.lattice.node_state(self.nodes[0])
            return np.zeros(1), x[None, :], np.zeros((1, 0))
        return np.concatenate(ts), np.vstack(xs), np.vstack(us)

    def footprint_points(self) -> np.ndarray:
        _, xs, _ = self.reference()
        return xs[:, list(self.lattice.planning_dims)]

    def to_dict(self) -> dict:
        return {
            "nodes": [list(n) for n in self.nodes],
            "primitives": [{"nominal_id": p.nominal_id, "offset": list(p.offset)}
                           for p in self.primitives],
            "cost": self.cost, "delta": self.delta, "nominal_id": self.nominal_id,
            "meta": self.meta,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    def save_reference_csv(self, path) -> None:
        write_trajectory_csv(path, *self.reference())


def _edge_clear(w: Workspace, lattice: LatticeSpec, node, prim: MotionPrimitive) -> bool:
    origin = lattice.position(tuple(0 for _ in node))
    shift = lattice.position(node) - origin
    pts = prim.footprint[:, list(lattice.planning_dims)] + shift
    return path_clear(w, pts)


def plan(start: Sequence[int], goal: Sequence[int], library: PrimitiveLibrary, nominal_id: int,
         workspace: Workspace, delta: float = 0.0) -> Plan:
    """Least-cost chain of primitives from ``start`` to ``goal`` (A*).

    ``workspace`` is the already tightened free space; every primitive
    footprint must stay inside it.  Ties are broken by lower f, then lower h,
    then insertion order.
    """
    lattice = library.lattice
    start, goal = tuple(start), tuple(goal)
    for name, node in (("start", start), ("goal", goal)):
        if not lattice.in_grid(node) or not workspace.point_free(
                lattice.position(node)):
            raise InfeasibleEndpoint(f"{name} node {node} is not in the free tightened space")
    prims = library.for_nominal(nominal_id)
    if start == goal:
        return Plan([start], [], 0.0, delta, nominal_id, lattice)
    moves = [(p.offset, p) for p in prims if any(p.offset)]
    if not moves:
        raise NoPath(f"library has no primitives for nominal {nominal_id}")
    min_cost = min(p.cost for _, p in moves)
    max_step = max(math.hypot(*off) for off, _ in moves)
    goal_arr = np.array(goal, dtype=float)

    def h(node):
        return float(np.linalg.norm(np.array(node, dtype=float) - goal_arr)) / max_step * min_cost

    # Path costs are accumulated exactly (as fractions of the float edge
    # costs) so that equal-cost ties and the reported optimum do not depend on
    # summation order; nodes are reopened whenever a cheaper exact cost turns
    # up, and the search stops once no queued entry can beat the goal.
    counter = itertools.count()
    g = {start: Fraction(0)}
    parent: dict = {}
    edge_cost = {id(prim): Fraction(prim.cost) for _, prim in moves}
    clear_cache: dict = {}
    h0 = h(start)
    heap = [(h0, h0, next(counter), start)]
    while heap:
        f, _, _, node = heapq.heappop(heap)
        if goal in g and f > float(g[goal]) * (1 + 1e-12) + 1e-12:
            break
        if f > float(g[node]) + h(node) * (1 + 1e-12) + 1e-12:
            continue  # stale entry
        if node == goal:
            continue
        for off, prim in moves:
            nxt = tuple(a + b for a, b in zip(node, off))
            if not lattice.in_grid(nxt):
                continue
            cand = g[node] + edge_cost[id(prim)]
            if nxt in g and cand >= g[nxt]:
                continue
            key = (node, off)
            if key not in clear_cache:
                clear_cache[key] = _edge_clear(workspace, lattice, node, prim)
            if not clear_cache[key]:
                continue
            g[nxt] = cand
            parent[nxt] = (node, prim)
            hn = h(nxt)
            heapq.heappush(heap, (float(cand) + hn, hn, next(counter), nxt))
    if goal not in g:
        raise NoPath(f"no feasible primitive chain from {start} to {goal}")
    nodes, chain = [goal], []
    while nodes[-1] != start:
        prev, prim = parent[nodes[-1]]
        chain.append(prim)
        nodes.append(prev)
    nodes.reverse()
    chain.reverse()
    cost = float(g[goal])
    return Plan(nodes, chain, cost, delta, nominal_id, lattice)
