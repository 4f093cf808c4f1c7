"""Parameter matrices and vertex-represented convex polytopes of them.

A :class:`LumpedParams` pairs the drift block ``theta_x`` (n x p) with the
input block ``theta_u`` (n x m).  All geometry (distances, projection,
membership) uses the Frobenius norm of the stacked matrix ``[theta_x, theta_u]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

MEMBERSHIP_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-12


class DimensionError(ValueError):
    pass


class WeightError(ValueError):
    pass


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LumpedParams:
    """The lumped parameter matrix ``[theta_x, theta_u]``."""

    theta_x: np.ndarray
    theta_u: np.ndarray

    def __post_init__(self):
        tx = _frozen(self.theta_x, 2)
        tu = np.array(self.theta_u, dtype=float)
        if tu.size == 0:
            tu = tu.reshape(tx.shape[0], 0)
        tu = _frozen(tu, 2)
        if tx.shape[0] != tu.shape[0]:
            raise DimensionError(
                f"theta_x has {tx.shape[0]} rows but theta_u has {tu.shape[0]}")
        object.__setattr__(self, "theta_x", tx)
        object.__setattr__(self, "theta_u", tu)

    @property
    def n(self) -> int:
        return self.theta_x.shape[0]

    @property
    def p(self) -> int:
        return self.theta_x.shape[1]

    @property
    def m(self) -> int:
        return self.theta_u.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.p, self.m)

    @cached_property
    def matrix(self) -> np.ndarray:
        out = np.hstack([self.theta_x, self.theta_u])
        out.setflags(write=False)
        return out

    @property
    def flat(self) -> np.ndarray:
        return self.matrix.ravel()

    @classmethod
    def from_matrix(cls, matrix, p: int) -> "LumpedParams":
        mat = np.asarray(matrix, dtype=float)
        return cls(mat[:, :p], mat[:, p:])

    def like(self, flat) -> "LumpedParams":
        """Rebuild a matrix of this shape from a flat (row-major) vector."""
        return LumpedParams.from_matrix(np.reshape(flat, self.matrix.shape), self.p)

    def distance(self, other: "LumpedParams") -> float:
        _check_same(self, other)
        return float(np.linalg.norm(self.matrix - other.matrix))

    def __eq__(self, other):
        if not isinstance(other, LumpedParams):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.matrix, other.matrix)

    __hash__ = None

    def __repr__(self):
        return f"LumpedParams(theta_x={self.theta_x.tolist()}, theta_u={self.theta_u.tolist()})"


def _check_same(a: LumpedParams, b: LumpedParams) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"parameter shapes differ: {a.shape} vs {b.shape}")


@dataclass(frozen=True, eq=False)
class ParamPolytope:
    """Convex hull of an ordered, non-empty list of parameter matrices."""

    vertices: tuple[LumpedParams, ...] = field()

    def __post_init__(self):
        verts = tuple(self.vertices)
        if not verts:
            raise ValueError("a polytope needs at least one vertex")
        for v in verts[1:]:
            _check_same(verts[0], v)
        object.__setattr__(self, "vertices", verts)

    @property
    def q(self) -> int:
        return len(self.vertices)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.vertices[0].shape

    @cached_property
    def points(self) -> np.ndarray:
        """Vertices as rows of flattened matrices, shape (q, n*(p+m))."""
        pts = np.array([v.flat for v in self.vertices])
        pts.setflags(write=False)
        return pts

    @cached_property
    def box(self) -> tuple[np.ndarray, np.ndarray] | None:
        """``(lo, hi)`` when the hull is an axis-aligned box in flat coordinates.

        Coordinates on which every vertex agrees are treated as fixed
        (``lo == hi``); the remaining ``d`` coordinates must carry exactly the
        ``2**d`` corners of their bounding box.
        """
        pts = self.points
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        varying = np.flatnonzero(lo != hi)
        d = varying.size
        if d > 20 or self.q != 2 ** d:
            return None
        corners = set()
        for row in pts[:, varying]:
            bits = []
            for j, val in zip(varying, row):
                if val == lo[j]:
                    bits.append(0)
                elif val == hi[j]:
                    bits.append(1)
                else:
                    return None
            corners.add(tuple(bits))
        if len(corners) != self.q:
            return None
        return lo, hi

    def centroid(self) -> LumpedParams:
        return self.vertices[0].like(self.points.mean(axis=0))


def diam(P: ParamPolytope) -> float:
    """Largest Frobenius distance between two vertices (0 for a single vertex)."""
    best = 0.0
    for a, b in combinations(P.points, 2):
        best = max(best, float(np.linalg.norm(a - b)))
    return best


def _min_norm_point(pts: np.ndarray, tol: float = 1e-10, max_iter: int = 500):
    """Wolfe's algorithm: minimum-norm point of ``co(pts)``.

    Returns ``(point, weights)`` with ``weights`` over all rows of ``pts``.
    """
    q = pts.shape[0]
    scale = max(float(np.max(np.sum(pts * pts, axis=1))), 1e-300)
    start = int(np.argmin(np.sum(pts * pts, axis=1)))
    active = [start]
    w = np.array([1.0])
    for _ in range(max_iter):
        x = w @ pts[active]
        dots = pts @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= tol * scale or j in active:
            break
        active.append(j)
        w = np.append(w, 0.0)
        while True:
            A = pts[active]
            k = len(active)
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = A @ A.T
            kkt[:k, k] = 1.0
            kkt[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            alpha = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
            if np.all(alpha > 0):
                w = alpha
                break
            neg = alpha <= 0
            ratios = w[neg] / (w[neg] - alpha[neg])
            theta = float(np.min(ratios))
            w = theta * alpha + (1.0 - theta) * w
            keep = w > 1e-15
            if not np.any(keep):
                keep[int(np.argmax(w))] = True
            active = [a for a, kp in zip(active, keep) if kp]
            w = w[keep]
            w = w / w.sum()
    weights = np.zeros(q)
    weights[active] = w
    return weights @ pts, weights


def project(P: ParamPolytope, M: LumpedParams) -> LumpedParams:
    """Frobenius-nearest point of ``co(P)`` to ``M``."""
    _check_same(P.vertices[0], M)
    if P.box is not None:
        lo, hi = P.box
        return M.like(np.clip(M.flat, lo, hi))
    if P.q == 1:
        return P.vertices[0]
    offset, _ = _min_norm_point(P.points - M.flat)
    return M.like(M.flat + offset)


def project_flat(P: ParamPolytope, flat: np.ndarray) -> np.ndarray:
    """Same as :func:`project` on a flat vector (no wrapping)."""
    if P.box is not None:
        lo, hi = P.box
        return np.clip(flat, lo, hi)
    if P.q == 1:
        return P.points[0].copy()
    offset, _ = _min_norm_point(P.points - flat)
    return flat + offset


def contains(P: ParamPolytope, M: LumpedParams, tol: float = MEMBERSHIP_TOL) -> bool:
    _check_same(P.vertices[0], M)
    nearest = project(P, M)
    return float(np.linalg.norm(nearest.matrix - M.matrix)) <= tol


def convex_combine(P: ParamPolytope, gamma: Sequence[float]) -> LumpedParams:
    g = check_weights(gamma, P.q)
    return P.vertices[0].like(g @ P.points)


def check_weights(gamma, q: int) -> np.ndarray:
    g = np.asarray(gamma, dtype=float)
    if g.shape != (q,):
        raise WeightError(f"expected {q} weights, got shape {g.shape}")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise WeightError("weights must be finite and non-negative")
    if abs(g.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise WeightError(f"weights sum to {g.sum()!r}, not 1")
    return g


def box_polytope(lo: Sequence[float], hi: Sequence[float]) -> ParamPolytope:
    """Axis-aligned box of 1 x d parameter rows, vertices in binary corner order."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    verts = []
    for k in range(2 ** d):
        corner = [hi[j] if (k >> j) & 1 else lo[j] for j in range(d)]
        verts.append(LumpedParams([corner], np.zeros((1, 0))))
    return ParamPolytope(tuple(verts))


def sample_discrete(P: ParamPolytope, mode: str = "vertices+centroid", count: int = 0,
                    seed: int = 0) -> list[LumpedParams]:
    """A finite list of nominal parameters inside ``co(P)``.

    ``vertices+centroid`` gives the q vertices followed by their mean;
    ``random`` appends ``count`` seeded Dirichlet combinations to that list.
    """
    out = list(P.vertices) + [P.centroid()]
    if mode == "vertices+centroid":
        return out
    if mode == "random":
        rng = np.random.default_rng(seed)
        for w in rng.dirichlet(np.ones(P.q), size=count):
            out.append(P.vertices[0].like(w @ P.points))
        return out
    raise ValueError(f"unknown sampling mode {mode!r}")
