"""Shared simulation loops and oracles for the tests."""
import heapq
import math
from fractions import Fraction

import numpy as np

from adaptlattice import dynamics, identifier, tube
from adaptlattice.planner import Workspace


def rate_reference(t):
    return np.array([0.5 + 0.1 * math.sin(1.3 * t),
                     0.5 + 0.1 * math.sin(0.7 * t + 1.0),
                     0.3 * math.sin(0.9 * t)])


def closed_loop(model, true_params, Psi, T, dt=1e-3, Gamma=1.0, k=4.0, on_step=None):
    """Rate tracking with the combined estimate while the identifier runs.

    ``on_step(ident, x)`` is called after every step.  Returns the final
    identifier and state.
    """
    x = np.zeros(model.n)
    ident = identifier.init_identifier(Psi, np.full(Psi.q, 1.0 / Psi.q), Gamma, k, x)
    for s in range(int(round(T / dt))):
        t = s * dt
        est, _ = identifier.combined_estimate(ident)
        u = np.linalg.solve(est.theta_u, k * (rate_reference(t) - x) - est.theta_x @ model.phi(x, t))
        uhat = tube.adaptive_vertex_controls(u, x, ident.xhat, est.theta_u, k)

        def f(tt, xx):
            return dynamics.eval_dynamics(model, true_params, xx, u, tt)

        x_next, stages = dynamics.rk4_step(f, t, x, dt)
        ident = identifier.identifier_step(model, ident, x, u, uhat, dt, stages=stages)
        x = x_next
        if on_step is not None:
            on_step(ident, x)
    return ident, x


def estimated_tracking(model, theta_bar, theta_hat, true_params, x0, xbar0, ubar, k, T, dt=1e-3):
    """Jointly integrate plant, combined estimator and nominal model.

    The plant gets ``u = ubar + nu``, the estimator gets the combined
    ``u_hat`` and the nominal model gets ``ubar``.  Returns sample times and
    ``|x_hat - xbar|``.
    """
    ctx = tube.ControlContext(theta_bar, k, model)
    n = model.n
    z = np.concatenate([x0, x0, xbar0])

    def f(t, z):
        x, xh, xb = z[:n], z[n:2 * n], z[2 * n:]
        ub = ubar(t)
        u = ub + tube.nu(x, xb, ub, theta_hat, ctx, t)
        uh = tube.combined_control(x, xb, ub, theta_hat, xh, ctx, t)
        return np.concatenate([
            dynamics.eval_dynamics(model, true_params, x, u, t),
            theta_hat.theta_x @ model.phi(x, t) + theta_hat.theta_u @ uh,
            dynamics.eval_dynamics(model, theta_bar, xb, ub, t),
        ])

    times, errs = [0.0], [np.linalg.norm(z[n:2 * n] - z[2 * n:])]
    for s in range(int(round(T / dt))):
        z, _ = dynamics.rk4_step(f, s * dt, z, dt)
        times.append((s + 1) * dt)
        errs.append(np.linalg.norm(z[n:2 * n] - z[2 * n:]))
    return np.array(times), np.array(errs)


def dp_oracle(h=0.1, du=0.2, umax=3.0, vmax=1.5, target=1000, max_steps=35):
    """Rest-to-rest double-integrator transfer over an exact integer lattice.

    Inputs are held over steps of ``h`` on a ``du`` grid; positions are
    counted in units of ``du h^2 / 2`` and velocities in units of ``du h``, so
    every transition lands on the grid exactly.  Returns the least
    ``sum h (1 + u^2)`` reaching position ``target`` at rest.
    """
    J = np.arange(-round(umax / du), round(umax / du) + 1)
    vm = int(round(vmax / (du * h)))
    xlo, xhi = -200, target + 200
    nx, nv = xhi - xlo + 1, 2 * vm + 1
    C = np.full((nx, nv), np.inf)
    C[-xlo, vm] = 0.0
    step_cost = h * (1 + (J * du) ** 2)
    best = np.inf
    for _ in range(max_steps):
        new = np.full_like(C, np.inf)
        for vi in range(nv):
            col = C[:, vi]
            if not np.isfinite(col).any():
                continue
            v = vi - vm
            for j, c in zip(J, step_cost):
                v2 = v + j
                if abs(v2) > vm:
                    continue
                sh = 2 * v + j
                dst = new[:, v2 + vm]
                if sh >= 0:
                    np.minimum(dst[sh:], col[:nx - sh] + c, out=dst[sh:])
                else:
                    np.minimum(dst[:nx + sh], col[-sh:] + c, out=dst[:nx + sh])
        C = new
        best = min(best, C[target - xlo, vm])
    return best


def dense_clear(w, pts, per_segment=20):
    """Sampling oracle: no sample strictly inside an obstacle, all inside bounds."""
    s = np.linspace(0, 1, per_segment)[:, None]
    dense = np.vstack([a + s * (b - a) for a, b in zip(pts[:-1], pts[1:])])
    if np.any(dense < w.lo - 1e-9) or np.any(dense > w.hi + 1e-9):
        return False
    for lo, hi in w.obstacles:
        if np.any(np.all((dense > np.array(lo) + 1e-9) & (dense < np.array(hi) - 1e-9), axis=1)):
            return False
    return True


def dijkstra(start, goal, lib, nominal_id, w):
    """Plain Dijkstra with exact (fractional) path costs and sampled edge checks."""
    lat = lib.lattice
    moves = [(p.offset, Fraction(p.cost), p) for p in lib.for_nominal(nominal_id)]
    dist = {start: Fraction(0)}
    heap = [(Fraction(0), start)]
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist[node]:
            continue
        for off, c, prim in moves:
            nxt = tuple(a + b for a, b in zip(node, off))
            if not lat.in_grid(nxt):
                continue
            pts = prim.footprint[:, list(lat.planning_dims)] + lat.position(node) - lat.position((0, 0))
            if not dense_clear(w, pts):
                continue
            if d + c < dist.get(nxt, math.inf):
                dist[nxt] = d + c
                heapq.heappush(heap, (dist[nxt], nxt))
    return float(dist[goal]) if goal in dist else math.inf


def random_workspace(rng):
    obstacles = []
    for _ in range(int(rng.integers(3, 9))):
        lo = rng.integers(0, 9, size=2).astype(float) + rng.choice([0.0, 0.5], size=2)
        size = rng.integers(1, 4, size=2).astype(float)
        hi = np.minimum(lo + size, 10.0)
        obstacles.append((tuple(lo), tuple(hi)))
    return Workspace(((0, 10), (0, 10)), tuple(obstacles))


def random_free_nodes(rng, lat, w):
    free = [n for n in lat.nodes() if w.point_free(lat.position(n))]
    i, j = rng.choice(len(free), 2, replace=False)
    return free[i], free[j]
