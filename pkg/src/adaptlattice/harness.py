"""Offline/online planning loop and deterministic plant simulation.

One *execution* takes the model set carried over from the previous flight,
computes the tube radius, tightens the workspace and input sets, picks a
nominal parameter inside the model set, plans on the primitive lattice and
then flies the plan on the simulated quadrotor while the identifier runs.
A *campaign* chains executions with identifier carry-over.

The quadrotor cascade: the planner works on a planar jerk-driven triple
integrator, the position loop turns nominal position, velocity and
acceleration into a tilt target, and the attitude-rate loop (the system under
identification) gets the tube controller ``u = ubar + nu``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import dynamics, identifier, planner, primitives, tube
from .paramspace import LumpedParams, ParamPolytope, diam, sample_discrete
from .scenario import Scenario

DIAM_SLACK = 1e-8
TUBE_TOL = 1e-6


class InvariantViolation(RuntimeError):
    """A guaranteed property failed during a run."""


def _fmt(v: float) -> str:
    return repr(float(v))


# --------------------------------------------------------------------------
# plants


class AttitudePlant:
    """Rate dynamics of the true system.

    The true parameters are held privately; callers only see measured rates
    and the RK4 stage points of every step.
    """

    def __init__(self, model: dynamics.SystemModel, theta: LumpedParams, x0=None):
        model.check_params(theta)
        self._model = model
        self._tx = theta.theta_x.copy()
        self._tu = theta.theta_u.copy()
        self.x = np.zeros(model.n) if x0 is None else np.array(x0, dtype=float)
        self.t = 0.0

    def _f(self, t, x, u):
        return self._tx @ self._model.phi(x, t) + self._tu @ u

    def step(self, u, dt: float):
        """Advance by ``dt`` with ``u`` held; returns the RK4 stage points."""
        u = np.asarray(u, dtype=float)
        self.x, stages = dynamics.rk4_step(lambda t, x: self._f(t, x, u), self.t, self.x, dt)
        self.t += dt
        return stages


class QuadrotorPlant:
    """Rates, small-angle roll/pitch and planar translation of the quadrotor.

    State ``(r1, r2, r3, roll, pitch, px, py, vx, vy)``; translational
    acceleration is ``g (pitch, -roll)``.
    """

    def __init__(self, model: dynamics.SystemModel, theta: LumpedParams, g: float):
        model.check_params(theta)
        self._model = model
        self._tx = theta.theta_x.copy()
        self._tu = theta.theta_u.copy()
        self._g = float(g)
        self.z = np.zeros(9)
        self.t = 0.0

    def reset(self, position) -> None:
        """Hover at ``position`` with zero rates, tilt and velocity."""
        self.z = np.zeros(9)
        self.z[5:7] = position
        self.t = 0.0

    @property
    def rates(self) -> np.ndarray:
        return self.z[:3].copy()

    def _f(self, t, z, u):
        out = np.empty(9)
        r = z[:3]
        out[:3] = self._tx @ self._model.phi(r, t) + self._tu @ u
        out[3:5] = r[:2]
        out[5:7] = z[7:9]
        out[7] = self._g * z[4]
        out[8] = -self._g * z[3]
        return out

    def step(self, u, dt: float):
        """Advance by ``dt``; returns the rate components of the RK4 stages."""
        u = np.asarray(u, dtype=float)
        self.z, stages = dynamics.rk4_step(lambda t, z: self._f(t, z, u), self.t, self.z, dt)
        self.t += dt
        if not np.all(np.isfinite(self.z)):
            raise dynamics.BlowUp(f"non-finite plant state at t={self.t:g}")
        return tuple((ts, zs[:3]) for ts, zs in stages)


# --------------------------------------------------------------------------
# identification run


def excitation_reference(t: float) -> np.ndarray:
    """Smooth rate reference that keeps every regressor entry moving."""
    return np.array([0.5 + 0.1 * math.sin(1.3 * t),
                     0.5 + 0.1 * math.sin(0.7 * t + 1.0),
                     0.3 * math.sin(0.9 * t)])


@dataclass
class IdentificationRun:
    times: np.ndarray
    diam: np.ndarray
    norm_xtilde: np.ndarray
    delta: float
    ident: identifier.IdentifierState


def run_identification(model: dynamics.SystemModel, plant: AttitudePlant, Psi: ParamPolytope,
                       T: float, dt: float = 1e-3, Gamma: float = 1.0, k: float = 4.0,
                       gamma=None, reference: Callable[[float], np.ndarray] = excitation_reference,
                       sample_every: int = 10,
                       on_sample: Callable[[float, identifier.IdentifierState, np.ndarray], None]
                       | None = None) -> IdentificationRun:
    """Track ``reference`` with the combined estimate while identifying.

    The rate command is ``u = theta_u_hat^-1 (k (r - x) - theta_x_hat phi(x))``.
    ``on_sample(t, ident, x)`` is called every ``sample_every`` steps and at
    the start.
    """
    gamma = np.full(Psi.q, 1.0 / Psi.q) if gamma is None else gamma
    ident = identifier.init_identifier(Psi, gamma, Gamma, k, plant.x)
    steps = int(round(T / dt))
    times, diams, errs = [], [], []

    def sample(t):
        _, xh = identifier.combined_estimate(ident)
        times.append(t)
        diams.append(identifier.current_diam(ident))
        errs.append(float(np.linalg.norm(plant.x - xh)))
        if on_sample is not None:
            on_sample(t, ident, plant.x.copy())

    sample(0.0)
    for s in range(steps):
        t = s * dt
        x = plant.x.copy()
        est, _ = identifier.combined_estimate(ident)
        u = np.linalg.solve(est.theta_u, k * (reference(t) - x) - est.theta_x @ model.phi(x, t))
        uhat = tube.adaptive_vertex_controls(u, x, ident.xhat, est.theta_u, k)
        stages = plant.step(u, dt)
        ident = identifier.identifier_step(model, ident, x, u, uhat, dt, stages=stages)
        if (s + 1) % sample_every == 0 or s + 1 == steps:
            sample((s + 1) * dt)
    return IdentificationRun(np.array(times), np.array(diams), np.array(errs),
                             identifier.delta_bound(diam(Psi), Gamma), ident)


# --------------------------------------------------------------------------
# offline block


def nominal_candidates(scen: Scenario) -> list[LumpedParams]:
    """The finite nominal set ``Psi_d`` (seeded when sampled at random)."""
    return sample_discrete(scen.Psi, scen.psi_d_mode, scen.psi_d_count, scen.seed)


def rate_box(scen: Scenario, shrink: float = 0.0):
    b = scen.system.rate_bound - shrink
    if b <= 0:
        raise planner.EmptyTightening("rate box is empty after tightening")
    return np.full(3, -b), np.full(3, b)


def _rate_reference(inputs: np.ndarray, g: float) -> np.ndarray:
    """Tilt-rate reference ``(-jerk_y / g, jerk_x / g, 0)`` per input sample."""
    out = np.zeros((len(inputs), 3))
    out[:, 0] = -inputs[:, 1] / g
    out[:, 1] = inputs[:, 0] / g
    return out


def make_attach(scen: Scenario, model: dynamics.SystemModel):
    """Attach hook storing the rate reference and nominal rate/torque peaks.

    The nominal rate model under ``theta_bar`` tracks the reference with
    gain ``k_ref`` from rest; the largest nominal rate and torque magnitudes
    per axis are kept so that each execution can drop the entries that do
    not fit its tightened sets.
    """
    g = scen.system.constants.g
    k_ref = scen.inner.k_ref

    def attach(prim: primitives.MotionPrimitive, theta_bar: LumpedParams) -> dict:
        ref = _rate_reference(prim.inputs, g)
        if prim.duration == 0.0:
            return {"rate_ref": ref, "rate_peak": np.zeros(3), "torque_peak": np.zeros(3)}
        steps = max(1, int(math.ceil(prim.duration / scen.check_dt)))
        h = prim.duration / steps
        tu_inv = np.linalg.inv(theta_bar.theta_u)
        xb = np.zeros(3)
        rate_peak = np.zeros(3)
        torque_peak = np.zeros(3)
        for s in range(steps + 1):
            t = s * h
            r = primitives.interp_samples(ref, prim.duration, t)
            ub = tu_inv @ (k_ref * (r - xb) - theta_bar.theta_x @ model.phi(xb, t))
            rate_peak = np.maximum(rate_peak, np.abs(xb))
            torque_peak = np.maximum(torque_peak, np.abs(ub))
            if s < steps:
                xb, _ = dynamics.rk4_step(
                    lambda tt, xx: theta_bar.theta_x @ model.phi(xx, tt) + theta_bar.theta_u @ ub,
                    t, xb, h)
        return {"rate_ref": ref, "rate_peak": rate_peak, "torque_peak": torque_peak}

    return attach


def feasible_entries(library: primitives.PrimitiveLibrary, X_S, U_S
                     ) -> primitives.PrimitiveLibrary:
    """The library restricted to entries whose nominal rates and torques fit the sets."""
    keep = {}
    for key, prim in library.entries.items():
        rp, tp = prim.extras["rate_peak"], prim.extras["torque_peak"]
        if np.all(-rp >= X_S[0]) and np.all(rp <= X_S[1]) \
                and np.all(-tp >= U_S[0]) and np.all(tp <= U_S[1]):
            keep[key] = prim
    return primitives.PrimitiveLibrary(library.lattice, library.nominal_params, keep,
                                       library.digest, library.report, library.version)


_LIBRARIES: dict[str, primitives.PrimitiveLibrary] = {}


def library_config(scen: Scenario, Psi_d) -> dict:
    def r(a):
        return [float(v) for v in np.ravel(a)]

    return {
        "lattice": scen.lattice.to_dict(),
        "planning": {"model": scen.planning.model, "vel": scen.planning.vel_bound,
                     "acc": scen.planning.acc_bound, "jerk": scen.planning.jerk_bound,
                     "R": r(scen.planning.cost_R)},
        "solver": {k: v for k, v in scen.solver.__dict__.items()},
        "nominal": [r(p.matrix) for p in Psi_d],
        "attitude": {"constants": r(list(scen.system.constants.__dict__.values())),
                     "omega": r(list(scen.system.omega.__dict__.values()))},
        "k_ref": scen.inner.k_ref, "check_dt": scen.check_dt,
    }


def planning_model_meta(scen: Scenario) -> dict:
    """How to rebuild the planning model of a library (see :func:`planning_model_from_meta`)."""
    pl = scen.planning
    return {"kind": "integrator_chain", "dims": 2, "order": 3,
            "bounds": [pl.vel_bound, pl.acc_bound], "input_bound": pl.jerk_bound}


def planning_model_from_meta(meta: dict):
    """``(model, params)`` of a library's planning model."""
    if meta.get("kind") != "integrator_chain":
        raise ValueError(f"unknown planning model kind {meta.get('kind')!r}")
    return dynamics.integrator_chain_model(int(meta["dims"]), int(meta["order"]),
                                           [float(b) for b in meta["bounds"]],
                                           float(meta["input_bound"]))


def get_library(scen: Scenario, model: dynamics.SystemModel, Psi_d
                ) -> primitives.PrimitiveLibrary:
    """Primitive library of the scenario, cached in-process by config digest."""
    digest = primitives.config_digest(library_config(scen, Psi_d))
    lib = _LIBRARIES.get(digest)
    if lib is None:
        pmodel, ptheta = scen.planning.build()
        cons = primitives.Constraints(pmodel.state_box, pmodel.input_box)
        lib = primitives.build_library(
            pmodel, Psi_d, scen.lattice, primitives.RunningCost(np.array(scen.planning.cost_R)),
            cons, scen.solver, planning_params=ptheta,
            attach=make_attach(scen, model), digest=digest,
            meta={"planning_model": planning_model_meta(scen)})
        _LIBRARIES[digest] = lib
    return lib


@dataclass
class OfflineResult:
    delta: float
    rho: float
    nominal_id: int
    theta_bar: LumpedParams
    nu_max: np.ndarray
    X_S: tuple
    U_S: tuple
    workspace: planner.Workspace
    library: primitives.PrimitiveLibrary
    plan: planner.Plan


def offline_block(scen: Scenario, model: dynamics.SystemModel,
                  ident: identifier.IdentifierState) -> OfflineResult:
    """Tube radius, tightening, nominal selection, library and plan."""
    delta = identifier.delta_bound(ident.S0_diam, ident.Gamma)
    rho = scen.tube_gain * delta
    S = identifier.model_set(ident)
    theta_hat, _ = identifier.combined_estimate(ident)
    Psi_d = nominal_candidates(scen)
    nominal_id, theta_bar = planner.select_nominal(Psi_d, S, theta_hat)
    X = rate_box(scen)
    X_S = rate_box(scen, delta)
    U = (np.full(3, -scen.system.torque_bound), np.full(3, scen.system.torque_bound))
    nu_max = planner.nu_extremes(model, theta_bar, scen.k, X, X_S, U, S,
                                 times=scen.system.omega.extreme_times())
    U_S = planner.tighten_inputs(U, nu_max, scen.nu_margin)
    library = feasible_entries(get_library(scen, model, Psi_d), X_S, U_S)
    w = planner.tighten_workspace(scen.workspace, rho)
    result = planner.plan(scen.start, scen.goal, library, nominal_id, w, delta=rho)
    return OfflineResult(delta, rho, nominal_id, theta_bar, nu_max, X_S, U_S, w, library, result)


# --------------------------------------------------------------------------
# online block


def _step_reference(plan: planner.Plan, dt: float, steps: int, g: float):
    """Nominal position, velocity, acceleration and rate reference at every step start."""
    ref = np.zeros((steps + 1, 9))  # p(2) v(2) a(2) r_d(3)
    lat = plan.lattice
    t_grid = np.arange(steps + 1) * dt
    goal = lat.node_state(plan.nodes[-1])
    ref[:, 0:2] = goal[0:2]
    for t0, anchor, prim in plan.segments():
        if prim.duration == 0.0:
            continue
        t1 = t0 + prim.duration
        sel = (t_grid >= t0) & (t_grid < t1)
        tau = t_grid[sel] - t0
        grid = prim.times
        states = prim.states + anchor
        for j in range(6):
            ref[sel, j] = np.interp(tau, grid, states[:, j])
        rr = prim.extras["rate_ref"]
        for j in range(3):
            ref[sel, 6 + j] = np.interp(tau, grid, rr[:, j])
    return ref


@dataclass
class ExecutionRecord:
    execution: int
    diam_start: float
    diam_end: float
    delta: float
    rho: float
    nominal_id: int
    plan_cost: float
    max_tube_dev: float
    max_position_dev: float
    max_torque: float
    torque_bound_ok: bool
    tube_violation: bool
    nodes: list
    duration: float
    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    nominal: np.ndarray = field(repr=False)
    inputs: np.ndarray = field(repr=False)
    tube_dev: np.ndarray = field(repr=False)
    plan: planner.Plan = field(repr=False, default=None)
    files: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "execution": self.execution, "diam_start": self.diam_start,
            "diam_end": self.diam_end, "delta": self.delta, "rho": self.rho,
            "nominal_id": self.nominal_id, "plan_cost": self.plan_cost,
            "max_tube_dev": self.max_tube_dev, "max_position_dev": self.max_position_dev,
            "max_torque": self.max_torque, "torque_bound_ok": self.torque_bound_ok,
            "tube_violation": self.tube_violation, "nodes": [list(n) for n in self.nodes],
            "duration": self.duration, "files": dict(self.files),
        }

    def write_trajectory(self, path) -> None:
        header = (["t", "r1", "r2", "r3", "roll", "pitch", "px", "py", "vx", "vy",
                   "rbar1", "rbar2", "rbar3", "px_nom", "py_nom", "u1", "u2", "u3", "tube_dev"])
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in zip(self.times, self.states, self.nominal, self.inputs, self.tube_dev):
                t, z, nom, u, d = row
                w.writerow([_fmt(v) for v in (t, *z, *nom, *u, d)])


def run_execution(scen: Scenario, carried: identifier.IdentifierState | None = None,
                  index: int = 1) -> tuple[ExecutionRecord, identifier.IdentifierState]:
    """Plan with the carried model set, then fly the plan on the true plant.

    Without ``carried`` the identifier starts from the full uncertainty set.
    Returns the record and the identifier for the next execution.
    """
    model = scen.system.build()
    g = scen.system.constants.g
    plant = QuadrotorPlant(model, scen.true_theta, g)
    plant.reset(scen.lattice.position(scen.start))
    # from here on only the plant knows the true parameters
    scen = scen.without_truth()
    if carried is None:
        carried = identifier.init_identifier(scen.Psi, scen.gamma, scen.Gamma, scen.k,
                                             plant.rates)
    ident = identifier.resync(carried, plant.rates)
    diam_start = ident.S0_diam
    off = offline_block(scen, model, ident)
    theta_bar = off.theta_bar
    ctx = tube.ControlContext(theta_bar, scen.k, model)
    tbx, tbu = theta_bar.theta_x, theta_bar.theta_u
    tbu_inv = np.linalg.inv(tbu)
    inner = scen.inner
    dt = scen.dt
    steps = int(math.ceil(off.plan.duration / dt - 1e-9))
    ref = _step_reference(off.plan, dt, steps, g)
    stride = scen.trajectory_stride

    xbar = plant.rates
    rec_t, rec_z, rec_nom, rec_u, rec_dev = [], [], [], [], []
    max_dev = max_pos = max_u = 0.0
    k = scen.k

    def nominal_rhs(u_bar):
        return lambda t, x: tbx @ model.phi(x, t) + tbu @ u_bar

    for s in range(steps + 1):
        t = s * dt
        z = plant.z
        r = z[:3]
        dev = float(np.linalg.norm(r - xbar))
        max_dev = max(max_dev, dev)
        pos_dev = float(np.linalg.norm(z[5:7] - ref[s, 0:2]))
        max_pos = max(max_pos, pos_dev)
        # position loop -> tilt target -> rate command for the nominal model
        a_cmd = ref[s, 4:6] + inner.kp * (ref[s, 0:2] - z[5:7]) + inner.kd * (ref[s, 2:4] - z[7:9])
        tilt_err = np.array([-a_cmd[1] / g - z[3], a_cmd[0] / g - z[4], 0.0])
        r_cmd = ref[s, 6:9] + inner.k_angle * tilt_err
        u_bar = tbu_inv @ (inner.k_ref * (r_cmd - xbar) - tbx @ model.phi(xbar, t))
        theta_hat, _ = identifier.combined_estimate(ident)
        u = u_bar + tube.nu(r, xbar, u_bar, theta_hat, ctx, t)
        max_u = max(max_u, float(np.max(np.abs(u))))
        if s % stride == 0 or s == steps:
            rec_t.append(t)
            rec_z.append(z.copy())
            rec_nom.append(np.concatenate([xbar, ref[s, 0:2]]))
            rec_u.append(u)
            rec_dev.append(dev)
        if s == steps:
            break
        uhat = tube.adaptive_vertex_controls(u, r, ident.xhat, theta_hat.theta_u, k)
        stages = plant.step(u, dt)
        ident = identifier.identifier_step(model, ident, r, u, uhat, dt, stages=stages)
        xbar, _ = dynamics.rk4_step(nominal_rhs(u_bar), t, xbar, dt)

    diam_end = identifier.current_diam(ident)
    if diam_end > diam_start + DIAM_SLACK:
        raise InvariantViolation(
            f"model set grew during execution {index}: {diam_start!r} -> {diam_end!r}")
    record = ExecutionRecord(
        execution=index, diam_start=diam_start, diam_end=diam_end, delta=off.delta,
        rho=off.rho, nominal_id=off.nominal_id, plan_cost=off.plan.cost, max_tube_dev=max_dev,
        max_position_dev=max_pos, max_torque=max_u,
        torque_bound_ok=max_u <= scen.system.torque_bound,
        tube_violation=max_dev > off.delta + TUBE_TOL, nodes=list(off.plan.nodes),
        duration=off.plan.duration, times=np.array(rec_t), states=np.array(rec_z),
        nominal=np.array(rec_nom), inputs=np.array(rec_u), tube_dev=np.array(rec_dev),
        plan=off.plan)
    return record, ident


# --------------------------------------------------------------------------
# campaign


METRICS_HEADER = ["execution", "diam_start", "diam_end", "delta", "plan_cost", "max_tube_dev"]


@dataclass
class CampaignReport:
    scenario: str
    records: list[ExecutionRecord]
    diam_psi: float
    final: identifier.IdentifierState = field(repr=False, default=None)
    workspace: planner.Workspace | None = field(repr=False, default=None)
    files: dict = field(default_factory=dict)

    @property
    def costs(self) -> list[float]:
        return [r.plan_cost for r in self.records]

    @property
    def final_diam_ratio(self) -> float:
        return self.records[-1].diam_end / self.diam_psi

    @property
    def violations(self) -> list[int]:
        return [r.execution for r in self.records if r.tube_violation]

    def metrics_rows(self) -> list[list[str]]:
        return [[str(r.execution), _fmt(r.diam_start), _fmt(r.diam_end), _fmt(r.delta),
                 _fmt(r.plan_cost), _fmt(r.max_tube_dev)] for r in self.records]

    def write_metrics(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRICS_HEADER)
            w.writerows(self.metrics_rows())

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario, "diam_psi": self.diam_psi,
            "final_diam_ratio": self.final_diam_ratio, "plan_costs": self.costs,
            "tube_violations": self.violations,
            "records": [r.summary() for r in self.records], "files": dict(self.files),
        }


def run_campaign(scen: Scenario, out_dir=None, emit_plots: bool = False,
                 progress: Callable[[ExecutionRecord], None] | None = None) -> CampaignReport:
    """Chain ``scen.executions`` executions with identifier carry-over.

    With ``out_dir`` the metrics CSV, per-execution trajectory, plan and
    reference files and a JSON report are written there; ``emit_plots`` adds
    the SVG overlay.
    """
    records = []
    ident = None
    for e in range(1, scen.executions + 1):
        rec, ident = run_execution(scen, ident, e)
        records.append(rec)
        if progress is not None:
            progress(rec)
    report = CampaignReport(scen.name, records, diam(scen.Psi), ident, scen.workspace)
    if out_dir is not None:
        write_campaign(report, Path(out_dir), emit_plots)
    return report


def write_campaign(report: CampaignReport, out: Path, emit_plots: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for rec in report.records:
        stem = f"execution_{rec.execution:02d}"
        rec.write_trajectory(out / f"{stem}_trajectory.csv")
        rec.plan.save(out / f"{stem}_plan.json")
        rec.plan.save_reference_csv(out / f"{stem}_reference.csv")
        rec.files = {"trajectory": f"{stem}_trajectory.csv", "plan": f"{stem}_plan.json",
                     "reference": f"{stem}_reference.csv"}
    report.write_metrics(out / "metrics.csv")
    report.files["metrics"] = "metrics.csv"
    if emit_plots:
        from .svgplot import campaign_svg

        (out / "campaign.svg").write_text(campaign_svg(report))
        report.files["plot"] = "campaign.svg"
    report.files["report"] = "report.json"
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n")

