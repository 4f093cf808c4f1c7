"""Scenario files: every knob of an identification/planning campaign.

A scenario is a JSON document with SI units and row-major matrices.  Unknown
keys are rejected at every level so that typos fail loudly.  The true
parameter matrix lives here only so that the plant simulator can be built; the
planner and controllers never receive it.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import dynamics
from .paramspace import LumpedParams, ParamPolytope, check_weights, contains
from .planner import Workspace
from .primitives import LatticeSpec, SolverConfig, build_lattice

MODELS = ("quadrotor_attitude",)
REGRESSORS = ("rates_spin",)
PLANNING_MODELS = ("jerk_chain",)
PSI_D_MODES = ("vertices+centroid", "random")


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario document."""


def _take(d: Any, where: str, required: tuple[str, ...], optional: dict | None = None) -> dict:
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected an object")
    optional = optional or {}
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ScenarioError(f"{where}: missing keys {missing}")
    out = dict(optional)
    out.update(d)
    return out


def _params(d: Any, where: str) -> LumpedParams:
    d = _take(d, where, ("theta_x", "theta_u"), {"note": ""})
    try:
        return LumpedParams(np.array(d["theta_x"], dtype=float), np.array(d["theta_u"], dtype=float))
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class SystemSpec:
    model: str
    regressor: str
    constants: dynamics.QuadrotorConstants
    omega: dynamics.OmegaSignal
    rate_bound: float
    torque_bound: float

    def build(self) -> dynamics.SystemModel:
        model, _ = dynamics.quadrotor_attitude_model(self.constants, self.omega,
                                                     rate_bound=self.rate_bound,
                                                     torque_bound=self.torque_bound)
        return model


@dataclass(frozen=True)
class PlanningSpec:
    model: str
    vel_bound: float
    acc_bound: float
    jerk_bound: float
    cost_R: tuple[tuple[float, ...], ...]

    def build(self):
        return dynamics.jerk_model(2, self.vel_bound, self.acc_bound, self.jerk_bound)


@dataclass(frozen=True)
class InnerLoop:
    """Gains of the cascade that turns a position plan into rate commands."""

    k_ref: float = 20.0
    k_angle: float = 8.0
    kp: float = 4.0
    kd: float = 4.0


@dataclass(frozen=True)
class Scenario:
    name: str
    system: SystemSpec
    true_theta: LumpedParams | None
    Psi: ParamPolytope
    psi_d_mode: str
    psi_d_count: int
    gamma: np.ndarray
    Gamma: float
    k: float
    planning: PlanningSpec
    lattice: LatticeSpec
    workspace: Workspace
    start: tuple[int, ...]
    goal: tuple[int, ...]
    dt: float
    check_dt: float
    executions: int
    seed: int
    tube_gain: float
    nu_margin: float
    inner: InnerLoop
    solver: SolverConfig
    trajectory_stride: int = 10
    description: str = ""
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def without_truth(self) -> "Scenario":
        """Copy with the true parameters removed, for everything but the plant."""
        raw = dict(self.raw)
        raw.pop("true_theta", None)
        return replace(self, true_theta=None, raw=raw)

    def with_overrides(self, executions: int | None = None, seed: int | None = None) -> "Scenario":
        raw = json.loads(json.dumps(self.raw))
        if executions is not None:
            raw["executions"] = executions
        if seed is not None:
            raw["seed"] = seed
        return parse_scenario(raw)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.raw))

    def save(self, path) -> None:
        Path(path).write_text(dump_document(self.raw))


def parse_scenario(doc: dict) -> Scenario:
    top = _take(doc, "scenario",
                ("name", "system", "true_theta", "psi", "psi_d", "Gamma", "k", "planning",
                 "lattice", "workspace", "start", "goal", "dt", "executions", "seed",
                 "tube_gain"),
                {"description": "", "gamma": None, "nu_margin": 1.25, "inner_loop": {},
                 "solver": {}, "output": {}})

    s = _take(top["system"], "system", ("model", "omega"),
              {"regressor": "rates_spin", "constants": {}, "rate_bound": 2.0, "torque_bound": 3.0})
    if s["model"] not in MODELS:
        raise ScenarioError(f"system.model must be one of {MODELS}")
    if s["regressor"] not in REGRESSORS:
        raise ScenarioError(f"system.regressor must be one of {REGRESSORS}")
    const_fields = set(asdict(dynamics.QuadrotorConstants()))
    unknown = set(s["constants"]) - const_fields
    if unknown:
        raise ScenarioError(f"system.constants: unknown keys {sorted(unknown)}")
    om = _take(s["omega"], "system.omega", ("mean",), {"amplitude": 0.0, "freq": 0.0})
    system = SystemSpec(s["model"], s["regressor"], dynamics.QuadrotorConstants(**s["constants"]),
                        dynamics.OmegaSignal(float(om["mean"]), float(om["amplitude"]),
                                             float(om["freq"])),
                        float(s["rate_bound"]), float(s["torque_bound"]))
    model = system.build()

    true_theta = _params(top["true_theta"], "true_theta")
    if not isinstance(top["psi"], list) or not top["psi"]:
        raise ScenarioError("psi: expected a non-empty list of vertices")
    Psi = ParamPolytope(tuple(_params(v, f"psi[{i}]") for i, v in enumerate(top["psi"])))
    for i, v in enumerate(Psi.vertices):
        try:
            model.check_params(v)
        except ValueError as exc:
            raise ScenarioError(f"psi[{i}]: {exc}") from exc
    model.check_params(true_theta)
    if not contains(Psi, true_theta, 1e-9):
        raise ScenarioError("true_theta lies outside the uncertainty set psi")

    pd = _take(top["psi_d"], "psi_d", ("mode",), {"count": 0})
    if pd["mode"] not in PSI_D_MODES:
        raise ScenarioError(f"psi_d.mode must be one of {PSI_D_MODES}")
    gamma = check_weights(top["gamma"] if top["gamma"] is not None
                          else np.full(Psi.q, 1.0 / Psi.q), Psi.q)
    Gamma, k = float(top["Gamma"]), float(top["k"])
    if Gamma <= 0 or k <= 0:
        raise ScenarioError("Gamma and k must be positive")

    pl = _take(top["planning"], "planning", ("model",),
               {"vel_bound": 3.0, "acc_bound": 3.0, "jerk_bound": 5.0,
                "cost_R": [[1.0, 0.0], [0.0, 1.0]]})
    if pl["model"] not in PLANNING_MODELS:
        raise ScenarioError(f"planning.model must be one of {PLANNING_MODELS}")
    R = np.array(pl["cost_R"], dtype=float)
    if R.shape != (2, 2) or np.any(np.linalg.eigvalsh(0.5 * (R + R.T)) < 0):
        raise ScenarioError("planning.cost_R must be a 2 x 2 positive semidefinite matrix")
    planning = PlanningSpec(pl["model"], float(pl["vel_bound"]), float(pl["acc_bound"]),
                            float(pl["jerk_bound"]), tuple(map(tuple, R.tolist())))

    la = _take(top["lattice"], "lattice", ("bounds", "resolution"), {"connectivity": "8"})
    try:
        lattice = build_lattice([0, 1], la["bounds"], la["resolution"], la["connectivity"],
                                [0.0] * 6)
    except ValueError as exc:
        raise ScenarioError(f"lattice: {exc}") from exc

    ws = _take(top["workspace"], "workspace", ("bounds",), {"obstacles": []})
    obstacles = []
    for i, o in enumerate(ws["obstacles"]):
        o = _take(o, f"workspace.obstacles[{i}]", ("lo", "hi"))
        obstacles.append((tuple(o["lo"]), tuple(o["hi"])))
    try:
        workspace = Workspace(tuple(map(tuple, ws["bounds"])), tuple(obstacles))
    except ValueError as exc:
        raise ScenarioError(f"workspace: {exc}") from exc

    start, goal = tuple(int(v) for v in top["start"]), tuple(int(v) for v in top["goal"])
    for name, node in (("start", start), ("goal", goal)):
        if len(node) != 2 or not lattice.in_grid(node):
            raise ScenarioError(f"{name} node {node} is not on the lattice")
        if not workspace.point_free(lattice.position(node)):
            raise ScenarioError(f"{name} node {node} lies inside an obstacle")

    dt = _take(top["dt"], "dt", ("simulation",), {"nominal_check": 1e-2})
    if float(dt["simulation"]) <= 0 or float(dt["nominal_check"]) <= 0:
        raise ScenarioError("dt values must be positive")
    if int(top["executions"]) < 1:
        raise ScenarioError("executions must be at least 1")
    if float(top["tube_gain"]) <= 0:
        raise ScenarioError("tube_gain must be positive")
    if float(top["nu_margin"]) < 1:
        raise ScenarioError("nu_margin must be at least 1")

    inner_fields = set(asdict(InnerLoop()))
    if not isinstance(top["inner_loop"], dict) or set(top["inner_loop"]) - inner_fields:
        raise ScenarioError(f"inner_loop: allowed keys are {sorted(inner_fields)}")
    inner = InnerLoop(**{k_: float(v) for k_, v in top["inner_loop"].items()})

    solver_fields = set(asdict(SolverConfig()))
    if not isinstance(top["solver"], dict) or set(top["solver"]) - solver_fields:
        raise ScenarioError(f"solver: allowed keys are {sorted(solver_fields)}")
    solver = SolverConfig(**top["solver"])

    out = _take(top["output"], "output", (), {"trajectory_stride": 10})
    if int(out["trajectory_stride"]) < 1:
        raise ScenarioError("output.trajectory_stride must be at least 1")

    return Scenario(
        name=str(top["name"]), system=system, true_theta=true_theta, Psi=Psi,
        psi_d_mode=pd["mode"], psi_d_count=int(pd["count"]), gamma=gamma, Gamma=Gamma, k=k,
        planning=planning, lattice=lattice, workspace=workspace, start=start, goal=goal,
        dt=float(dt["simulation"]), check_dt=float(dt["nominal_check"]),
        executions=int(top["executions"]), seed=int(top["seed"]),
        tube_gain=float(top["tube_gain"]), nu_margin=float(top["nu_margin"]), inner=inner,
        solver=solver, trajectory_stride=int(out["trajectory_stride"]),
        description=str(top["description"]), raw=json.loads(json.dumps(doc)),
    )


def dump_document(doc: dict) -> str:
    """JSON text with one matrix row per line."""
    text = json.dumps(doc, indent=1)
    # collapse innermost numeric lists onto single lines
    return re.sub(r"\[\s*([-+0-9.eE,\s]+?)\s*\]",
                  lambda m: "[" + ", ".join(v.strip() for v in m.group(1).split(",")) + "]",
                  text) + "\n"


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    return parse_scenario(doc)


def _params_doc(p: LumpedParams, note: str = "") -> dict:
    d = {"theta_x": p.theta_x.tolist(), "theta_u": p.theta_u.tolist()}
    if note:
        d["note"] = note
    return d


def default_drone_document() -> dict:
    """The bundled quadrotor campaign.

    A planar 8-connected lattice at 1 m resolution with a wall of three
    slots between start and goal: a narrow slot on the straight line, a wider
    one above it and a wide detour over the top.  The position tube shrinks
    with the model set, so later executions may use the narrower slots.
    """
    const = dynamics.QuadrotorConstants()
    Psi = dynamics.quadrotor_uncertainty_set(dynamics.PSI_CORNERS, const)
    true_theta = dynamics.quadrotor_params(-2.5e-3, 5.0e-3, const)
    return {
        "name": "drone",
        "description": "Quadrotor shuttling between two hover points past a slotted wall.",
        "system": {
            "model": "quadrotor_attitude", "regressor": "rates_spin",
            "constants": asdict(const),
            "omega": {"mean": 2.0, "amplitude": 0.0, "freq": 0.0},
            "rate_bound": 2.0, "torque_bound": 3.0,
        },
        "true_theta": _params_doc(true_theta, "chosen value: centre of the uncertainty set"),
        "psi": [_params_doc(v) for v in Psi.vertices],
        "psi_d": {"mode": "vertices+centroid", "count": 0},
        "gamma": None, "Gamma": 1.0, "k": 4.0,
        "planning": {"model": "jerk_chain", "vel_bound": 3.0, "acc_bound": 3.0,
                     "jerk_bound": 5.0, "cost_R": [[0.1, 0.0], [0.0, 0.1]]},
        "lattice": {"bounds": [[0.0, 10.0], [0.0, 8.0]], "resolution": [1.0, 1.0],
                    "connectivity": "8"},
        "workspace": {
            "bounds": [[0.0, 10.0], [0.0, 8.0]],
            "obstacles": [
                {"lo": [4.6, 0.0], "hi": [5.4, 2.85]},
                {"lo": [4.6, 3.15], "hi": [5.4, 4.65]},
                {"lo": [4.6, 5.35], "hi": [5.4, 6.3]},
            ],
        },
        "start": [1, 3], "goal": [9, 3],
        "dt": {"simulation": 2e-3, "nominal_check": 1e-2},
        "executions": 9, "seed": 0,
        "tube_gain": 60.0, "nu_margin": 1.25,
        "inner_loop": asdict(InnerLoop()),
        "output": {"trajectory_stride": 10},
    }


def default_drone_scenario() -> Scenario:
    return parse_scenario(default_drone_document())
