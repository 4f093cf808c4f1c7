import csv
import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from adaptlattice import dynamics, harness, identifier, planner, primitives, scenario, tube
from adaptlattice.paramspace import LumpedParams, contains


OFF_CENTRE = dynamics.quadrotor_params(-1e-3, 3.5e-3)


def with_truth(doc, theta):
    doc["true_theta"] = {"theta_x": theta.theta_x.tolist(), "theta_u": theta.theta_u.tolist()}
    return doc


class TestScenario:
    def test_bundled_file_is_the_default(self):
        from pathlib import Path

        path = Path(__file__).resolve().parents[1] / "scenarios" / "drone.json"
        assert scenario.load_scenario(path).raw == scenario.default_drone_document()

    @pytest.mark.parametrize("where", ["top", "system", "omega", "obstacle", "psi"])
    def test_unknown_keys_rejected(self, where):
        doc = scenario.default_drone_document()
        target = {"top": doc, "system": doc["system"], "omega": doc["system"]["omega"],
                  "obstacle": doc["workspace"]["obstacles"][0], "psi": doc["psi"][0]}[where]
        target["colour"] = "red"
        with pytest.raises(scenario.ScenarioError, match="unknown keys"):
            scenario.parse_scenario(doc)

    def test_truth_outside_uncertainty_set(self):
        doc = with_truth(scenario.default_drone_document(), dynamics.quadrotor_params(1e-3, 5e-3))
        with pytest.raises(scenario.ScenarioError, match="outside"):
            scenario.parse_scenario(doc)

    def test_start_inside_obstacle(self):
        doc = scenario.default_drone_document()
        doc["start"] = [5, 1]
        with pytest.raises(scenario.ScenarioError, match="obstacle"):
            scenario.parse_scenario(doc)

    def test_missing_key(self):
        doc = scenario.default_drone_document()
        del doc["goal"]
        with pytest.raises(scenario.ScenarioError, match="missing"):
            scenario.parse_scenario(doc)

    def test_overrides(self):
        scen = scenario.default_drone_scenario().with_overrides(executions=3, seed=7)
        assert (scen.executions, scen.seed) == (3, 7)

    def test_without_truth(self):
        scen = scenario.default_drone_scenario().without_truth()
        assert scen.true_theta is None and "true_theta" not in scen.raw

    def test_random_nominal_set_follows_seed(self):
        doc = scenario.default_drone_document()
        doc["psi_d"] = {"mode": "random", "count": 3}
        a = harness.nominal_candidates(scenario.parse_scenario(doc))
        b = harness.nominal_candidates(scenario.parse_scenario(doc))
        doc["seed"] = 1
        c = harness.nominal_candidates(scenario.parse_scenario(doc))
        assert len(a) == 8
        assert all(x == y for x, y in zip(a, b))
        assert a[-1] != c[-1]


class TestPlants:
    def test_attitude_plant_matches_integrate(self):
        model, theta = dynamics.quadrotor_attitude_model()
        plant = harness.AttitudePlant(model, theta, [0.1, -0.2, 0.3])
        u = np.array([0.1, 0.0, -0.1])
        for _ in range(100):
            plant.step(u, 1e-3)
        traj = dynamics.integrate(model, theta, [0.1, -0.2, 0.3], lambda t: u, 1e-3, 0.1)
        np.testing.assert_allclose(plant.x, traj.final_state, rtol=0, atol=1e-14)

    def test_hover_is_an_equilibrium(self):
        model, theta = dynamics.quadrotor_attitude_model()
        plant = harness.QuadrotorPlant(model, theta, 9.81)
        plant.reset([2.0, 3.0])
        for _ in range(50):
            plant.step(np.zeros(3), 1e-2)
        np.testing.assert_array_equal(plant.z, [0, 0, 0, 0, 0, 2, 3, 0, 0])

    def test_tilt_accelerates(self):
        model, theta = dynamics.quadrotor_attitude_model()
        plant = harness.QuadrotorPlant(model, theta, 9.81)
        plant.z[3:5] = [0.01, 0.02]  # roll, pitch
        for _ in range(100):
            plant.step(np.zeros(3), 1e-2)
        # constant tilt: v = g (pitch, -roll) t, p = g (pitch, -roll) t^2 / 2
        np.testing.assert_allclose(plant.z[7:9], [9.81 * 0.02, -9.81 * 0.01], rtol=1e-12)
        np.testing.assert_allclose(plant.z[5:7], [0.5 * 9.81 * 0.02, -0.5 * 9.81 * 0.01],
                                   rtol=1e-12)

    def test_stages_are_rates(self):
        model, theta = dynamics.quadrotor_attitude_model()
        plant = harness.QuadrotorPlant(model, theta, 9.81)
        stages = plant.step(np.ones(3), 1e-3)
        assert len(stages) == 4 and all(x.shape == (3,) for _, x in stages)


class TestIdentificationRun:
    def test_short_run(self):
        model, theta = dynamics.quadrotor_attitude_model()
        Psi = dynamics.quadrotor_uncertainty_set(dynamics.PSI_CORNERS)
        seen = []
        run = harness.run_identification(model, harness.AttitudePlant(model, theta), Psi, 0.5,
                                         on_sample=lambda t, ident, x: seen.append(t))
        assert len(run.times) == 51 == len(seen)
        assert np.all(np.diff(run.diam) <= 1e-8)
        assert run.delta == pytest.approx(7.4330e-3, abs=5e-8)


class TestExecution:
    def test_zero_mismatch(self, short_doc):
        # true parameters known exactly: the model set is a single point
        doc = with_truth(short_doc, OFF_CENTRE)
        doc["psi"] = [dict(doc["true_theta"])]
        scen = scenario.parse_scenario(doc)
        rec, ident = harness.run_execution(scen)
        assert rec.delta == 0.0 and rec.rho == 0.0
        assert rec.max_tube_dev <= 1e-12
        assert identifier.current_diam(ident) == 0.0
        assert rec.max_position_dev < 0.02

    def test_carry_over_is_exact(self, short_doc, monkeypatch):
        scen = scenario.parse_scenario(with_truth(short_doc, OFF_CENTRE))
        rec1, id1 = harness.run_execution(scen)
        seen = []
        real = harness.offline_block

        def spy(scen_, model, ident):
            seen.append(ident)
            return real(scen_, model, ident)

        monkeypatch.setattr(harness, "offline_block", spy)
        rec2, _ = harness.run_execution(scen, id1, 2)
        np.testing.assert_array_equal(seen[0].psi, id1.psi)
        assert rec2.diam_start == rec1.diam_end
        assert rec2.delta <= rec1.delta + 1e-8
        assert rec2.diam_end <= rec2.diam_start

    def test_tube_containment_off_centre(self, short_doc):
        scen = scenario.parse_scenario(with_truth(short_doc, OFF_CENTRE))
        rec, _ = harness.run_execution(scen)
        assert 1e-6 < rec.max_tube_dev <= rec.delta + 1e-6
        assert not rec.tube_violation
        assert rec.torque_bound_ok

    def test_deterministic(self, short_doc):
        scen = scenario.parse_scenario(short_doc)
        a, _ = harness.run_execution(scen)
        b, _ = harness.run_execution(scen)
        np.testing.assert_array_equal(a.states, b.states)
        assert a.summary() == b.summary()

    def test_no_path(self, short_doc):
        short_doc["workspace"]["obstacles"] = [{"lo": [1.9, 0.0], "hi": [2.1, 8.0]}]
        with pytest.raises(planner.NoPath):
            harness.run_execution(scenario.parse_scenario(short_doc))

    def test_truth_never_reaches_planner_or_controller(self, short_doc, monkeypatch):
        scen = scenario.parse_scenario(with_truth(short_doc, OFF_CENTRE))
        truth = OFF_CENTRE.matrix
        leaks = []

        def scan(obj, where, depth=0):
            if depth > 6:
                return
            if isinstance(obj, LumpedParams):
                if np.array_equal(obj.matrix, truth):
                    leaks.append(where)
            elif isinstance(obj, np.ndarray):
                if obj.shape == truth.shape and np.array_equal(obj, truth):
                    leaks.append(where)
                elif obj.ndim == 3 and obj.shape[1:] == truth.shape:
                    leaks.extend(where for m in obj if np.array_equal(m, truth))
            elif isinstance(obj, scenario.Scenario):
                if obj.true_theta is not None or "true_theta" in obj.raw:
                    leaks.append(where)
            elif isinstance(obj, identifier.IdentifierState):
                scan(obj.psi, where, depth + 1)
            elif isinstance(obj, (list, tuple)):
                for item in obj:
                    scan(item, where, depth + 1)
            elif isinstance(obj, dict):
                for item in obj.values():
                    scan(item, where, depth + 1)

        calls = {}
        targets = [(planner, "select_nominal"), (planner, "nu_extremes"), (planner, "plan"),
                   (planner, "tighten_workspace"), (planner, "tighten_inputs"),
                   (tube, "nu"), (tube, "adaptive_vertex_controls"),
                   (identifier, "identifier_step"), (identifier, "resync"),
                   (identifier, "combined_estimate"), (identifier, "init_identifier"),
                   (primitives, "build_library"), (harness, "offline_block"),
                   (harness, "get_library")]
        for mod, name in targets:
            real = getattr(mod, name)

            def wrapper(*args, _real=real, _name=name, **kwargs):
                calls[_name] = calls.get(_name, 0) + 1
                scan(list(args) + list(kwargs.values()), _name)
                out = _real(*args, **kwargs)
                scan(out, _name + " result")
                return out

            monkeypatch.setattr(mod, name, wrapper)
        harness._LIBRARIES.clear()
        try:
            harness.run_execution(scen)
        finally:
            harness._LIBRARIES.clear()
        assert leaks == []
        for name in ("select_nominal", "nu", "identifier_step", "plan", "build_library"):
            assert calls.get(name, 0) > 0, name


class TestCampaign:
    def test_record_count(self, drone_campaign):
        scen, report = drone_campaign
        assert len(report.records) == scen.executions == 9

    def test_model_set_chain(self, drone_campaign):
        _, report = drone_campaign
        recs = report.records
        for a, b in zip(recs, recs[1:]):
            assert b.diam_start == a.diam_end
            assert b.delta <= a.delta + 1e-8
        assert all(r.diam_end <= r.diam_start + 1e-8 for r in recs)

    def test_plans_avoid_inflated_obstacles(self, drone_campaign):
        scen, report = drone_campaign
        for rec in report.records:
            inflated = planner.tighten_workspace(scen.workspace, rec.rho)
            assert planner.path_clear(inflated, rec.plan.footprint_points())

    def test_flown_paths_avoid_obstacles(self, drone_campaign):
        scen, report = drone_campaign
        for rec in report.records:
            assert planner.path_clear(scen.workspace, rec.states[:, 5:7])
            assert rec.max_position_dev < rec.rho

    def test_truth_stays_in_final_model_set(self, drone_campaign):
        scen, report = drone_campaign
        assert contains(identifier.model_set(report.final), scen.true_theta, 1e-6)

    def test_shorter_routes_open_up(self, drone_campaign):
        _, report = drone_campaign
        routes = [tuple(map(tuple, r.nodes)) for r in report.records]
        assert len(set(routes)) >= 2
        assert report.records[0].plan_cost > report.records[-1].plan_cost

    def test_outputs(self, drone_campaign, tmp_path):
        _, report = drone_campaign
        harness.write_campaign(report, tmp_path, emit_plots=True)
        rows = list(csv.reader((tmp_path / "metrics.csv").open()))
        assert rows[0] == harness.METRICS_HEADER and len(rows) == 10
        assert float(rows[1][4]) == report.records[0].plan_cost
        doc = json.loads((tmp_path / "report.json").read_text())
        assert len(doc["records"]) == 9
        for rec in doc["records"]:
            traj = tmp_path / rec["files"]["trajectory"]
            header = traj.open().readline().strip().split(",")
            assert header[0] == "t" and "tube_dev" in header
        svg = ET.parse(tmp_path / "campaign.svg").getroot()
        groups = [g for g in svg.iter() if g.tag.endswith("}g")]
        assert len(groups) == 9

    def test_single_execution_campaign(self, short_doc):
        short_doc["executions"] = 1
        report = harness.run_campaign(scenario.parse_scenario(short_doc))
        assert len(report.records) == 1
        assert math.isfinite(report.final_diam_ratio)
