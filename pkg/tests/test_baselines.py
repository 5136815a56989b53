import math

import numpy as np
import pytest

from qsentinel.core import AgentState, PEDESTRIAN, VEHICLE
from qsentinel.baselines import (
    ReachConfig,
    adversarial_reach_clearance,
    adversarial_reach_detect,
    ensemble_verdicts,
    likelihood_detect,
    likelihood_score,
    pdt_detect,
    reach_score,
    ttc_detect,
    ttc_score,
    udt_detect,
    udt_score,
)
from qsentinel.oracles import gaussian_quantile
from qsentinel.predictor import sample_predictions, standard_mode


def make_prediction(state, seed=0, M=30, horizon=4, accel_std=0.25, turn_std=0.04):
    modes = (
        standard_mode("constant_velocity", weight=1.0, accel_std=accel_std, turn_std=turn_std),
    )
    return sample_predictions("a", state, modes, M, horizon, 0.5, seed)


class TestLikelihood:
    def setup_method(self):
        self.state = AgentState(4.0, 2.0, 0.0, 5.0)
        self.pred = make_prediction(self.state)
        # Ego tracks alongside so the agent stays within the 10 m gate.
        self.ego = self.pred.positions().mean(axis=0)[1:] - np.array([3.0, 2.0])

    def test_mean_path_not_detected(self):
        mean_path = self.pred.positions().mean(axis=0)[1:]
        assert not likelihood_detect(
            [self.pred], {"a": mean_path}, self.ego, threshold=1e-4
        )

    def test_far_agent_gated_out(self):
        far_state = AgentState(40.0, 0.0, 0.0, 5.0)
        pred = make_prediction(far_state, seed=1)
        wild = pred.positions().mean(axis=0)[1:] + 50.0
        ego = np.tile([0.0, 0.0], (4, 1))
        assert likelihood_score([pred], {"a": wild}, ego) == -math.inf
        assert not likelihood_detect([pred], {"a": wild}, ego, threshold=0.5)

    def test_deviation_detected(self):
        realized = self.pred.positions().mean(axis=0)[1:]
        realized[:, 1] += 4.0  # many-sigma lateral surprise, still gated in
        assert likelihood_detect([self.pred], {"a": realized}, self.ego, threshold=1e-4)

    def test_score_orders_by_density(self):
        mean_path = self.pred.positions().mean(axis=0)[1:]
        mild = mean_path.copy()
        mild[:, 1] += 0.5
        wild = mean_path.copy()
        wild[:, 1] += 5.0
        s0 = likelihood_score([self.pred], {"a": mean_path}, self.ego)
        s1 = likelihood_score([self.pred], {"a": mild}, self.ego)
        s2 = likelihood_score([self.pred], {"a": wild}, self.ego)
        assert s0 < s1 < s2


class TestUdtPdt:
    def test_central_observation_not_detected(self):
        rng = np.random.default_rng(20)
        reference = rng.normal(size=(50, 4))
        observed = reference.mean(axis=0)
        for p in (0.05, 0.2, 0.4):
            assert not udt_detect(reference, observed, p)

    def test_observed_above_all_sums_detected(self):
        rng = np.random.default_rng(21)
        reference = rng.normal(size=(50, 4))
        observed = reference.max(axis=0) + 1.0
        assert udt_detect(reference, observed, 0.05)
        assert udt_score(reference, observed) == 1.0

    def test_gaussian_three_sigma(self):
        rng = np.random.default_rng(22)
        horizon = 4
        reference = rng.normal(size=(4000, horizon))
        # Observed horizon sum at 3 sigma of the sum distribution.
        target = 3.0 * math.sqrt(horizon)
        observed = np.full(horizon, target / horizon)
        assert udt_detect(reference, observed, 0.05)
        thr = gaussian_quantile(0.95) * math.sqrt(horizon)
        assert np.quantile(reference.sum(axis=1), 0.95) == pytest.approx(thr, abs=0.15)

    def test_degenerate_references_trigger_on_equal(self):
        reference = np.ones((10, 3))
        assert udt_detect(reference, np.ones(3), 0.1)

    def test_pdt_catches_final_step_shift(self):
        rng = np.random.default_rng(23)
        reference = rng.normal(size=(400, 4))
        observed = np.zeros(4)
        observed[3] = 4.0  # large shift confined to the last step
        assert pdt_detect(reference, observed, 0.05)
        assert not udt_detect(reference, observed, 0.01)

    def test_pdt_central_is_quiet(self):
        rng = np.random.default_rng(24)
        reference = rng.normal(size=(200, 4))
        assert not pdt_detect(reference, reference.mean(axis=0), 0.05)

    def test_single_step_pdt_equals_udt(self):
        rng = np.random.default_rng(25)
        reference = rng.normal(size=(100, 1))
        for shift in (-1.0, 0.5, 2.0, 3.0):
            observed = np.array([shift])
            assert pdt_detect(reference, observed, 0.05) == udt_detect(
                reference, observed, 0.05
            )

    def test_m_lower_bound(self):
        with pytest.raises(ValueError):
            udt_score(np.ones((1, 3)), np.ones(3))


class TestTtcDetect:
    def test_thresholding(self, params):
        ego = AgentState(0, 0, 0, 2.5)
        other = AgentState(10, 0, math.pi, 2.5)  # ttc = 1.6 s
        assert not ttc_detect(ego, [other], 1.0, params)
        assert ttc_detect(ego, [other], 2.0, params)

    def test_empty_scene(self, params):
        assert not ttc_detect(AgentState(0, 0, 0, 5), [], 10.0, params)
        assert ttc_score(AgentState(0, 0, 0, 5), [], params) == -math.inf

    def test_monotone_in_threshold(self, params):
        rng = np.random.default_rng(26)
        for _ in range(100):
            ego = AgentState(0, 0, 0, rng.uniform(0, 10))
            agents = [
                AgentState(*rng.uniform(-20, 20, 2), rng.uniform(-3, 3), rng.uniform(0, 10))
                for _ in range(2)
            ]
            lo = ttc_detect(ego, agents, 0.5, params)
            hi = ttc_detect(ego, agents, 3.0, params)
            assert not lo or hi


class TestAdversarialReach:
    def setup_method(self):
        # Ego committed plan: straight at 8 m/s for 4 steps.
        self.plan = np.array([[8.0 * 0.5 * t, 0.0] for t in range(5)])

    def test_far_slow_agent_unreachable(self, params):
        agents = [AgentState(100.0, 50.0, 0.0, 1.0)]
        assert not adversarial_reach_detect(self.plan, 1.0, agents, 64, 0, 0.5, params)

    def test_agent_dead_ahead_collides(self, params):
        agents = [AgentState(5.0, 0.0, math.pi, 2.0)]
        assert adversarial_reach_detect(self.plan, 1.0, agents, 8, 0, 0.5, params)

    def test_empty_scene_false(self, params):
        assert not adversarial_reach_detect(self.plan, 1.0, [], 16, 0, 0.5, params)
        assert reach_score(self.plan, 1.0, [], 16, 0, 0.5, params) == -math.inf

    def test_budget_monotone_nested(self, params):
        rng = np.random.default_rng(27)
        for case in range(30):
            agents = [
                AgentState(
                    rng.uniform(-15, 25), rng.uniform(-12, 12), rng.uniform(-3, 3),
                    rng.uniform(0, 9),
                    VEHICLE if rng.random() < 0.7 else PEDESTRIAN,
                )
            ]
            small = adversarial_reach_clearance(self.plan, 1.0, agents, 16, case, 0.5, params)
            large = adversarial_reach_clearance(self.plan, 1.0, agents, 64, case, 0.5, params)
            assert large <= small + 1e-12

    def test_matches_dense_grid_oracle_vehicle(self, params):
        """Marginal geometry: sampled corners+uniform vs a dense control grid."""
        agent = AgentState(9.0, 2.5, math.pi + 0.4, 4.0)
        cfg = ReachConfig()
        clearance = adversarial_reach_clearance(
            self.plan, 1.0, [agent], 512, 0, 0.5, params, cfg
        )
        # Dense grid over constant controls (the corner set embeds in it).
        best = math.inf
        for accel in np.linspace(*cfg.vehicle_accel_bounds, 9):
            for steer in np.linspace(-cfg.vehicle_steer_bound_rad, cfg.vehicle_steer_bound_rad, 9):
                x, y, th, v = agent.x, agent.y, agent.heading, agent.speed
                for t in range(4):
                    ex, ey = self.plan[t + 1]
                    x += v * math.cos(th) * 0.5
                    y += v * math.sin(th) * 0.5
                    th += v * math.tan(steer) / cfg.vehicle_length * 0.5
                    v += accel * 0.5
                    best = min(best, math.hypot(x - ex, y - ey) - 2.0)
        # The sampled check must be at least as pessimistic as the
        # constant-control grid (piecewise controls only add reach).
        assert clearance <= best + 0.15

    def test_pedestrian_crossing_reachable(self, params):
        # Walking toward the path, aligned with a step boundary (overlap is
        # checked at step resolution): an adversarial rollout reaches it.
        ped = AgentState(8.0, 2.0, -math.pi / 2, 1.0, PEDESTRIAN)
        assert adversarial_reach_detect(self.plan, 1.0, [ped], 256, 0, 0.5, params)
        # Stationary and 2.2 m off with a 0.5 m/s^2 budget: out of reach
        # within the pass window.
        still = AgentState(3.0, 2.2, 0.0, 0.0, PEDESTRIAN)
        clearance = adversarial_reach_clearance(self.plan, 1.0, [still], 256, 0, 0.5, params)
        assert clearance > 0.0


class TestEnsembles:
    def test_truth_table(self):
        a = [True, True, False, False]
        b = [True, False, True, False]
        assert ensemble_verdicts([a, b], "all_of").tolist() == [True, False, False, False]
        assert ensemble_verdicts([a, b], "any_of").tolist() == [True, True, True, False]

    def test_set_containment(self):
        rng = np.random.default_rng(28)
        members = [rng.random(500) < 0.3 for _ in range(4)]
        all_of = ensemble_verdicts(members, "all_of")
        any_of = ensemble_verdicts(members, "any_of")
        for m in members:
            assert np.all(all_of <= m)
            assert np.all(m <= any_of)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            ensemble_verdicts([[True]], "majority")
