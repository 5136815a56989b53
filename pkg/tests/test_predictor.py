import math

import numpy as np
import pytest

from qsentinel.core import AgentState, GaussianMixture, unicycle_step
from qsentinel.predictor import (
    fit_mixtures,
    gmm_log_density,
    rollout_arrays,
    sample_control_arrays,
    sample_predictions,
    sample_rollout_batch,
    standard_mode,
)

STATE = AgentState(1.0, -2.0, 0.3, 6.0)


class TestModes:
    def test_standard_labels(self):
        assert standard_mode("constant_velocity").control.acceleration == 0.0
        assert standard_mode("brake").control.acceleration == -2.0
        assert standard_mode("turn_left").control.turn_rate == 0.3
        with pytest.raises(ValueError):
            standard_mode("wander")

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            sample_predictions("a", STATE, (standard_mode("brake", weight=0.5),), 4, 4, 0.5, 0)

    def test_empty_modes_rejected(self):
        with pytest.raises(ValueError):
            sample_predictions("a", STATE, (), 4, 4, 0.5, 0)


class TestSampling:
    def test_single_mode_zero_noise_all_identical_straight(self):
        modes = (standard_mode("constant_velocity", weight=1.0),)
        pred = sample_predictions("a", STATE, modes, M=8, horizon=4, dt=0.5, seed=0)
        first = pred.samples[0]
        assert all(t == first for t in pred.samples)
        # Straight line at constant speed, matching the unicycle model.
        expected = STATE
        for state in first.states[1:]:
            expected = unicycle_step(expected, first.controls[0], 0.5)
            assert state.x == pytest.approx(expected.x, abs=1e-12)
            assert state.speed == STATE.speed

    def test_zero_weight_mode_never_sampled(self):
        modes = (
            standard_mode("constant_velocity", weight=1.0),
            standard_mode("brake", weight=0.0),
        )
        _, _, idx = sample_control_arrays(modes, 500, 3, np.random.default_rng(0))
        assert set(idx) == {0}

    def test_mode_frequencies_concentrate(self):
        modes = (
            standard_mode("constant_velocity", weight=0.5),
            standard_mode("brake", weight=0.5),
        )
        n = 10_000
        _, _, idx = sample_control_arrays(modes, n, 2, np.random.default_rng(1))
        freq = float(np.mean(idx == 0))
        sigma = math.sqrt(0.25 / n)
        assert abs(freq - 0.5) <= 3 * sigma

    def test_states_replay_under_unicycle_step(self):
        modes = (
            standard_mode("constant_velocity", weight=0.6, accel_std=0.4, turn_std=0.1),
            standard_mode("stop", weight=0.4, accel_std=0.2, turn_std=0.05),
        )
        pred = sample_predictions("a", STATE, modes, M=6, horizon=5, dt=0.5, seed=3)
        for traj in pred.samples:
            state = traj.states[0]
            for control, nxt in zip(traj.controls, traj.states[1:]):
                state = unicycle_step(state, control, 0.5)
                assert state.x == pytest.approx(nxt.x, abs=1e-9)
                assert state.y == pytest.approx(nxt.y, abs=1e-9)
                assert state.speed == pytest.approx(nxt.speed, abs=1e-9)

    def test_nonego_speed_never_negative(self):
        modes = (standard_mode("stop", weight=1.0, accel_std=0.5),)
        positions, velocities, headings, speeds = rollout_arrays(
            AgentState(0, 0, 0, 1.0),
            *sample_control_arrays(modes, 200, 6, np.random.default_rng(2))[:2],
            dt=0.5,
        )
        assert speeds.min() >= 0.0

    def test_deterministic_given_seed(self):
        modes = (standard_mode("constant_velocity", weight=1.0, accel_std=0.3, turn_std=0.1),)
        a = sample_predictions("a", STATE, modes, 10, 4, 0.5, seed=42)
        b = sample_predictions("a", STATE, modes, 10, 4, 0.5, seed=42)
        assert a == b

    def test_substream_permutation_leaves_multiset(self):
        """Each sample depends only on its own spawned substream."""
        modes = (
            standard_mode("constant_velocity", weight=0.7, accel_std=0.3, turn_std=0.05),
            standard_mode("brake", weight=0.3, accel_std=0.2, turn_std=0.05),
        )
        M = 12
        root = np.random.SeedSequence(9)
        children = root.spawn(M)
        drawn = []
        for child in children:
            rng = np.random.default_rng(child)
            a, w, idx = sample_control_arrays(modes, 1, 4, rng)
            drawn.append((a[0].tolist(), w[0].tolist(), int(idx[0])))
        pred = sample_predictions("a", STATE, modes, M, 4, 0.5, seed=np.random.SeedSequence(9))
        from_pred = [
            ([c.acceleration for c in t.controls], [c.turn_rate for c in t.controls])
            for t in pred.samples
        ]
        # Same multiset regardless of assignment order of substreams.
        effective = sorted((a, w) for a, w, _ in drawn)
        # Controls in trajectories are the effective ones (speed floor), so
        # compare the turn columns plus the mode indices via sorted pairs.
        assert sorted(w for _, w in from_pred) == sorted(w for _, w in effective)

    def test_empirical_mean_converges_to_mixture_mean(self):
        modes = (
            standard_mode("constant_velocity", weight=0.5, accel_std=0.2, turn_std=0.02),
            standard_mode("brake", weight=0.5, accel_std=0.2, turn_std=0.02),
        )
        pred = sample_predictions("a", STATE, modes, M=400, horizon=3, dt=0.5, seed=11)
        positions = pred.positions()
        for tau in range(1, 4):
            mix = pred.mixture_params[tau - 1]
            mixture_mean = np.sum(mix.weights[:, None] * mix.means, axis=0)
            assert np.allclose(positions[:, tau].mean(axis=0), mixture_mean, atol=1e-9)


class TestMixtures:
    def test_dropped_empty_modes_and_weights(self):
        positions = np.zeros((10, 3, 2))
        positions[:, 1, 0] = np.arange(10)
        mode_idx = np.array([0] * 7 + [2] * 3)
        mixtures = fit_mixtures(positions, mode_idx, n_modes=3)
        assert mixtures[0].n_modes == 2
        assert mixtures[0].weights.tolist() == [0.7, 0.3]

    def test_covariance_floor(self):
        positions = np.zeros((5, 2, 2))
        mixtures = fit_mixtures(positions, np.zeros(5, dtype=int), n_modes=1)
        cov = mixtures[0].covariances[0]
        assert cov[0, 0] == pytest.approx(1e-6)
        assert cov[1, 1] == pytest.approx(1e-6)


class TestGmmLogDensity:
    def test_standard_normal_peak(self):
        mix = GaussianMixture(np.zeros((1, 2)), np.eye(2)[None], np.ones(1))
        assert gmm_log_density(mix, (0.0, 0.0)) == pytest.approx(math.log(1 / (2 * math.pi)))

    def test_far_tail(self):
        mix = GaussianMixture(np.zeros((1, 2)), np.eye(2)[None], np.ones(1))
        assert gmm_log_density(mix, (10.0, 0.0)) < -50.0

    def test_two_mode_midpoint_averages(self):
        means = np.array([[-1.0, 0.0], [1.0, 0.0]])
        covs = np.stack([np.eye(2), np.eye(2)])
        mix = GaussianMixture(means, covs, np.array([0.5, 0.5]))
        single = GaussianMixture(means[:1], covs[:1], np.ones(1))
        expected = math.log(math.exp(gmm_log_density(single, (0.0, 0.0))))
        assert gmm_log_density(mix, (0.0, 0.0)) == pytest.approx(expected)

    def test_integrates_to_one_on_grid(self):
        means = np.array([[0.5, -0.2], [-0.4, 0.3]])
        covs = np.stack([np.diag([0.3, 0.5]), np.diag([0.4, 0.2])])
        mix = GaussianMixture(means, covs, np.array([0.6, 0.4]))
        xs = np.linspace(-6, 6, 241)
        ys = np.linspace(-6, 6, 241)
        dx = xs[1] - xs[0]
        total = 0.0
        for x in xs:
            row = np.array([gmm_log_density(mix, (x, y)) for y in ys])
            total += np.exp(row).sum() * dx * dx
        assert total == pytest.approx(1.0, abs=0.01)

    def test_anisotropic_correlated_value(self):
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        mix = GaussianMixture(np.array([[1.0, -1.0]]), cov[None], np.ones(1))
        x = np.array([1.7, -0.4])
        diff = x - np.array([1.0, -1.0])
        inv = np.linalg.inv(cov)
        expected = (
            -math.log(2 * math.pi)
            - 0.5 * math.log(np.linalg.det(cov))
            - 0.5 * float(diff @ inv @ diff)
        )
        assert gmm_log_density(mix, x) == pytest.approx(expected, abs=1e-12)


def test_batch_matches_distribution():
    modes = (
        standard_mode("constant_velocity", weight=0.8, accel_std=0.3, turn_std=0.05),
        standard_mode("brake", weight=0.2, accel_std=0.2, turn_std=0.05),
    )
    positions, velocities = sample_rollout_batch(
        STATE, modes, 5000, 4, 0.5, np.random.default_rng(4)
    )
    assert positions.shape == (5000, 5, 2)
    assert velocities.shape == (5000, 5, 2)
    # Mean forward progress sits between pure cv and pure brake rollouts.
    cv = STATE.speed * 2.0
    brake = STATE.speed * 2.0 - 2.0 * (0.5 + 1.0 + 1.5) * 0.5
    forward = np.linalg.norm(positions[:, -1] - positions[:, 0], axis=1).mean()
    assert brake < forward < cv
