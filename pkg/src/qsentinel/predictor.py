"""Synthetic multi-modal trajectory predictor.

Each non-ego agent carries a small library of maneuver modes (weighted
nominal controls with Gaussian control noise). Sampling draws a mode per
trajectory, perturbs its controls step by step, and rolls the agent out with
the unicycle model. Per-step position mixtures are refitted from the same
samples for the likelihood baseline.

Non-ego rollouts never reverse: braking floors the speed at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AgentState, ControlInput, GaussianMixture, PredictionSet, Trajectory

MODE_LABELS = (
    "constant_velocity",
    "accelerate",
    "brake",
    "stop",
    "turn_left",
    "turn_right",
)

# Nominal (acceleration m/s^2, turn rate rad/s) per maneuver label.
_NOMINAL_CONTROLS = {
    "constant_velocity": (0.0, 0.0),
    "accelerate": (1.0, 0.0),
    "brake": (-2.0, 0.0),
    "stop": (-4.0, 0.0),
    "turn_left": (0.0, 0.3),
    "turn_right": (0.0, -0.3),
}

COVARIANCE_FLOOR = 1e-6
LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ManeuverMode:
    """One prediction mode: nominal control, control noise, and weight."""

    label: str
    acceleration: float
    turn_rate: float
    accel_std: float = 0.0
    turn_std: float = 0.0
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.label not in MODE_LABELS:
            raise ValueError(f"unknown maneuver label {self.label!r}")
        if self.accel_std < 0 or self.turn_std < 0:
            raise ValueError("control noise std must be nonnegative")
        if self.weight < 0:
            raise ValueError("mode weight must be nonnegative")

    @property
    def control(self) -> ControlInput:
        return ControlInput(self.acceleration, self.turn_rate)


def standard_mode(
    label: str,
    weight: float = 1.0,
    accel_std: float = 0.0,
    turn_std: float = 0.0,
) -> ManeuverMode:
    """Mode with the standard nominal control for ``label``."""
    if label not in _NOMINAL_CONTROLS:
        raise ValueError(f"unknown maneuver label {label!r}")
    accel, turn = _NOMINAL_CONTROLS[label]
    return ManeuverMode(label, accel, turn, accel_std, turn_std, weight)


def _check_modes(modes: Sequence[ManeuverMode]) -> np.ndarray:
    if not modes:
        raise ValueError("mode set must not be empty")
    weights = np.array([m.weight for m in modes], dtype=float)
    total = weights.sum()
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        raise ValueError(f"mode weights must sum to 1, got {total}")
    return weights


def rollout_arrays(
    init: AgentState,
    accels: np.ndarray,
    turns: np.ndarray,
    dt: float,
    floor_speed: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized unicycle rollout of N control sequences from one state.

    ``accels``/``turns`` have shape (N, T). Returns positions (N, T+1, 2),
    velocities (N, T+1, 2), headings (N, T+1), speeds (N, T+1). With
    ``floor_speed`` the effective acceleration never drives speed below zero,
    matching the non-ego no-reverse convention.
    """
    accels = np.asarray(accels, dtype=float)
    turns = np.asarray(turns, dtype=float)
    if accels.shape != turns.shape or accels.ndim != 2:
        raise ValueError("accels and turns must share shape (N, T)")
    n, horizon = accels.shape

    positions = np.empty((n, horizon + 1, 2))
    velocities = np.empty((n, horizon + 1, 2))
    headings = np.empty((n, horizon + 1))
    speeds = np.empty((n, horizon + 1))
    positions[:, 0] = (init.x, init.y)
    headings[:, 0] = init.heading
    speeds[:, 0] = init.speed

    cos_h = np.full(n, math.cos(init.heading))
    sin_h = np.full(n, math.sin(init.heading))
    velocities[:, 0, 0] = init.speed * cos_h
    velocities[:, 0, 1] = init.speed * sin_h
    for t in range(horizon):
        v = speeds[:, t]
        positions[:, t + 1, 0] = positions[:, t, 0] + v * cos_h * dt
        positions[:, t + 1, 1] = positions[:, t, 1] + v * sin_h * dt
        # Headings stay unnormalized here; cos/sin are periodic and the
        # state constructors renormalize.
        h = headings[:, t] + turns[:, t] * dt
        headings[:, t + 1] = h
        cos_h = np.cos(h)
        sin_h = np.sin(h)
        a = accels[:, t]
        if floor_speed:
            a = np.maximum(a, -v / dt)
        v_next = v + a * dt
        speeds[:, t + 1] = v_next
        velocities[:, t + 1, 0] = v_next * cos_h
        velocities[:, t + 1, 1] = v_next * sin_h

    return positions, velocities, headings, speeds


def sample_control_arrays(
    modes: Sequence[ManeuverMode],
    n: int,
    horizon: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw n mode-conditional noisy control sequences in one stream.

    Returns (accels, turns, mode_idx) with shapes (n, T), (n, T), (n,).
    Draw order is fixed: mode indices (inverse-CDF on uniforms) first, then
    the control noise block.
    """
    weights = _check_modes(modes)
    if n < 1 or horizon < 1:
        raise ValueError("need n >= 1 and horizon >= 1")
    cum_weights = np.cumsum(weights)
    mode_idx = np.minimum(
        np.searchsorted(cum_weights, rng.random(n), side="right"), len(modes) - 1
    )
    noise = rng.standard_normal((n, horizon, 2))
    nominal_a = np.array([m.acceleration for m in modes])
    nominal_w = np.array([m.turn_rate for m in modes])
    std_a = np.array([m.accel_std for m in modes])
    std_w = np.array([m.turn_std for m in modes])
    accels = nominal_a[mode_idx, None] + noise[:, :, 0] * std_a[mode_idx, None]
    turns = nominal_w[mode_idx, None] + noise[:, :, 1] * std_w[mode_idx, None]
    return accels, turns, mode_idx


def fit_mixtures(
    positions: np.ndarray,
    mode_idx: np.ndarray,
    n_modes: int,
) -> tuple[GaussianMixture, ...]:
    """Per-step position mixtures from sampled rollouts.

    One mixture per future step (excluding the shared initial state). Mode
    weights are the empirical sample frequencies; modes with no samples are
    dropped. Covariances get a diagonal floor so zero-noise modes stay
    usable by the likelihood baseline.
    """
    positions = np.asarray(positions, dtype=float)
    n, steps_plus_one, _ = positions.shape
    mixtures = []
    present = [k for k in range(n_modes) if np.any(mode_idx == k)]
    masks = {k: mode_idx == k for k in present}
    for tau in range(1, steps_plus_one):
        means = np.empty((len(present), 2))
        covs = np.empty((len(present), 2, 2))
        weights = np.empty(len(present))
        for row, k in enumerate(present):
            pts = positions[masks[k], tau]
            weights[row] = pts.shape[0] / n
            means[row] = pts.mean(axis=0)
            centered = pts - means[row]
            covs[row] = centered.T @ centered / pts.shape[0]
            covs[row, 0, 0] += COVARIANCE_FLOOR
            covs[row, 1, 1] += COVARIANCE_FLOOR
        mixtures.append(GaussianMixture(means, covs, weights))
    return tuple(mixtures)


def sample_predictions(
    agent_id: str,
    state: AgentState,
    modes: Sequence[ManeuverMode],
    M: int,
    horizon: int,
    dt: float,
    seed: int | np.random.SeedSequence,
) -> PredictionSet:
    """M i.i.d. predicted trajectories plus refitted per-step mixtures.

    Each sample draws from its own spawned RNG substream, so the sampled
    multiset is invariant to permuting substream assignment.
    """
    weights = _check_modes(modes)
    if M < 1 or horizon < 1:
        raise ValueError("need M >= 1 and horizon >= 1")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    cum_weights = np.cumsum(weights)
    nominal_a = np.array([m.acceleration for m in modes])
    nominal_w = np.array([m.turn_rate for m in modes])
    std_a = np.array([m.accel_std for m in modes])
    std_w = np.array([m.turn_std for m in modes])
    accels = np.empty((M, horizon))
    turns = np.empty((M, horizon))
    mode_idx = np.empty(M, dtype=int)
    # One spawned substream per sample: draw order is mode index, then the
    # control-noise block, matching sample_control_arrays.
    for m, child in enumerate(root.spawn(M)):
        rng = np.random.default_rng(child)
        idx = int(np.searchsorted(cum_weights, rng.random(), side="right"))
        idx = min(idx, len(modes) - 1)
        noise = rng.standard_normal((horizon, 2))
        accels[m] = nominal_a[idx] + noise[:, 0] * std_a[idx]
        turns[m] = nominal_w[idx] + noise[:, 1] * std_w[idx]
        mode_idx[m] = idx

    positions, _, headings, speeds = rollout_arrays(state, accels, turns, dt)
    trajectories = []
    for m in range(M):
        states = tuple(
            AgentState(
                x=float(positions[m, t, 0]),
                y=float(positions[m, t, 1]),
                heading=float(headings[m, t]),
                speed=float(speeds[m, t]),
                agent_class=state.agent_class,
            )
            for t in range(horizon + 1)
        )
        # Record the effective accelerations (speed flooring may clip the
        # drawn ones) so the states replay exactly under unicycle_step.
        controls = tuple(
            ControlInput(float((speeds[m, t + 1] - speeds[m, t]) / dt), float(turns[m, t]))
            for t in range(horizon)
        )
        trajectories.append(Trajectory(start_time=0, dt=dt, states=states, controls=controls))

    mixtures = fit_mixtures(positions, mode_idx, len(modes))
    return PredictionSet(
        agent_id=agent_id,
        horizon_T=horizon,
        samples=tuple(trajectories),
        mixture_params=mixtures,
    )


def sample_rollout_batch(
    state: AgentState,
    modes: Sequence[ManeuverMode],
    n: int,
    horizon: int,
    dt: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Bulk sampled rollouts for oracle-scale draws: positions and
    velocities, shapes (n, T+1, 2). Single-stream; use sample_predictions
    for the per-substream protocol."""
    accels, turns, _ = sample_control_arrays(modes, n, horizon, rng)
    positions, velocities, _, _ = rollout_arrays(state, accels, turns, dt)
    return positions, velocities


def gmm_log_density(mixture: GaussianMixture, position: Sequence[float]) -> float:
    """Log density of a 2-D point under the mixture."""
    x = float(position[0])
    y = float(position[1])
    log_terms = np.empty(mixture.n_modes)
    for k in range(mixture.n_modes):
        cov = mixture.covariances[k]
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
        if det <= 0.0:
            cov = cov + COVARIANCE_FLOOR * np.eye(2)
            det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
        dx = x - mixture.means[k, 0]
        dy = y - mixture.means[k, 1]
        quad = (cov[1, 1] * dx * dx - 2.0 * cov[0, 1] * dx * dy + cov[0, 0] * dy * dy) / det
        log_terms[k] = (
            math.log(mixture.weights[k]) - LOG_TWO_PI - 0.5 * math.log(det) - 0.5 * quad
        )
    peak = float(np.max(log_terms))
    return peak + math.log(float(np.sum(np.exp(log_terms - peak))))
