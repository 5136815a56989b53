"""Comparison detectors: likelihood, cost-degradation tests, TTC, sampled
adversarial reachability, and boolean ensembles.

Every baseline exposes a scalar score in which higher means more anomalous,
so the evaluation harness can sweep a single threshold direction, plus a
boolean detect function at its conventional threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import AgentState, VEHICLE, PredictionSet
from .costs import CostParams, time_to_collision
from .predictor import gmm_log_density

NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# Likelihood detection: realized positions scored under the predicted mixture.
# ---------------------------------------------------------------------------


def likelihood_score(
    predictions: Sequence[PredictionSet],
    realized_positions: Mapping[str, np.ndarray],
    ego_positions: np.ndarray,
    gate_radius: float = 10.0,
) -> float:
    """Negative minimum log density over gated agents and horizon steps.

    Agents farther than ``gate_radius`` from the ego at a step are skipped at
    that step. Returns -inf when no (agent, step) pair is gated in.
    """
    ego_positions = np.asarray(ego_positions, dtype=float)
    min_log_density = math.inf
    for pred in predictions:
        realized = np.asarray(realized_positions[pred.agent_id], dtype=float)
        if realized.shape != (pred.horizon_T, 2):
            raise ValueError("realized positions must have shape (T, 2)")
        for tau in range(pred.horizon_T):
            gap = float(np.linalg.norm(realized[tau] - ego_positions[tau]))
            if gap > gate_radius:
                continue
            logp = gmm_log_density(pred.mixture_params[tau], realized[tau])
            min_log_density = min(min_log_density, logp)
    if math.isinf(min_log_density):
        return NEG_INF
    return -min_log_density


def likelihood_detect(
    predictions: Sequence[PredictionSet],
    realized_positions: Mapping[str, np.ndarray],
    ego_positions: np.ndarray,
    threshold: float,
    gate_radius: float = 10.0,
) -> bool:
    """True iff any gated agent's realized position has density below
    ``threshold`` at some horizon step."""
    score = likelihood_score(predictions, realized_positions, ego_positions, gate_radius)
    return score > -math.log(threshold)


# ---------------------------------------------------------------------------
# Uniform / partial cost-degradation tests on predicted-cost references.
# ---------------------------------------------------------------------------


def _check_udt_inputs(reference: np.ndarray, observed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    reference = np.asarray(reference, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if reference.ndim != 2 or reference.shape[0] < 2:
        raise ValueError("reference must be an (M, T) matrix with M >= 2")
    if observed.shape != (reference.shape[1],):
        raise ValueError("observed must be a length-T vector")
    return reference, observed


def udt_score(reference: np.ndarray, observed: np.ndarray) -> float:
    """Rank fraction of the horizon-summed observed cost among the
    horizon-summed reference samples (uniform reference weights)."""
    reference, observed = _check_udt_inputs(reference, observed)
    ref_sums = reference.sum(axis=1)
    return float(np.count_nonzero(ref_sums <= observed.sum())) / ref_sums.size


def udt_detect(reference: np.ndarray, observed: np.ndarray, p_value: float) -> bool:
    """True iff the summed observed cost reaches the empirical (1 - p_value)
    quantile of the summed references.

    Degenerate all-equal references make the threshold that constant, so an
    observed sum equal to it triggers.
    """
    reference, observed = _check_udt_inputs(reference, observed)
    if not 0.0 < p_value < 1.0:
        raise ValueError("p_value must lie in (0, 1)")
    threshold = float(np.quantile(reference.sum(axis=1), 1.0 - p_value))
    return float(observed.sum()) >= threshold


def pdt_score(reference: np.ndarray, observed: np.ndarray) -> float:
    """Worst suffix-window rank fraction: the uniform test applied to every
    window [tau, T]."""
    reference, observed = _check_udt_inputs(reference, observed)
    horizon = reference.shape[1]
    worst = 0.0
    for tau in range(horizon):
        ref_sums = reference[:, tau:].sum(axis=1)
        frac = float(np.count_nonzero(ref_sums <= observed[tau:].sum())) / ref_sums.size
        worst = max(worst, frac)
    return worst


def pdt_detect(reference: np.ndarray, observed: np.ndarray, p_value: float) -> bool:
    """Suffix-window test with Bonferroni-corrected per-window level
    p_value / T; true iff any window exceeds its own quantile threshold."""
    reference, observed = _check_udt_inputs(reference, observed)
    if not 0.0 < p_value < 1.0:
        raise ValueError("p_value must lie in (0, 1)")
    horizon = reference.shape[1]
    level = p_value / horizon
    for tau in range(horizon):
        ref_sums = reference[:, tau:].sum(axis=1)
        threshold = float(np.quantile(ref_sums, 1.0 - level))
        if float(observed[tau:].sum()) >= threshold:
            return True
    return False


# ---------------------------------------------------------------------------
# Time-to-collision detection on realized states.
# ---------------------------------------------------------------------------


def min_ttc(ego: AgentState, agents: Sequence[AgentState], params: CostParams | None = None) -> float:
    p = params if params is not None else CostParams()
    best = math.inf
    for agent in agents:
        radii = (p.radius_for(ego.agent_class), p.radius_for(agent.agent_class))
        best = min(best, time_to_collision(ego, agent, radii))
    return best


def ttc_score(ego: AgentState, agents: Sequence[AgentState], params: CostParams | None = None) -> float:
    """Negated minimum time to collision; -inf for an empty scene."""
    worst = min_ttc(ego, agents, params)
    return NEG_INF if math.isinf(worst) else -worst


def ttc_detect(
    ego: AgentState,
    agents: Sequence[AgentState],
    threshold_s: float,
    params: CostParams | None = None,
) -> bool:
    return min_ttc(ego, agents, params) < threshold_s


# ---------------------------------------------------------------------------
# Sampled adversarial reachability (stand-in for a value-function solve).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReachConfig:
    """Adversarial control boxes and the bicycle geometry."""

    vehicle_accel_bounds: tuple[float, float] = (-2.0, 1.0)
    vehicle_steer_bound_rad: float = math.radians(10.0)
    pedestrian_accel_bound: float = 0.5
    vehicle_length: float = 4.0


def _corner_sequences(agent_class: str, horizon: int, cfg: ReachConfig) -> np.ndarray:
    """Constant extremal control sequences, shape (4, T, 2)."""
    if agent_class == VEHICLE:
        lo_a, hi_a = cfg.vehicle_accel_bounds
        d = cfg.vehicle_steer_bound_rad
        corners = [(lo_a, -d), (lo_a, d), (hi_a, -d), (hi_a, d)]
    else:
        b = cfg.pedestrian_accel_bound
        corners = [(-b, -b), (-b, b), (b, -b), (b, b)]
    out = np.empty((4, horizon, 2))
    for i, (u1, u2) in enumerate(corners):
        out[i, :, 0] = u1
        out[i, :, 1] = u2
    return out


def _random_sequences(
    agent_class: str, count: int, horizon: int, cfg: ReachConfig, rng: np.random.Generator
) -> np.ndarray:
    if count <= 0:
        return np.empty((0, horizon, 2))
    u = rng.random((count, horizon, 2))
    out = np.empty_like(u)
    if agent_class == VEHICLE:
        lo_a, hi_a = cfg.vehicle_accel_bounds
        d = cfg.vehicle_steer_bound_rad
        out[:, :, 0] = lo_a + u[:, :, 0] * (hi_a - lo_a)
        out[:, :, 1] = -d + u[:, :, 1] * 2.0 * d
    else:
        b = cfg.pedestrian_accel_bound
        out[:, :, 0] = -b + u[:, :, 0] * 2.0 * b
        out[:, :, 1] = -b + u[:, :, 1] * 2.0 * b
    return out


def _rollout_adversary(
    agent: AgentState, controls: np.ndarray, dt: float, cfg: ReachConfig
) -> np.ndarray:
    """Positions under sampled controls, shape (N, T+1, 2).

    Vehicles follow a four-state bicycle model (steering as the second
    control); pedestrians integrate a free 2-D acceleration.
    """
    n, horizon, _ = controls.shape
    positions = np.empty((n, horizon + 1, 2))
    positions[:, 0] = (agent.x, agent.y)
    if agent.agent_class == VEHICLE:
        theta = np.full(n, agent.heading)
        v = np.full(n, agent.speed)
        for t in range(horizon):
            positions[:, t + 1, 0] = positions[:, t, 0] + v * np.cos(theta) * dt
            positions[:, t + 1, 1] = positions[:, t, 1] + v * np.sin(theta) * dt
            theta = theta + v * np.tan(controls[:, t, 1]) / cfg.vehicle_length * dt
            v = v + controls[:, t, 0] * dt
    else:
        vel = np.broadcast_to(agent.velocity, (n, 2)).copy()
        for t in range(horizon):
            positions[:, t + 1] = positions[:, t] + vel * dt
            vel = vel + controls[:, t] * dt
    return positions


def adversarial_reach_clearance(
    ego_plan_positions: np.ndarray,
    ego_radius: float,
    agents: Sequence[AgentState],
    budget: int,
    seed: int,
    dt: float,
    params: CostParams | None = None,
    config: ReachConfig | None = None,
) -> float:
    """Minimum circle clearance over adversarially sampled agent rollouts.

    The ego follows its committed plan positions (shape (H+1, 2)). Each
    agent's control sequences are the extremal corners of its control box
    followed by uniform draws, in a nested order: a larger budget replays the
    smaller budget's rollouts first. Negative clearance means collision.
    """
    if budget < 1:
        raise ValueError("sample budget must be at least 1")
    ego_plan_positions = np.asarray(ego_plan_positions, dtype=float)
    horizon = ego_plan_positions.shape[0] - 1
    if horizon < 1:
        raise ValueError("ego plan must cover at least one step")
    p = params if params is not None else CostParams()
    cfg = config if config is not None else ReachConfig()

    clearance = math.inf
    for idx, agent in enumerate(agents):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(idx,)))
        corners = _corner_sequences(agent.agent_class, horizon, cfg)
        sequences = np.concatenate(
            [
                corners[: min(budget, 4)],
                _random_sequences(agent.agent_class, budget - 4, horizon, cfg, rng),
            ]
        )
        positions = _rollout_adversary(agent, sequences, dt, cfg)
        gaps = np.linalg.norm(positions - ego_plan_positions[None, :, :], axis=-1)
        radius_sum = ego_radius + p.radius_for(agent.agent_class)
        clearance = min(clearance, float(gaps.min()) - radius_sum)
    return clearance


def adversarial_reach_detect(
    ego_plan_positions: np.ndarray,
    ego_radius: float,
    agents: Sequence[AgentState],
    budget: int,
    seed: int,
    dt: float,
    params: CostParams | None = None,
    config: ReachConfig | None = None,
) -> bool:
    """True iff any sampled adversarial rollout overlaps the committed plan."""
    if not agents:
        return False
    clearance = adversarial_reach_clearance(
        ego_plan_positions, ego_radius, agents, budget, seed, dt, params, config
    )
    return clearance <= 0.0


def reach_score(
    ego_plan_positions: np.ndarray,
    ego_radius: float,
    agents: Sequence[AgentState],
    budget: int,
    seed: int,
    dt: float,
    params: CostParams | None = None,
    config: ReachConfig | None = None,
) -> float:
    """Negated minimum rollout clearance; -inf for an empty scene."""
    if not agents:
        return NEG_INF
    return -adversarial_reach_clearance(
        ego_plan_positions, ego_radius, agents, budget, seed, dt, params, config
    )


# ---------------------------------------------------------------------------
# Ensembles.
# ---------------------------------------------------------------------------


def ensemble_verdicts(members: Sequence[Sequence[bool]], mode: str) -> np.ndarray:
    """Combine per-cycle member verdicts: all_of = AND, any_of = OR."""
    if mode not in ("all_of", "any_of"):
        raise ValueError(f"mode must be 'all_of' or 'any_of', got {mode!r}")
    stacked = np.asarray(members, dtype=bool)
    if stacked.ndim != 2 or stacked.shape[0] < 1:
        raise ValueError("need at least one member verdict sequence")
    return stacked.all(axis=0) if mode == "all_of" else stacked.any(axis=0)
