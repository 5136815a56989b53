"""Motion-primitive tree planner.

Enumerates every control sequence over the horizon (first action pinned to
the previously executed control), rolls each out with the unicycle model,
scores it against the sampled predictions of all agents, and picks the
argmin. Scoring walks the control tree depth by depth so shared prefixes are
costed once; per-sample costs are accumulated along paths, which keeps
non-linear sample aggregators (CVaR, max) exact.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AgentState, ControlInput, PredictionSet, Trajectory, normalize_heading
from .costs import CostContext, CostParams, interaction_terms, ttc_array
from .scenario import StaticObstacle

ACCELERATIONS = (-2.0, 0.0, 1.0)
TURN_RATES = (-0.3, -0.1, 0.0, 0.1, 0.3)


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 4
    dt: float = 0.5
    accelerations: tuple[float, ...] = ACCELERATIONS
    turn_rates: tuple[float, ...] = TURN_RATES
    aggregator: str = "mean"  # mean | cvar | max over the M per-sample sums
    cvar_alpha: float = 0.2
    discount: float = 1.0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.horizon < 2:
            raise ValueError("planning horizon must be at least 2 steps")
        if self.aggregator not in ("mean", "cvar", "max"):
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if not 0.0 < self.cvar_alpha <= 1.0:
            raise ValueError("cvar_alpha must lie in (0, 1]")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def branching(self) -> int:
        return len(self.accelerations) * len(self.turn_rates)

    def control_set(self) -> np.ndarray:
        """The per-step discrete controls, acceleration-major, shape (B, 2)."""
        return np.array(
            [[a, w] for a in self.accelerations for w in self.turn_rates], dtype=float
        )


@dataclass(frozen=True)
class MotionPrimitive:
    """One candidate plan: controls, rolled-out trajectory, predicted cost."""

    controls: tuple[ControlInput, ...]
    trajectory: Trajectory
    cost: float
    index: int


@dataclass(frozen=True)
class PlanResult:
    """Selected primitive plus the per-sample costs along its path.

    ``per_agent_cost_samples`` has shape (T, A, M): the predicted cost of the
    chosen plan against each agent alone, per prediction sample. These are
    exactly the cost samples the anomaly detector consumes (sample reuse).
    ``joint_cost_samples`` has shape (T, M); ``scores`` holds every
    primitive's aggregated cost in enumeration order.
    """

    primitive: MotionPrimitive
    agent_ids: tuple[str, ...]
    per_agent_cost_samples: np.ndarray
    joint_cost_samples: np.ndarray
    ego_only_costs: np.ndarray
    scores: np.ndarray


def enumerate_primitives(
    prev_control: ControlInput,
    horizon: int,
    config: PlannerConfig | None = None,
) -> np.ndarray:
    """All control sequences, shape (B^(T-1), T, 2), lexicographic order.

    Element 0 of every sequence is the previous control; later steps run
    through the acceleration-major control set, earliest step most
    significant.
    """
    cfg = config if config is not None else PlannerConfig(horizon=horizon)
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    controls = cfg.control_set()
    branching = controls.shape[0]
    count = branching ** (horizon - 1)
    out = np.empty((count, horizon, 2))
    out[:, 0, 0] = prev_control.acceleration
    out[:, 0, 1] = prev_control.turn_rate
    for step in range(1, horizon):
        period = branching ** (horizon - 1 - step)
        idx = (np.arange(count) // period) % branching
        out[:, step] = controls[idx]
    return out


@dataclass
class _Level:
    """Node arrays at one tree depth (all aligned on the node axis)."""

    position: np.ndarray  # (N, 2)
    heading: np.ndarray  # (N,)
    speed: np.ndarray  # (N,)
    velocity: np.ndarray  # (N, 2)
    accel: np.ndarray  # (N, 2)
    yaw_rate: np.ndarray  # (N,)

    def repeat(self, k: int) -> "_Level":
        return _Level(
            np.repeat(self.position, k, axis=0),
            np.repeat(self.heading, k),
            np.repeat(self.speed, k),
            np.repeat(self.velocity, k, axis=0),
            np.repeat(self.accel, k, axis=0),
            np.repeat(self.yaw_rate, k),
        )

    def take(self, idx: np.ndarray | list[int]) -> "_Level":
        return _Level(
            self.position[idx],
            self.heading[idx],
            self.speed[idx],
            self.velocity[idx],
            self.accel[idx],
            self.yaw_rate[idx],
        )


def _seed_level(ego: AgentState, history: Sequence[AgentState], dt: float) -> _Level:
    if history:
        prev = history[-1]
        accel = (ego.velocity - prev.velocity)[None, :] / dt
        yaw_rate = np.array([normalize_heading(ego.heading - prev.heading) / dt])
    else:
        accel = np.zeros((1, 2))
        yaw_rate = np.zeros(1)
    return _Level(
        position=np.array([[ego.x, ego.y]]),
        heading=np.array([ego.heading]),
        speed=np.array([ego.speed]),
        velocity=ego.velocity[None, :],
        accel=accel,
        yaw_rate=yaw_rate,
    )


def _advance(parent: _Level, step_controls: np.ndarray, dt: float) -> _Level:
    """One Euler step per node; ``step_controls`` aligns with parent nodes."""
    accel_u = step_controls[:, 0]
    turn_u = step_controls[:, 1]
    position = parent.position + parent.velocity * dt
    raw = parent.heading + turn_u * dt
    heading = np.arctan2(np.sin(raw), np.cos(raw))
    speed = parent.speed + accel_u * dt
    velocity = speed[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=-1)
    accel = (velocity - parent.velocity) / dt
    yaw_delta = np.arctan2(np.sin(heading - parent.heading), np.cos(heading - parent.heading))
    return _Level(position, heading, speed, velocity, accel, yaw_delta / dt)


def _ego_only_costs(
    level: _Level, parent: _Level, ctx: CostContext, params: CostParams, dt: float
) -> np.ndarray:
    """Weighted sum of the five ego-only terms per node, shape (N,)."""
    w = params.weights
    n = level.position.shape[0]

    denom = ctx.goal_distance
    if denom > 0.0:
        d2g = np.linalg.norm(np.asarray(ctx.goal) - level.position, axis=1) / denom
    else:
        d2g = np.zeros(n)

    deltas = level.position[:, None, :] - ctx.ref_positions[None, :, :]
    dist_sq = np.einsum("nrj,nrj->nr", deltas, deltas)
    nearest = np.argmin(dist_sq, axis=1)
    dist = np.sqrt(dist_sq[np.arange(n), nearest])
    dtheta = np.arctan2(
        np.sin(ctx.ref_headings[nearest] - level.heading),
        np.cos(ctx.ref_headings[nearest] - level.heading),
    )
    d2r = 0.25 * dist**4 + 0.5 * dtheta**2

    excess = np.maximum(np.abs(level.speed - params.eps_vr) - params.eps_r, 0.0)
    velocity_cost = excess**2 / params.eps_limit**2

    cos_h = np.cos(level.heading)
    sin_h = np.sin(level.heading)
    accel_par = level.accel[:, 0] * cos_h + level.accel[:, 1] * sin_h
    accel_perp = -level.accel[:, 0] * sin_h + level.accel[:, 1] * cos_h
    jerk = (level.accel - parent.accel) / dt
    jerk_par = jerk[:, 0] * cos_h + jerk[:, 1] * sin_h
    jerk_norm = np.hypot(jerk[:, 0], jerk[:, 1])
    yaw_accel = (level.yaw_rate - parent.yaw_rate) / dt
    e = params.comfort_eps
    comfort = (
        np.maximum(np.abs(accel_par) / e[0] - 1.0, 0.0)
        + np.maximum(np.abs(accel_perp) / e[1] - 1.0, 0.0)
        + np.maximum(np.abs(jerk_par) / e[2] - 1.0, 0.0)
        + np.maximum(jerk_norm / e[3] - 1.0, 0.0)
        + np.maximum(np.abs(level.yaw_rate) / e[4] - 1.0, 0.0)
        + np.maximum(np.abs(yaw_accel) / e[5] - 1.0, 0.0)
    ) / 6.0

    reverse = (level.speed < 0.0).astype(float)

    return (
        w[2] * d2g + w[3] * d2r + w[4] * velocity_cost + w[5] * comfort + w[6] * reverse
    )


@dataclass(frozen=True)
class _AgentArrays:
    """Prediction sample states per agent, laid out for broadcasting."""

    ids: tuple[str, ...]
    positions: np.ndarray  # (A, M, T+1, 2)
    velocities: np.ndarray  # (A, M, T+1, 2)
    radius_sum: np.ndarray  # (A,)
    eps_rbf: np.ndarray  # (A,)


def _agent_arrays(
    predictions: Sequence[PredictionSet],
    ego_class: str,
    params: CostParams,
    horizon: int,
) -> _AgentArrays | None:
    if not predictions:
        return None
    counts = {p.n_samples for p in predictions}
    if len(counts) != 1:
        raise ValueError("all prediction sets must share the sample count M")
    for p in predictions:
        if p.horizon_T < horizon:
            raise ValueError(
                f"prediction horizon {p.horizon_T} shorter than planning horizon {horizon}"
            )
    positions = np.stack([p.positions()[:, : horizon + 1] for p in predictions])
    velocities = np.stack([p.velocities()[:, : horizon + 1] for p in predictions])
    ego_radius = params.radius_for(ego_class)
    radius_sum = np.array(
        [ego_radius + params.radius_for(p.agent_class) for p in predictions]
    )
    eps_rbf = np.array([params.rbf_for(p.agent_class) for p in predictions])
    return _AgentArrays(
        ids=tuple(p.agent_id for p in predictions),
        positions=positions,
        velocities=velocities,
        radius_sum=radius_sum,
        eps_rbf=eps_rbf,
    )


def _interaction_costs(
    level: _Level,
    agents: _AgentArrays | None,
    obstacles: Sequence[StaticObstacle],
    tau: int,
    ego_radius: float,
    params: CostParams,
) -> tuple[np.ndarray | None, np.ndarray, np.ndarray]:
    """Per-node interaction costs at one step.

    Returns (per_agent, joint_ttc_term, joint_d2a_term):
    per_agent is (N, A, M) with w1*ttc + w2*d2a per agent alone (None when
    there are no agents); the joint terms are (N, M) maxima over agents, with
    static obstacles folded into the ttc max.
    """
    n = level.position.shape[0]
    w1, w2 = params.weights[0], params.weights[1]

    if agents is not None:
        m = agents.positions.shape[1]
        ttc_term, d2a_term = interaction_terms(
            ego_pos=level.position[:, None, None, :],
            ego_heading=level.heading[:, None, None],
            ego_vel=level.velocity[:, None, None, :],
            agent_pos=agents.positions[None, :, :, tau],
            agent_vel=agents.velocities[None, :, :, tau],
            radius_sum=agents.radius_sum[None, :, None],
            eps_rbf=agents.eps_rbf[None, :, None],
            eps_ttc=params.eps_ttc,
        )
        per_agent = w1 * ttc_term + w2 * d2a_term
        joint_ttc = ttc_term.max(axis=1)
        joint_d2a = d2a_term.max(axis=1)
    else:
        m = 1
        per_agent = None
        joint_ttc = np.zeros((n, m))
        joint_d2a = np.zeros((n, m))

    if obstacles:
        obs_pos = np.array([[o.x, o.y] for o in obstacles])
        obs_radius = np.array([ego_radius + o.radius for o in obstacles])
        dpos = obs_pos[None, :, :] - level.position[:, None, :]
        dvel = np.broadcast_to(-level.velocity[:, None, :], dpos.shape)
        ttc = ttc_array(dpos, dvel, obs_radius[None, :])
        obs_term = (1.0 - np.minimum(ttc / params.eps_ttc, 1.0)).max(axis=1)
        joint_ttc = np.maximum(joint_ttc, obs_term[:, None])

    return per_agent, joint_ttc, joint_d2a


def _score_tree(
    controls: np.ndarray,
    seed_level: _Level,
    agents: _AgentArrays | None,
    obstacles: Sequence[StaticObstacle],
    ctx: CostContext,
    params: CostParams,
    config: PlannerConfig,
    ego_radius: float,
) -> np.ndarray:
    """Per-sample horizon sums for every primitive, shape (P, M).

    ``controls`` may be any contiguous block of whole subtrees (as produced
    by chunking the enumeration on the first free step); the fan-out at each
    depth is derived from the block itself.
    """
    horizon = controls.shape[1]
    branching = config.branching
    dt = config.dt
    w1, w2 = params.weights[0], params.weights[1]

    level = seed_level
    cumulative: np.ndarray | None = None  # (nodes, M)
    for tau in range(1, horizon + 1):
        period = branching ** (horizon - tau)
        step_controls = controls[::period, tau - 1] if period > 1 else controls[:, tau - 1]
        fan = step_controls.shape[0] // level.position.shape[0]
        if fan == 1:
            parent = level
        else:
            parent = level.repeat(fan)
            if cumulative is not None:
                cumulative = np.repeat(cumulative, fan, axis=0)
        level = _advance(parent, step_controls, dt)

        per_agent, joint_ttc, joint_d2a = _interaction_costs(
            level, agents, obstacles, tau, ego_radius, params
        )
        ego_cost = _ego_only_costs(level, parent, ctx, params, dt)
        step_cost = w1 * joint_ttc + w2 * joint_d2a + ego_cost[:, None]
        if config.discount != 1.0:
            step_cost = step_cost * config.discount ** (tau - 1)
        cumulative = step_cost if cumulative is None else cumulative + step_cost

    return cumulative


def _aggregate(per_sample_sums: np.ndarray, config: PlannerConfig) -> np.ndarray:
    """Collapse (P, M) per-sample sums to one score per primitive."""
    if config.aggregator == "mean":
        return per_sample_sums.mean(axis=1)
    if config.aggregator == "max":
        return per_sample_sums.max(axis=1)
    m = per_sample_sums.shape[1]
    keep = max(1, int(np.ceil(config.cvar_alpha * m)))
    tail = np.partition(per_sample_sums, m - keep, axis=1)[:, m - keep :]
    return tail.mean(axis=1)


def _walk_path(
    controls: np.ndarray,
    seed_level: _Level,
    agents: _AgentArrays | None,
    obstacles: Sequence[StaticObstacle],
    ctx: CostContext,
    params: CostParams,
    config: PlannerConfig,
    ego_radius: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[_Level]]:
    """Cost arrays along a single control sequence.

    Returns undiscounted per-step arrays (T, A, M) and (T, M), the
    per-sample horizon sum (M,) accumulated exactly as the tree does
    (discount included), and the node states along the path.
    """
    horizon = controls.shape[0]
    dt = config.dt
    w1, w2 = params.weights[0], params.weights[1]
    n_agents = len(agents.ids) if agents is not None else 0
    m = agents.positions.shape[1] if agents is not None else 1

    per_agent_path = np.zeros((horizon, n_agents, m))
    joint_path = np.zeros((horizon, m))
    ego_only = np.zeros(horizon)
    cumulative: np.ndarray | None = None
    levels = [seed_level]
    level = seed_level
    for tau in range(1, horizon + 1):
        parent = level
        level = _advance(parent, controls[tau - 1 : tau], dt)
        levels.append(level)
        per_agent, joint_ttc, joint_d2a = _interaction_costs(
            level, agents, obstacles, tau, ego_radius, params
        )
        ego_cost = _ego_only_costs(level, parent, ctx, params, dt)
        ego_only[tau - 1] = ego_cost[0]
        if per_agent is not None:
            per_agent_path[tau - 1] = per_agent[0] + ego_cost[0]
        step_cost = w1 * joint_ttc + w2 * joint_d2a + ego_cost[:, None]
        joint_path[tau - 1] = step_cost[0]
        if config.discount != 1.0:
            step_cost = step_cost * config.discount ** (tau - 1)
        cumulative = step_cost if cumulative is None else cumulative + step_cost
    return per_agent_path, joint_path, ego_only, cumulative[0], levels


def score_primitive(
    controls: Sequence[ControlInput] | np.ndarray,
    ego: AgentState,
    predictions: Sequence[PredictionSet],
    ctx: CostContext,
    params: CostParams,
    config: PlannerConfig | None = None,
    obstacles: Sequence[StaticObstacle] = (),
    history: Sequence[AgentState] = (),
) -> float:
    """Aggregated predicted cost of one control sequence."""
    arr = _controls_to_array(controls)
    cfg = config if config is not None else PlannerConfig(horizon=arr.shape[0])
    if arr.shape[0] != cfg.horizon:
        raise ValueError("control sequence length must match the planning horizon")
    agents = _agent_arrays(predictions, ego.agent_class, params, cfg.horizon)
    seed = _seed_level(ego, history, cfg.dt)
    _, _, _, cum, _ = _walk_path(
        arr, seed, agents, obstacles, ctx, params, cfg, params.radius_for(ego.agent_class)
    )
    return float(_aggregate(cum[None, :], cfg)[0])


def _controls_to_array(controls: Sequence[ControlInput] | np.ndarray) -> np.ndarray:
    if isinstance(controls, np.ndarray):
        return np.asarray(controls, dtype=float)
    return np.array([[c.acceleration, c.turn_rate] for c in controls], dtype=float)


def plan(
    ego: AgentState,
    prev_control: ControlInput,
    predictions: Sequence[PredictionSet],
    ctx: CostContext,
    params: CostParams,
    config: PlannerConfig | None = None,
    obstacles: Sequence[StaticObstacle] = (),
    history: Sequence[AgentState] = (),
) -> PlanResult:
    """Pick the minimum-predicted-cost primitive.

    Ties break toward the lexicographically first control sequence. With
    ``config.workers > 1`` the top-level branches are scored concurrently
    and merged in enumeration order, which leaves scores byte-identical.
    """
    cfg = config if config is not None else PlannerConfig()
    controls = enumerate_primitives(prev_control, cfg.horizon, cfg)
    agents = _agent_arrays(predictions, ego.agent_class, params, cfg.horizon)
    seed = _seed_level(ego, history, cfg.dt)
    ego_radius = params.radius_for(ego.agent_class)

    if cfg.workers <= 1:
        sums = _score_tree(controls, seed, agents, obstacles, ctx, params, cfg, ego_radius)
    else:
        branching = cfg.branching
        chunk = controls.shape[0] // branching
        groups = np.array_split(np.arange(branching), min(cfg.workers, branching))

        def run(group: np.ndarray) -> np.ndarray:
            lo, hi = group[0] * chunk, (group[-1] + 1) * chunk
            return _score_tree(
                controls[lo:hi], seed, agents, obstacles, ctx, params, cfg, ego_radius
            )

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run, groups))
        sums = np.concatenate(parts, axis=0)

    scores = _aggregate(sums, cfg)
    best = int(np.argmin(scores))

    per_agent_path, joint_path, ego_only, _, levels = _walk_path(
        controls[best], seed, agents, obstacles, ctx, params, cfg, ego_radius
    )
    states = tuple(
        AgentState(
            x=float(lv.position[0, 0]),
            y=float(lv.position[0, 1]),
            heading=float(lv.heading[0]),
            speed=float(lv.speed[0]),
            agent_class=ego.agent_class,
        )
        for lv in levels
    )
    control_tuple = tuple(
        ControlInput(float(a), float(wr)) for a, wr in controls[best]
    )
    primitive = MotionPrimitive(
        controls=control_tuple,
        trajectory=Trajectory(start_time=0, dt=cfg.dt, states=states, controls=control_tuple),
        cost=float(scores[best]),
        index=best,
    )
    return PlanResult(
        primitive=primitive,
        agent_ids=agents.ids if agents is not None else (),
        per_agent_cost_samples=per_agent_path,
        joint_cost_samples=joint_path,
        ego_only_costs=ego_only,
        scores=scores,
    )
