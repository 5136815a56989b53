"""Planning cost terms and their weighted combinations.

Seven terms enter the full cost: time-to-collision, momentum-shaped distance
to agents, distance to goal, distance to reference, speed deviation, comfort,
and reversing. The proxy cost keeps only the two interaction terms.

Known quirk, kept verbatim: the momentum-shaped distance couples squared
position and velocity differences multiplicatively, so an agent whose
velocity matches the ego's yields a term of 1.0 at any distance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import VEHICLE, AgentState, normalize_heading

_INF = float("inf")

TERM_NAMES = ("ttc", "d2a", "d2g", "d2r", "velocity", "comfort", "reverse")


@dataclass(frozen=True)
class CostParams:
    """Cost scaling factors and weights.

    ``eps_vr``/``eps_r``/``eps_limit`` depend on the scenario's reference
    trajectory; use :meth:`with_reference` to derive them. The remaining
    fields are fixed constants.
    """

    eps_ttc: float = 3.0
    eps_rbf_vehicle: float = 0.5
    eps_rbf_pedestrian: float = 1.0
    # Hinge thresholds: (a_par, a_perp, jerk_par, jerk_norm, yaw_rate, yaw_accel)
    comfort_eps: tuple[float, float, float, float, float, float] = (
        2.4,
        4.89,
        4.13,
        8.37,
        0.95,
        1.93,
    )
    weights: tuple[float, ...] = (1.0, 10.0, 1.0, 1.0, 1.0, 0.5, 10.0)
    radius_vehicle: float = 1.0
    radius_pedestrian: float = 0.2
    eps_vr: float = 10.0
    eps_r: float = 1.0
    eps_limit: float = 20.0

    def __post_init__(self) -> None:
        for name in ("eps_ttc", "eps_rbf_vehicle", "eps_rbf_pedestrian", "eps_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if any(e <= 0 for e in self.comfort_eps):
            raise ValueError("comfort thresholds must be positive")
        if len(self.weights) != 7:
            raise ValueError("need exactly seven weights")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")

    def with_reference(self, goal_distance: float, reference_time_s: float) -> "CostParams":
        """Derive the reference-velocity parameters for one scenario."""
        if reference_time_s <= 0:
            raise ValueError("reference time must be positive")
        eps_vr = 0.8 * goal_distance / reference_time_s
        return replace(
            self,
            eps_vr=eps_vr,
            eps_r=max(0.1 * eps_vr, 1.0),
            eps_limit=max(30.0 - eps_vr, 10.0),
        )

    def rbf_for(self, agent_class: str) -> float:
        return self.eps_rbf_vehicle if agent_class == VEHICLE else self.eps_rbf_pedestrian

    def radius_for(self, agent_class: str) -> float:
        return self.radius_vehicle if agent_class == VEHICLE else self.radius_pedestrian

    @classmethod
    def from_file(cls, path: str) -> "CostParams":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        for key in ("comfort_eps", "weights"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


@dataclass(frozen=True)
class CostBreakdown:
    """Per-term cost values plus their weighted total."""

    ttc: float
    d2a: float
    d2g: float
    d2r: float
    velocity: float
    comfort: float
    reverse: float
    total: float

    def terms(self) -> tuple[float, ...]:
        return (self.ttc, self.d2a, self.d2g, self.d2r, self.velocity, self.comfort, self.reverse)


@dataclass(frozen=True)
class EgoDerivatives:
    """Backward finite-difference derivative estimates for one ego state."""

    accel_par: float = 0.0
    accel_perp: float = 0.0
    jerk_par: float = 0.0
    jerk_norm: float = 0.0
    yaw_rate: float = 0.0
    yaw_accel: float = 0.0


# ---------------------------------------------------------------------------
# Array kernels shared by the scalar API and the planner's vectorized scoring.
# ---------------------------------------------------------------------------


def ttc_components(
    dx: np.ndarray, dy: np.ndarray, dvx: np.ndarray, dvy: np.ndarray, radius_sum
) -> np.ndarray:
    """Time until circle overlap under constant relative velocity, from
    relative position/velocity components. Returns +inf where the circles
    never meet and 0 where they already overlap or touch."""
    a = dvx * dvx + dvy * dvy
    b = 2.0 * (dx * dvx + dy * dvy)
    c = dx * dx + dy * dy - np.square(radius_sum)

    disc = b * b - 4.0 * a * c
    safe_a = np.where(a > 0.0, a, 1.0)
    root = (-b - np.sqrt(np.maximum(disc, 0.0))) / (2.0 * safe_a)

    out = np.where((a > 0.0) & (disc >= 0.0) & (root >= 0.0), root, _INF)
    return np.where(c <= 0.0, 0.0, out)


def ttc_array(dpos: np.ndarray, dvel: np.ndarray, radius_sum) -> np.ndarray:
    """Vector form of :func:`ttc_components` over (..., 2) arrays."""
    dpos = np.asarray(dpos, dtype=float)
    dvel = np.asarray(dvel, dtype=float)
    return ttc_components(dpos[..., 0], dpos[..., 1], dvel[..., 0], dvel[..., 1], radius_sum)


def d2a_array(
    dx_par: np.ndarray,
    dx_perp: np.ndarray,
    dv_par: np.ndarray,
    dv_perp: np.ndarray,
    eps_rbf,
) -> np.ndarray:
    """Momentum-shaped proximity term, elementwise over broadcastable inputs."""
    exponent = np.square(dx_par) * np.square(dv_par) + np.square(dx_perp) * np.square(dv_perp)
    return np.exp(-0.5 * np.asarray(eps_rbf) * exponent)


def interaction_components(
    dx: np.ndarray,
    dy: np.ndarray,
    dvx: np.ndarray,
    dvy: np.ndarray,
    cos_h: np.ndarray,
    sin_h: np.ndarray,
    radius_sum,
    eps_rbf,
    eps_ttc: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair ttc and d2a cost terms from relative components.

    ``cos_h``/``sin_h`` are the ego heading direction (the decomposition
    frame). All inputs broadcast elementwise. Returns (ttc_term, d2a_term),
    each in [0, 1].
    """
    ttc = ttc_components(dx, dy, dvx, dvy, radius_sum)
    ttc_term = 1.0 - np.minimum(ttc / eps_ttc, 1.0)

    dx_par = dx * cos_h + dy * sin_h
    dx_perp = -dx * sin_h + dy * cos_h
    dv_par = dvx * cos_h + dvy * sin_h
    dv_perp = -dvx * sin_h + dvy * cos_h
    d2a_term = d2a_array(dx_par, dx_perp, dv_par, dv_perp, eps_rbf)

    return ttc_term, d2a_term


def interaction_terms(
    ego_pos: np.ndarray,
    ego_heading: np.ndarray,
    ego_vel: np.ndarray,
    agent_pos: np.ndarray,
    agent_vel: np.ndarray,
    radius_sum,
    eps_rbf,
    eps_ttc: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair ttc and d2a cost terms for broadcastable ego/agent arrays.

    Position/velocity arrays have shape (..., 2) and broadcast against each
    other; ``ego_heading`` broadcasts against the leading dims. Returns
    (ttc_term, d2a_term), each in [0, 1].
    """
    ego_pos = np.asarray(ego_pos, dtype=float)
    ego_vel = np.asarray(ego_vel, dtype=float)
    agent_pos = np.asarray(agent_pos, dtype=float)
    agent_vel = np.asarray(agent_vel, dtype=float)
    return interaction_components(
        agent_pos[..., 0] - ego_pos[..., 0],
        agent_pos[..., 1] - ego_pos[..., 1],
        agent_vel[..., 0] - ego_vel[..., 0],
        agent_vel[..., 1] - ego_vel[..., 1],
        np.cos(ego_heading),
        np.sin(ego_heading),
        radius_sum,
        eps_rbf,
        eps_ttc,
    )


# ---------------------------------------------------------------------------
# Scalar cost API.
# ---------------------------------------------------------------------------


def time_to_collision(
    ego: AgentState,
    agent: AgentState,
    radii: tuple[float, float] | None = None,
) -> float:
    """Smallest t >= 0 at which the two circles touch under constant velocity;
    +inf if they never do, 0 if already overlapping."""
    r_ego, r_agent = radii if radii is not None else (ego.radius, agent.radius)
    return float(
        ttc_array(
            agent.position - ego.position,
            agent.velocity - ego.velocity,
            r_ego + r_agent,
        )
    )


def cost_ttc(ego: AgentState, agents: Sequence[AgentState], params: CostParams) -> float:
    """Most imminent collision over agents, scaled to [0, 1]; 0 if none."""
    worst = 0.0
    for agent in agents:
        radii = (params.radius_for(ego.agent_class), params.radius_for(agent.agent_class))
        ttc = time_to_collision(ego, agent, radii)
        worst = max(worst, 1.0 - min(ttc / params.eps_ttc, 1.0))
    return worst


def cost_d2a(ego: AgentState, agents: Sequence[AgentState], params: CostParams) -> float:
    """Largest momentum-shaped proximity term over agents; 0 if none."""
    worst = 0.0
    cos_h = math.cos(ego.heading)
    sin_h = math.sin(ego.heading)
    ex, ey = ego.x, ego.y
    evx, evy = ego.speed * cos_h, ego.speed * sin_h
    for agent in agents:
        dx, dy = agent.x - ex, agent.y - ey
        avx, avy = agent.speed * math.cos(agent.heading), agent.speed * math.sin(agent.heading)
        dvx, dvy = avx - evx, avy - evy
        dx_par = dx * cos_h + dy * sin_h
        dx_perp = -dx * sin_h + dy * cos_h
        dv_par = dvx * cos_h + dvy * sin_h
        dv_perp = -dvx * sin_h + dvy * cos_h
        exponent = dx_par**2 * dv_par**2 + dx_perp**2 * dv_perp**2
        worst = max(worst, math.exp(-0.5 * params.rbf_for(agent.agent_class) * exponent))
    return worst


@dataclass(frozen=True)
class CostContext:
    """Scenario-fixed quantities the ego-only terms need."""

    goal: tuple[float, float]
    ego_start: tuple[float, float]
    ref_positions: np.ndarray  # (R, 2)
    ref_headings: np.ndarray  # (R,)

    def __post_init__(self) -> None:
        ref_positions = np.asarray(self.ref_positions, dtype=float)
        ref_headings = np.asarray(self.ref_headings, dtype=float)
        if ref_positions.ndim != 2 or ref_positions.shape[1] != 2 or len(ref_positions) == 0:
            raise ValueError("reference positions must have shape (R, 2), R >= 1")
        if ref_headings.shape != (len(ref_positions),):
            raise ValueError("need one reference heading per reference point")
        ref_positions.setflags(write=False)
        ref_headings.setflags(write=False)
        object.__setattr__(self, "ref_positions", ref_positions)
        object.__setattr__(self, "ref_headings", ref_headings)

    @property
    def goal_distance(self) -> float:
        return math.hypot(
            self.goal[0] - self.ego_start[0], self.goal[1] - self.ego_start[1]
        )


def cost_d2g(ego: AgentState, ctx: CostContext) -> float:
    """Remaining goal distance, normalized by the starting goal distance."""
    denom = ctx.goal_distance
    if denom == 0.0:
        return 0.0
    return math.hypot(ctx.goal[0] - ego.x, ctx.goal[1] - ego.y) / denom


def cost_d2r(ego: AgentState, ctx: CostContext) -> float:
    """Quartic position and quadratic heading deviation from the nearest
    reference point. The heading deviation is wrapped to (-pi, pi]."""
    deltas = ctx.ref_positions - np.array([ego.x, ego.y])
    dist_sq = np.einsum("ij,ij->i", deltas, deltas)
    idx = int(np.argmin(dist_sq))
    d = math.sqrt(float(dist_sq[idx]))
    dtheta = normalize_heading(float(ctx.ref_headings[idx]) - ego.heading)
    return 0.25 * d**4 + 0.5 * dtheta**2


def cost_velocity(ego: AgentState, params: CostParams) -> float:
    """Squared hinge on the deviation of speed from the reference speed."""
    excess = max(abs(ego.speed - params.eps_vr) - params.eps_r, 0.0)
    return excess**2 / params.eps_limit**2


def cost_comfort(derivs: EgoDerivatives, params: CostParams) -> float:
    """Mean of six hinge terms over derivative magnitudes."""
    e = params.comfort_eps
    ratios = (
        abs(derivs.accel_par) / e[0],
        abs(derivs.accel_perp) / e[1],
        abs(derivs.jerk_par) / e[2],
        derivs.jerk_norm / e[3],
        abs(derivs.yaw_rate) / e[4],
        abs(derivs.yaw_accel) / e[5],
    )
    return sum(max(r - 1.0, 0.0) for r in ratios) / 6.0


def cost_reverse(ego: AgentState) -> float:
    """Indicator of negative longitudinal speed."""
    return 1.0 if ego.speed < 0.0 else 0.0


def total_cost(terms: Sequence[float], weights: Sequence[float]) -> float:
    if len(terms) != 7 or len(weights) != 7:
        raise ValueError("need seven terms and seven weights")
    return float(sum(w * c for w, c in zip(weights, terms)))


def proxy_cost(ego: AgentState, agents: Sequence[AgentState], params: CostParams) -> float:
    """Interaction-only cost: w1 * ttc + w2 * d2a."""
    return params.weights[0] * cost_ttc(ego, agents, params) + params.weights[1] * cost_d2a(
        ego, agents, params
    )


def ego_derivatives(states: Sequence[AgentState], dt: float) -> list[EgoDerivatives]:
    """Backward finite-difference derivatives along an ego state sequence.

    Entries without enough history (the first one or two states) fall back
    to zero, so early comfort terms are conservative.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = len(states)
    vels = [s.velocity for s in states]
    out: list[EgoDerivatives] = []
    prev_acc: np.ndarray | None = None
    prev_yaw_rate: float | None = None
    for i in range(n):
        if i == 0:
            out.append(EgoDerivatives())
            prev_acc = None
            prev_yaw_rate = None
            continue
        acc = (vels[i] - vels[i - 1]) / dt
        yaw_rate = normalize_heading(states[i].heading - states[i - 1].heading) / dt
        if prev_acc is None:
            jerk = np.zeros(2)
            yaw_accel = 0.0
        else:
            jerk = (acc - prev_acc) / dt
            yaw_accel = (yaw_rate - prev_yaw_rate) / dt
        cos_h = math.cos(states[i].heading)
        sin_h = math.sin(states[i].heading)
        out.append(
            EgoDerivatives(
                accel_par=float(acc[0] * cos_h + acc[1] * sin_h),
                accel_perp=float(-acc[0] * sin_h + acc[1] * cos_h),
                jerk_par=float(jerk[0] * cos_h + jerk[1] * sin_h),
                jerk_norm=float(math.hypot(jerk[0], jerk[1])),
                yaw_rate=yaw_rate,
                yaw_accel=yaw_accel,
            )
        )
        prev_acc = acc
        prev_yaw_rate = yaw_rate
    return out


def ego_only_costs(
    states: Sequence[AgentState],
    ctx: CostContext,
    params: CostParams,
    dt: float,
) -> np.ndarray:
    """Weighted sum of the five ego-only terms at each state of a trace."""
    derivs = ego_derivatives(states, dt)
    w = params.weights
    out = np.empty(len(states))
    for i, (s, d) in enumerate(zip(states, derivs)):
        out[i] = (
            w[2] * cost_d2g(s, ctx)
            + w[3] * cost_d2r(s, ctx)
            + w[4] * cost_velocity(s, params)
            + w[5] * cost_comfort(d, params)
            + w[6] * cost_reverse(s)
        )
    return out


def step_cost_breakdown(
    ego: AgentState,
    derivs: EgoDerivatives,
    agents: Sequence[AgentState],
    ctx: CostContext,
    params: CostParams,
) -> CostBreakdown:
    """All seven terms for one (ego state, agent set) snapshot."""
    terms = (
        cost_ttc(ego, agents, params),
        cost_d2a(ego, agents, params),
        cost_d2g(ego, ctx),
        cost_d2r(ego, ctx),
        cost_velocity(ego, params),
        cost_comfort(derivs, params),
        cost_reverse(ego),
    )
    return CostBreakdown(*terms, total=total_cost(terms, params.weights))
