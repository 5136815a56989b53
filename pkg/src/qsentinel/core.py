"""Shared domain types: agent states, controls, trajectories, prediction sets.

All angles are radians, distances meters, times seconds. Headings live in
(-pi, pi]. Values are immutable after construction and safe to share across
parallel workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VEHICLE = "vehicle"
PEDESTRIAN = "pedestrian"

# Collision circles: vehicles 1 m, pedestrians 0.2 m.
AGENT_RADII = {VEHICLE: 1.0, PEDESTRIAN: 0.2}

# Planning defaults: 0.5 s control steps, 2 s horizon (4 control inputs).
DT_DEFAULT = 0.5
HORIZON_T = 4

TWO_PI = 2.0 * math.pi


def normalize_heading(theta: float) -> float:
    """Reduce an angle to (-pi, pi], congruent to ``theta`` mod 2*pi."""
    if not math.isfinite(theta):
        raise ValueError(f"heading must be finite, got {theta!r}")
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    elif wrapped > math.pi:
        wrapped -= TWO_PI
    return wrapped


@dataclass(frozen=True)
class AgentState:
    """Planar kinematic state of one agent.

    ``speed`` may be negative for the ego (reversing); scripted non-ego
    agents are kept at speed >= 0 by the rollout helpers.
    """

    x: float
    y: float
    heading: float
    speed: float
    agent_class: str = VEHICLE

    def __post_init__(self) -> None:
        for name in ("x", "y", "heading", "speed"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.agent_class not in AGENT_RADII:
            raise ValueError(f"unknown agent class {self.agent_class!r}")
        object.__setattr__(self, "heading", normalize_heading(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array(
            [self.speed * math.cos(self.heading), self.speed * math.sin(self.heading)]
        )

    @property
    def radius(self) -> float:
        return AGENT_RADII[self.agent_class]


@dataclass(frozen=True)
class ControlInput:
    """One control step: longitudinal acceleration and turn rate."""

    acceleration: float
    turn_rate: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.acceleration) and math.isfinite(self.turn_rate)):
            raise ValueError("control inputs must be finite")


def unicycle_step(state: AgentState, u: ControlInput, dt: float) -> AgentState:
    """Euler step of the unicycle model.

    Position advances with the pre-update speed along the pre-update heading;
    heading and speed are then updated and the heading renormalized.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    return AgentState(
        x=state.x + state.speed * math.cos(state.heading) * dt,
        y=state.y + state.speed * math.sin(state.heading) * dt,
        heading=normalize_heading(state.heading + u.turn_rate * dt),
        speed=state.speed + u.acceleration * dt,
        agent_class=state.agent_class,
    )


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed sequence of states with optional per-step controls."""

    start_time: int
    dt: float
    states: tuple[AgentState, ...]
    controls: tuple[ControlInput, ...] | None = None

    def __post_init__(self) -> None:
        if not self.states:
            raise ValueError("trajectory needs at least one state")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "states", tuple(self.states))
        if self.controls is not None:
            object.__setattr__(self, "controls", tuple(self.controls))
            if len(self.controls) != len(self.states) - 1:
                raise ValueError("controls must be one shorter than states")

    def __len__(self) -> int:
        return len(self.states)

    def positions(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.states])


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """2-D Gaussian mixture over positions at one future step."""

    means: np.ndarray  # (K, 2)
    covariances: np.ndarray  # (K, 2, 2)
    weights: np.ndarray  # (K,)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GaussianMixture):
            return NotImplemented
        return (
            np.array_equal(self.means, other.means)
            and np.array_equal(self.covariances, other.covariances)
            and np.array_equal(self.weights, other.weights)
        )

    def __post_init__(self) -> None:
        means = _readonly(self.means)
        covs = _readonly(self.covariances)
        weights = _readonly(self.weights)
        if means.ndim != 2 or means.shape[1] != 2:
            raise ValueError("means must have shape (K, 2)")
        if covs.shape != (means.shape[0], 2, 2):
            raise ValueError("covariances must have shape (K, 2, 2)")
        if weights.shape != (means.shape[0],):
            raise ValueError("weights must have shape (K,)")
        if means.shape[0] < 1:
            raise ValueError("mixture needs at least one mode")
        if not math.isclose(float(weights.sum()), 1.0, abs_tol=1e-9):
            raise ValueError("mixture weights must sum to 1")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "weights", weights)

    @property
    def n_modes(self) -> int:
        return int(self.means.shape[0])


@dataclass(frozen=True)
class PredictionSet:
    """M i.i.d. sampled future trajectories for one non-ego agent.

    ``mixture_params`` holds the per-step position mixture fitted from the
    same samples, used by the likelihood baseline.
    """

    agent_id: str
    horizon_T: int
    samples: tuple[Trajectory, ...]
    mixture_params: tuple[GaussianMixture, ...]

    def __post_init__(self) -> None:
        if len(self.samples) < 1:
            raise ValueError("need at least one sample")
        if self.horizon_T < 1:
            raise ValueError("horizon must be at least one step")
        dt = self.samples[0].dt
        for traj in self.samples:
            if len(traj.states) != self.horizon_T + 1:
                raise ValueError("all samples must cover the horizon")
            if traj.dt != dt:
                raise ValueError("all samples must share dt")
        if len(self.mixture_params) != self.horizon_T:
            raise ValueError("need one mixture per horizon step")
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "mixture_params", tuple(self.mixture_params))

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def positions(self) -> np.ndarray:
        """Sampled positions, shape (M, T+1, 2) including the current state."""
        return np.array([t.positions() for t in self.samples])

    def velocities(self) -> np.ndarray:
        """Sampled velocity vectors, shape (M, T+1, 2)."""
        out = np.empty((len(self.samples), self.horizon_T + 1, 2))
        for m, traj in enumerate(self.samples):
            for t, s in enumerate(traj.states):
                out[m, t, 0] = s.speed * math.cos(s.heading)
                out[m, t, 1] = s.speed * math.sin(s.heading)
        return out

    @property
    def agent_class(self) -> str:
        return self.samples[0].states[0].agent_class


@dataclass(frozen=True)
class DetectorConfig:
    """Sample count M, rank offset n, and anomaly quantile p."""

    M: int
    n: int
    p: float

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if not 0 <= self.n <= self.M - 1:
            raise ValueError(f"n must lie in [0, M-1], got n={self.n}, M={self.M}")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")


@dataclass(frozen=True)
class DetectionEvent:
    """A triggered detection: which agent, when, and at what cost."""

    wall_step: int
    agent_id: str
    observed_cost: float
    rank_threshold_cost: float
    detector_name: str = "qad"


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for (seed, context key); independent streams
    for distinct keys."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))
