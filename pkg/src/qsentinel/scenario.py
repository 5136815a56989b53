"""Scripted scene schema and its JSON serialization.

A scenario fixes the ego start, goal, reference trajectory, scripted non-ego
agents (each with a prediction mode library and an executed mode schedule),
optional static obstacles, anomaly injections, and a seed that determines
every stochastic draw. See docs/scenario_schema.md for the field-by-field
format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .core import AgentState, ControlInput, Trajectory, normalize_heading
from .predictor import ManeuverMode, MODE_LABELS, _NOMINAL_CONTROLS

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class StaticObstacle:
    x: float
    y: float
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class AnomalyInjection:
    """Swap an agent's executed mode from ``start_step`` onward.

    The predictor keeps sampling from the agent's original mode library;
    the swap is what makes its predictions wrong. ``task_relevant_flag``
    stays None until the labeling oracle fills it in.
    """

    agent_id: str
    start_step: int
    injected_mode: str
    task_relevant_flag: bool | None = None

    def __post_init__(self) -> None:
        if self.injected_mode not in MODE_LABELS:
            raise ValueError(f"unknown injected mode {self.injected_mode!r}")
        if self.start_step < 0:
            raise ValueError("start_step must be nonnegative")


@dataclass(frozen=True)
class ScriptedAgent:
    """A non-ego agent: initial state, prediction modes, executed schedule."""

    agent_id: str
    init: AgentState
    modes: tuple[ManeuverMode, ...]
    schedule: tuple[tuple[int, str], ...] = ((0, "constant_velocity"),)
    exec_noise: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not self.modes:
            raise ValueError("agent needs at least one prediction mode")
        object.__setattr__(self, "modes", tuple(self.modes))
        schedule = tuple((int(s), str(label)) for s, label in self.schedule)
        if not schedule or schedule[0][0] != 0:
            raise ValueError("schedule must start at step 0")
        if any(b[0] <= a[0] for a, b in zip(schedule, schedule[1:])):
            raise ValueError("schedule steps must be strictly increasing")
        for _, label in schedule:
            if label not in MODE_LABELS:
                raise ValueError(f"unknown scheduled mode {label!r}")
        object.__setattr__(self, "schedule", schedule)
        if len(self.exec_noise) != 2 or any(s < 0 for s in self.exec_noise):
            raise ValueError("exec_noise must be two nonnegative stds")
        object.__setattr__(self, "exec_noise", (float(self.exec_noise[0]), float(self.exec_noise[1])))

    def scheduled_mode(self, step: int) -> str:
        label = self.schedule[0][1]
        for start, entry in self.schedule:
            if start <= step:
                label = entry
            else:
                break
        return label

    def nominal_control(self, label: str) -> ControlInput:
        for mode in self.modes:
            if mode.label == label:
                return mode.control
        accel, turn = _NOMINAL_CONTROLS[label]
        return ControlInput(accel, turn)


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    scene_type: str
    duration: int
    dt: float
    ego_init: AgentState
    goal: tuple[float, float]
    reference: Trajectory
    agents: tuple[ScriptedAgent, ...] = ()
    static_obstacles: tuple[StaticObstacle, ...] = ()
    injections: tuple[AnomalyInjection, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.duration < 1:
            raise ValueError("duration must be at least one step")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.reference.states) < self.duration + 1:
            raise ValueError("reference trajectory must cover the duration")
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "static_obstacles", tuple(self.static_obstacles))
        object.__setattr__(self, "injections", tuple(self.injections))
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")
        by_id = {a.agent_id: a for a in self.agents}
        for inj in self.injections:
            if inj.agent_id not in by_id:
                raise ValueError(f"injection targets unknown agent {inj.agent_id!r}")
            if not 0 <= inj.start_step < self.duration:
                raise ValueError("injection start_step must fall within the duration")
            scripted = by_id[inj.agent_id].scheduled_mode(inj.start_step)
            if inj.injected_mode == scripted:
                raise ValueError(
                    "injected mode must differ from the scripted mode at its start step"
                )

    def agent(self, agent_id: str) -> ScriptedAgent:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)

    def executed_mode(self, agent: ScriptedAgent, step: int) -> str:
        """Scheduled mode, overridden by an active injection."""
        label = agent.scheduled_mode(step)
        for inj in self.injections:
            if inj.agent_id == agent.agent_id and inj.start_step <= step:
                label = inj.injected_mode
        return label

    def injection_active(self, agent_id: str, step: int) -> bool:
        return any(
            inj.agent_id == agent_id and inj.start_step <= step for inj in self.injections
        )


def straight_reference(
    ego_init: AgentState,
    goal: tuple[float, float],
    duration: int,
    dt: float,
    speed: float | None = None,
) -> Trajectory:
    """Constant-speed straight-line reference from the ego start to the goal,
    holding position at the goal once reached."""
    gx, gy = float(goal[0]), float(goal[1])
    dist = math.hypot(gx - ego_init.x, gy - ego_init.y)
    heading = math.atan2(gy - ego_init.y, gx - ego_init.x) if dist > 0 else ego_init.heading
    v = speed if speed is not None else ego_init.speed
    states = []
    for t in range(duration + 1):
        travelled = min(v * t * dt, dist)
        states.append(
            AgentState(
                x=ego_init.x + travelled * math.cos(heading),
                y=ego_init.y + travelled * math.sin(heading),
                heading=normalize_heading(heading),
                speed=v,
                agent_class=ego_init.agent_class,
            )
        )
    return Trajectory(start_time=0, dt=dt, states=tuple(states))


# ---------------------------------------------------------------------------
# JSON (de)serialization. Round-trips exactly: floats use Python's shortest
# repr, which json preserves.
# ---------------------------------------------------------------------------


def _state_to_dict(s: AgentState) -> dict:
    return {"x": s.x, "y": s.y, "heading": s.heading, "speed": s.speed, "agent_class": s.agent_class}


def _state_from_dict(d: dict) -> AgentState:
    return AgentState(d["x"], d["y"], d["heading"], d["speed"], d.get("agent_class", "vehicle"))


def _mode_to_dict(m: ManeuverMode) -> dict:
    return {
        "label": m.label,
        "acceleration": m.acceleration,
        "turn_rate": m.turn_rate,
        "accel_std": m.accel_std,
        "turn_std": m.turn_std,
        "weight": m.weight,
    }


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario_id": sc.scenario_id,
        "scene_type": sc.scene_type,
        "duration": sc.duration,
        "dt": sc.dt,
        "seed": sc.seed,
        "ego_init": _state_to_dict(sc.ego_init),
        "goal": list(sc.goal),
        "reference": {
            "start_time": sc.reference.start_time,
            "dt": sc.reference.dt,
            "states": [_state_to_dict(s) for s in sc.reference.states],
        },
        "agents": [
            {
                "agent_id": a.agent_id,
                "init": _state_to_dict(a.init),
                "modes": [_mode_to_dict(m) for m in a.modes],
                "schedule": [[s, label] for s, label in a.schedule],
                "exec_noise": list(a.exec_noise),
            }
            for a in sc.agents
        ],
        "static_obstacles": [
            {"x": o.x, "y": o.y, "radius": o.radius} for o in sc.static_obstacles
        ],
        "injections": [
            {
                "agent_id": inj.agent_id,
                "start_step": inj.start_step,
                "injected_mode": inj.injected_mode,
                "task_relevant_flag": inj.task_relevant_flag,
            }
            for inj in sc.injections
        ],
    }


class ScenarioSchemaError(ValueError):
    """Raised when a scenario/suite document does not match the schema."""


def scenario_from_dict(d: dict) -> Scenario:
    try:
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ScenarioSchemaError(f"unsupported schema version {version}")
        reference = Trajectory(
            start_time=d["reference"]["start_time"],
            dt=d["reference"]["dt"],
            states=tuple(_state_from_dict(s) for s in d["reference"]["states"]),
        )
        agents = tuple(
            ScriptedAgent(
                agent_id=a["agent_id"],
                init=_state_from_dict(a["init"]),
                modes=tuple(ManeuverMode(**m) for m in a["modes"]),
                schedule=tuple((int(s), str(label)) for s, label in a["schedule"]),
                exec_noise=tuple(a.get("exec_noise", (0.0, 0.0))),
            )
            for a in d["agents"]
        )
        return Scenario(
            scenario_id=d["scenario_id"],
            scene_type=d.get("scene_type", "unspecified"),
            duration=int(d["duration"]),
            dt=float(d["dt"]),
            ego_init=_state_from_dict(d["ego_init"]),
            goal=tuple(d["goal"]),
            reference=reference,
            agents=agents,
            static_obstacles=tuple(
                StaticObstacle(o["x"], o["y"], o["radius"])
                for o in d.get("static_obstacles", [])
            ),
            injections=tuple(
                AnomalyInjection(
                    agent_id=i["agent_id"],
                    start_step=int(i["start_step"]),
                    injected_mode=i["injected_mode"],
                    task_relevant_flag=i.get("task_relevant_flag"),
                )
                for i in d.get("injections", [])
            ),
            seed=int(d["seed"]),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioSchemaError(f"malformed scenario document: {exc}") from exc


def save_suite(scenarios: list[Scenario], path: str | Path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scenarios": [scenario_to_dict(sc) for sc in scenarios],
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_suite(path: str | Path) -> list[Scenario]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioSchemaError(f"suite file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "scenarios" not in doc:
        raise ScenarioSchemaError("suite file must contain a 'scenarios' list")
    return [scenario_from_dict(d) for d in doc["scenarios"]]
