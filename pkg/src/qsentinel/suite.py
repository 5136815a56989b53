"""Scripted scenario suites: benign traffic, task-relevant anomalies
(cut-ins, hard brakes, crossings), and task-irrelevant anomalies (turns or
accelerations away from the ego) that mispredict without raising the cost.

Every scenario runs the ego down a straight reference at 8 m/s, with the
goal at the reference end. Default scenarios last two planning cycles
(eight steps); injections start mid horizon of the second cycle, so each
injected scenario contributes one anomalous cycle.

Template geometry notes: task-relevant injections put the agent on a real
constant-velocity collision course (the time-to-collision term carries the
signal); slower side agents get a small heading offset so the momentum term
keeps nonzero relative lateral velocity at the passing instant.
"""

from __future__ import annotations

import math

import numpy as np

from .core import AgentState, PEDESTRIAN, VEHICLE, make_rng
from .predictor import ManeuverMode, standard_mode
from .scenario import (
    AnomalyInjection,
    Scenario,
    ScriptedAgent,
    StaticObstacle,
    straight_reference,
)

EGO_SPEED = 8.0
DT = 0.5
CYCLE_STEPS = 4

POSITIVE_TYPES = ("cut_in", "hard_brake", "crossing")
IRRELEVANT_TYPES = ("turn_away", "accel_away")
BENIGN_TYPES = ("benign_lead", "benign_oncoming", "benign_ped", "benign_obstacle")


def _ego_init() -> AgentState:
    return AgentState(0.0, 0.0, 0.0, EGO_SPEED, VEHICLE)


def _base(
    scenario_id: str,
    scene_type: str,
    duration: int,
    seed: int,
    agents: tuple[ScriptedAgent, ...],
    injections: tuple[AnomalyInjection, ...] = (),
    obstacles: tuple[StaticObstacle, ...] = (),
) -> Scenario:
    ego = _ego_init()
    # The goal is the end of the reference trajectory, which the derived
    # reference-speed parameters assume.
    goal = (duration * DT * EGO_SPEED, 0.0)
    return Scenario(
        scenario_id=scenario_id,
        scene_type=scene_type,
        duration=duration,
        dt=DT,
        ego_init=ego,
        goal=goal,
        reference=straight_reference(ego, goal, duration, DT),
        agents=agents,
        injections=injections,
        static_obstacles=obstacles,
        seed=seed,
    )


def benign_lead(scenario_id: str, seed: int, rng: np.random.Generator, duration: int) -> Scenario:
    gap = rng.uniform(9.0, 14.0)
    speed = rng.uniform(6.8, 7.6)
    agent = ScriptedAgent(
        agent_id="lead",
        init=AgentState(gap, 0.0, 0.0, speed, VEHICLE),
        modes=(
            standard_mode("constant_velocity", weight=0.7, accel_std=0.35, turn_std=0.02),
            standard_mode("brake", weight=0.15, accel_std=0.25, turn_std=0.02),
            standard_mode("accelerate", weight=0.15, accel_std=0.25, turn_std=0.02),
        ),
    )
    return _base(scenario_id, "benign_lead", duration, seed, (agent,))


def benign_oncoming(scenario_id: str, seed: int, rng: np.random.Generator, duration: int) -> Scenario:
    x = rng.uniform(26.0, 36.0)
    y = rng.uniform(3.2, 4.0)
    agent = ScriptedAgent(
        agent_id="oncoming",
        init=AgentState(x, y, math.pi - 0.04, rng.uniform(6.0, 8.0), VEHICLE),
        modes=(
            standard_mode("constant_velocity", weight=0.85, accel_std=0.3, turn_std=0.02),
            standard_mode("brake", weight=0.15, accel_std=0.25, turn_std=0.02),
        ),
    )
    return _base(scenario_id, "benign_oncoming", duration, seed, (agent,))


def benign_ped(scenario_id: str, seed: int, rng: np.random.Generator, duration: int) -> Scenario:
    x = rng.uniform(10.0, 16.0)
    y = -rng.uniform(4.5, 6.5)
    # Slight heading offset keeps the momentum term off its degenerate
    # aligned-pass maximum.
    agent = ScriptedAgent(
        agent_id="ped",
        init=AgentState(x, y, 0.12, rng.uniform(1.0, 1.5), PEDESTRIAN),
        modes=(
            standard_mode("constant_velocity", weight=0.8, accel_std=0.15, turn_std=0.08),
            standard_mode("stop", weight=0.2, accel_std=0.1, turn_std=0.05),
        ),
    )
    return _base(scenario_id, "benign_ped", duration, seed, (agent,))


def benign_obstacle(scenario_id: str, seed: int, rng: np.random.Generator, duration: int) -> Scenario:
    obstacles = (
        StaticObstacle(rng.uniform(14.0, 26.0), float(rng.choice([-2.6, 2.6])), 1.0),
    )
    return _base(scenario_id, "benign_obstacle", duration, seed, (), obstacles=obstacles)


def _merger(
    rng: np.random.Generator, agent_id: str, turn_std: float = 0.012
) -> tuple[ScriptedAgent, float]:
    """Adjacent-lane vehicle slightly ahead of and faster than the ego.

    The library carries two zero-weight lane-change maneuvers (brake while
    turning): the predictor never samples them, so injecting one is a true
    surprise. Toward-ego and away-from-ego variants share magnitudes.
    """
    side = 1.0 if rng.random() < 0.5 else -1.0
    x = rng.uniform(8.0, 11.0)
    y = side * rng.uniform(3.4, 3.9)
    turn = 0.45
    agent = ScriptedAgent(
        agent_id=agent_id,
        init=AgentState(x, y, 0.0, EGO_SPEED + rng.uniform(0.6, 1.0), VEHICLE),
        modes=(
            standard_mode("constant_velocity", weight=0.8, accel_std=0.3, turn_std=turn_std),
            standard_mode("accelerate", weight=0.2, accel_std=0.3, turn_std=turn_std),
            ManeuverMode("turn_right", -2.0, -turn, 0.0, 0.0, weight=0.0),
            ManeuverMode("turn_left", -2.0, turn, 0.0, 0.0, weight=0.0),
        ),
    )
    return agent, side


def cut_in(
    scenario_id: str, seed: int, rng: np.random.Generator, duration: int, inject_step: int
) -> Scenario:
    agent, side = _merger(rng, "cutter")
    injected = "turn_right" if side > 0 else "turn_left"
    return _base(
        scenario_id,
        "cut_in",
        duration,
        seed,
        (agent,),
        injections=(AnomalyInjection("cutter", inject_step, injected),),
    )


def turn_away(
    scenario_id: str, seed: int, rng: np.random.Generator, duration: int, inject_step: int
) -> Scenario:
    agent, side = _merger(rng, "turner")
    injected = "turn_left" if side > 0 else "turn_right"
    return _base(
        scenario_id,
        "turn_away",
        duration,
        seed,
        (agent,),
        injections=(AnomalyInjection("turner", inject_step, injected),),
    )


def hard_brake(
    scenario_id: str, seed: int, rng: np.random.Generator, duration: int, inject_step: int
) -> Scenario:
    gap = rng.uniform(9.0, 12.0)
    # Slightly faster than the ego so the planner is not already backing off
    # when the injected stop lands.
    agent = ScriptedAgent(
        agent_id="lead",
        init=AgentState(gap, 0.0, 0.0, rng.uniform(8.6, 9.2), VEHICLE),
        modes=(
            standard_mode("constant_velocity", weight=0.9, accel_std=0.3, turn_std=0.02),
            standard_mode("brake", weight=0.1, accel_std=0.15, turn_std=0.02),
        ),
    )
    return _base(
        scenario_id,
        "hard_brake",
        duration,
        seed,
        (agent,),
        injections=(AnomalyInjection("lead", inject_step + 1, "stop"),),
    )


def accel_away(
    scenario_id: str, seed: int, rng: np.random.Generator, duration: int, inject_step: int
) -> Scenario:
    gap = rng.uniform(7.0, 9.5)
    agent = ScriptedAgent(
        agent_id="lead",
        init=AgentState(gap, 0.0, 0.0, rng.uniform(7.6, 8.0), VEHICLE),
        modes=(
            standard_mode("constant_velocity", weight=0.85, accel_std=0.2, turn_std=0.015),
            standard_mode("brake", weight=0.15, accel_std=0.2, turn_std=0.015),
        ),
    )
    return _base(
        scenario_id,
        "accel_away",
        duration,
        seed,
        (agent,),
        injections=(AnomalyInjection("lead", inject_step + 1, "accelerate"),),
    )


def crossing(
    scenario_id: str, seed: int, rng: np.random.Generator, duration: int, inject_step: int
) -> Scenario:
    """Side vehicle scripted to yield short of the lane; the injection makes
    it run the gap right as the ego arrives."""
    side = 1.0 if rng.random() < 0.5 else -1.0
    speed = rng.uniform(3.8, 4.3)
    x = rng.uniform(25.0, 29.0)
    # Braking at the nominal rate from the start leaves a safe stopping
    # margin before the lane.
    y = -side * (speed * speed / 4.0 + rng.uniform(3.2, 3.8))
    agent = ScriptedAgent(
        agent_id="crosser",
        init=AgentState(x, y, side * math.pi / 2.0, speed, VEHICLE),
        modes=(standard_mode("brake", weight=1.0, accel_std=0.15, turn_std=0.02),),
        schedule=((0, "brake"),),
    )
    return _base(
        scenario_id,
        "crossing",
        duration,
        seed,
        (agent,),
        injections=(AnomalyInjection("crosser", inject_step, "accelerate"),),
    )


_BUILDERS = {
    "benign_lead": benign_lead,
    "benign_oncoming": benign_oncoming,
    "benign_ped": benign_ped,
    "benign_obstacle": benign_obstacle,
}
_INJECTED_BUILDERS = {
    "cut_in": cut_in,
    "hard_brake": hard_brake,
    "crossing": crossing,
    "turn_away": turn_away,
    "accel_away": accel_away,
}


def generate_suite(
    n_cycles: int,
    positive_rate: float,
    seed: int,
    cycles_per_scenario: int = 2,
    irrelevant_factor: float = 2.5,
) -> list[Scenario]:
    """Deterministic scenario suite with the requested injected-positive rate.

    Each injected scenario contributes one anomalous cycle, so the number of
    task-relevant injections is round(positive_rate * n_cycles). Task-
    irrelevant injections are added at ``irrelevant_factor`` times that count
    (they are labeled negative by the oracle); the rest is benign traffic.
    """
    if n_cycles < 1:
        raise ValueError("need at least one cycle")
    if not 0.0 <= positive_rate < 1.0:
        raise ValueError("positive_rate must lie in [0, 1)")
    n_scenarios = -(-n_cycles // cycles_per_scenario)
    n_pos = round(positive_rate * n_cycles)
    n_irr = min(round(irrelevant_factor * n_pos), n_scenarios - n_pos)
    duration = cycles_per_scenario * CYCLE_STEPS
    # Injections start at the final cycle's boundary (builders may offset
    # into the horizon), so each injected scenario has one anomalous cycle.
    inject_step = (cycles_per_scenario - 1) * CYCLE_STEPS

    kinds: list[str] = []
    for i in range(n_pos):
        kinds.append(POSITIVE_TYPES[i % len(POSITIVE_TYPES)])
    for i in range(n_irr):
        kinds.append(IRRELEVANT_TYPES[i % len(IRRELEVANT_TYPES)])
    for i in range(n_scenarios - n_pos - n_irr):
        kinds.append(BENIGN_TYPES[i % len(BENIGN_TYPES)])

    order_rng = make_rng(seed, 0)
    order = order_rng.permutation(n_scenarios)
    scenarios = []
    for idx in range(n_scenarios):
        kind = kinds[order[idx]]
        rng = make_rng(seed, 1, idx)
        scenario_seed = int(
            np.random.SeedSequence(seed, spawn_key=(2, idx)).generate_state(1)[0]
        )
        scenario_id = f"sc{idx:05d}"
        if kind in _BUILDERS:
            scenarios.append(_BUILDERS[kind](scenario_id, scenario_seed, rng, duration))
        else:
            scenarios.append(
                _INJECTED_BUILDERS[kind](scenario_id, scenario_seed, rng, duration, inject_step)
            )
    return scenarios


def replan_scenarios(
    n_runs: int,
    injection_hazard: float,
    seed: int,
    horizon: int = 20,
) -> list[Scenario]:
    """Long-horizon scenes for the adaptive re-planning study.

    ``injection_hazard`` is the per-step probability that a toward-ego
    injection starts (first success wins); 0 yields injection-free runs.
    """
    if not 0.0 <= injection_hazard < 1.0:
        raise ValueError("injection_hazard must lie in [0, 1)")
    out = []
    for idx in range(n_runs):
        rng = make_rng(seed, 10, idx)
        scenario_seed = int(
            np.random.SeedSequence(seed, spawn_key=(11, idx)).generate_state(1)[0]
        )
        duration = horizon
        # Prediction turn noise stays zero here: with a reference-following
        # ego and the even-powered momentum term, lateral prediction noise
        # would one-sidedly deflate sampled costs and flood the p=0.25
        # detector with alarms in injection-free runs.
        # Lead libraries are confident (cv-only): a brake mode's own sampled
        # collision phase would shadow a real injected stop at this quantile.
        if idx % 3 == 0:
            gap = rng.uniform(9.0, 14.0)
            agent = ScriptedAgent(
                agent_id="lead",
                init=AgentState(gap, 0.0, 0.0, rng.uniform(7.2, 7.8), VEHICLE),
                modes=(standard_mode("constant_velocity", weight=1.0, accel_std=0.35),),
            )
            kind, injected = "follow_lead", "stop"
        elif idx % 3 == 1:
            agent, side = _merger(rng, "merger", turn_std=0.0)
            kind, injected = "adjacent_traffic", ("turn_right" if side > 0 else "turn_left")
        else:
            # Far lead: interactions stay dormant until an injected stop
            # pulls the time to collision under the scaling horizon.
            agent = ScriptedAgent(
                agent_id="lead",
                init=AgentState(rng.uniform(17.0, 24.0), 0.0, 0.0, rng.uniform(7.2, 7.8), VEHICLE),
                modes=(standard_mode("constant_velocity", weight=1.0, accel_std=0.35),),
            )
            kind, injected = "sparse_traffic", "stop"

        injections: tuple[AnomalyInjection, ...] = ()
        if injection_hazard > 0.0:
            for step in range(2, duration - 2):
                if rng.random() < injection_hazard:
                    injections = (AnomalyInjection(agent.agent_id, step, injected),)
                    break

        ego = _ego_init()
        goal = (duration * DT * EGO_SPEED, 0.0)
        out.append(
            Scenario(
                scenario_id=f"rp{idx:05d}",
                scene_type=kind,
                duration=duration,
                dt=DT,
                ego_init=ego,
                goal=goal,
                reference=straight_reference(ego, goal, duration, DT),
                agents=(agent,),
                injections=injections,
                seed=scenario_seed,
            )
        )
    return out
