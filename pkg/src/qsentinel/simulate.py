"""Closed-loop scenario execution.

Each planning cycle covers the full horizon: predictions are sampled once
and shared by the planner and every detector, the ego executes the selected
primitive, scripted agents follow their schedules (with injections), and
observed costs are evaluated with the same cost functions used for the
predictions. Ground-truth labels come from a large-sample quantile oracle
combined with injection activity, independent of every detector.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import (
    AgentState,
    ControlInput,
    DetectionEvent,
    DetectorConfig,
    PredictionSet,
    make_rng,
)
from .costs import (
    CostContext,
    CostParams,
    ego_derivatives,
    interaction_components,
    interaction_terms,
    step_cost_breakdown,
)
from .detector import (
    CostSampleSet,
    is_degenerate_match,
    qad_run,
    quantile_oracle,
    rank_fraction,
)
from .baselines import (
    likelihood_score,
    pdt_detect,
    pdt_score,
    reach_score,
    ttc_score,
    udt_detect,
    udt_score,
)
from .planner import PlanResult, PlannerConfig, plan
from .predictor import sample_predictions, sample_rollout_batch
from .scenario import Scenario, ScriptedAgent

DETECTOR_NAMES = ("qad", "likelihood", "udt", "pdt", "ttc", "reach")

# Substream tags so every stochastic consumer gets an independent stream.
_STREAM_EXEC = 1
_STREAM_PREDICT = 2
_STREAM_ORACLE = 3
_STREAM_REACH = 4


@dataclass(frozen=True)
class SimConfig:
    """Execution knobs for one suite run."""

    detector: DetectorConfig = DetectorConfig(M=100, n=1, p=0.05)
    planner: PlannerConfig = PlannerConfig()
    detectors: tuple[str, ...] = DETECTOR_NAMES
    udt_p_value: float = 0.05
    pdt_p_value: float = 0.05
    likelihood_threshold: float = 0.05
    ttc_threshold_s: float = 1.0
    reach_budget: int = 64
    oracle_samples: int = 100_000
    label_cycles: bool = True
    # The injection conjunction makes uninjected cycles negative by
    # definition; set this to also estimate their oracle quantiles.
    oracle_uninjected: bool = False

    def __post_init__(self) -> None:
        unknown = set(self.detectors) - set(DETECTOR_NAMES)
        if unknown:
            raise ValueError(f"unknown detectors: {sorted(unknown)}")
        object.__setattr__(self, "detectors", tuple(self.detectors))

    @classmethod
    def from_file(cls, path: str | Path) -> "SimConfig":
        """JSON config: top-level SimConfig fields plus optional nested
        ``detector`` {M, n, p} and ``planner`` sections."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        kwargs = dict(raw)
        if "detector" in kwargs:
            kwargs["detector"] = DetectorConfig(**kwargs["detector"])
        if "planner" in kwargs:
            kwargs["planner"] = PlannerConfig(**kwargs["planner"])
        if "detectors" in kwargs:
            kwargs["detectors"] = tuple(kwargs["detectors"])
        return cls(**kwargs)


@dataclass
class AgentCycleRecord:
    agent_id: str
    injection_active: bool
    observed_max_cost: float
    rank_max: float
    oracle_quantile: float | None
    oracle_threshold: float | None
    oracle_anomaly: bool | None
    label: bool | None
    scores: dict[str, float] = field(default_factory=dict)


@dataclass
class CycleRecord:
    scenario_id: str
    scene_type: str
    cycle_index: int
    start_step: int
    agent_ids: tuple[str, ...]
    agents: list[AgentCycleRecord]
    scores: dict[str, float]
    verdicts: dict[str, bool]
    label: bool | None
    qad_event: DetectionEvent | None
    planner_index: int
    planner_cost: float
    observed_breakdowns: list[dict[str, float]]
    timings: dict[str, float]
    sample_digest_planner: str
    sample_digest_qad: str

    def to_dict(self, include_timings: bool = False) -> dict:
        """Canonical record; timings are excluded by default so logs are
        byte-reproducible (they live in the timings sidecar)."""
        out = {
            "scenario_id": self.scenario_id,
            "scene_type": self.scene_type,
            "cycle_index": self.cycle_index,
            "start_step": self.start_step,
            "agent_ids": list(self.agent_ids),
            "agents": [
                {
                    "agent_id": a.agent_id,
                    "injection_active": a.injection_active,
                    "observed_max_cost": a.observed_max_cost,
                    "rank_max": a.rank_max,
                    "oracle_quantile": a.oracle_quantile,
                    "oracle_threshold": a.oracle_threshold,
                    "oracle_anomaly": a.oracle_anomaly,
                    "label": a.label,
                    "scores": a.scores,
                }
                for a in self.agents
            ],
            "scores": self.scores,
            "verdicts": self.verdicts,
            "label": self.label,
            "qad_event": None
            if self.qad_event is None
            else {
                "wall_step": self.qad_event.wall_step,
                "agent_id": self.qad_event.agent_id,
                "observed_cost": self.qad_event.observed_cost,
                "rank_threshold_cost": self.qad_event.rank_threshold_cost,
            },
            "planner": {"selected_index": self.planner_index, "cost": self.planner_cost},
            "observed_breakdowns": self.observed_breakdowns,
            "sample_digest_planner": self.sample_digest_planner,
            "sample_digest_qad": self.sample_digest_qad,
        }
        if include_timings:
            out["timings"] = self.timings
        return out


@dataclass
class ScenarioLog:
    scenario_id: str
    scene_type: str
    seed: int
    dt: float
    cycles: list[CycleRecord]

    def to_dicts(self, include_timings: bool = False) -> list[dict]:
        return [c.to_dict(include_timings) for c in self.cycles]


class ScenarioFaultError(RuntimeError):
    """A scripted agent left numeric range during execution."""


def _executed_agent_states(scenario: Scenario, agent_index: int) -> list[AgentState]:
    """Realized states for one scripted agent over the whole scenario."""
    agent = scenario.agents[agent_index]
    rng = (
        make_rng(scenario.seed, _STREAM_EXEC, agent_index)
        if agent.exec_noise[0] > 0 or agent.exec_noise[1] > 0
        else None
    )
    dt = scenario.dt
    states = [agent.init]
    for step in range(scenario.duration):
        label = scenario.executed_mode(agent, step)
        nominal = agent.nominal_control(label)
        accel, turn = nominal.acceleration, nominal.turn_rate
        if rng is not None:
            accel += float(rng.normal(0.0, agent.exec_noise[0]))
            turn += float(rng.normal(0.0, agent.exec_noise[1]))
        prev = states[-1]
        # Non-ego agents never reverse: floor the speed at zero.
        accel = max(accel, -prev.speed / dt)
        x = prev.x + prev.speed * math.cos(prev.heading) * dt
        y = prev.y + prev.speed * math.sin(prev.heading) * dt
        speed = prev.speed + accel * dt
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(speed)):
            raise ScenarioFaultError(
                f"agent {agent.agent_id} left numeric range at step {step}"
            )
        states.append(
            AgentState(
                x=x,
                y=y,
                heading=prev.heading + turn * dt,
                speed=speed,
                agent_class=prev.agent_class,
            )
        )
    return states


def _observed_interaction(
    ego: AgentState, agent: AgentState, params: CostParams
) -> float:
    """w1*ttc + w2*d2a for the realized (ego, agent) pair."""
    radius_sum = params.radius_for(ego.agent_class) + params.radius_for(agent.agent_class)
    ttc_term, d2a_term = interaction_terms(
        ego_pos=ego.position,
        ego_heading=ego.heading,
        ego_vel=ego.velocity,
        agent_pos=agent.position,
        agent_vel=agent.velocity,
        radius_sum=radius_sum,
        eps_rbf=params.rbf_for(agent.agent_class),
        eps_ttc=params.eps_ttc,
    )
    return float(params.weights[0] * ttc_term + params.weights[1] * d2a_term)


def make_cost_context(scenario: Scenario) -> CostContext:
    ref = scenario.reference
    return CostContext(
        goal=scenario.goal,
        ego_start=(scenario.ego_init.x, scenario.ego_init.y),
        ref_positions=ref.positions(),
        ref_headings=np.array([s.heading for s in ref.states]),
    )


def make_cost_params(scenario: Scenario, base: CostParams | None = None) -> CostParams:
    params = base if base is not None else CostParams()
    ctx_goal_dist = math.hypot(
        scenario.goal[0] - scenario.ego_init.x, scenario.goal[1] - scenario.ego_init.y
    )
    return params.with_reference(ctx_goal_dist, scenario.duration * scenario.dt)


def cost_stat_sampler(
    agent_state: AgentState,
    agent: ScriptedAgent,
    ego_plan_states: Sequence[AgentState],
    ego_only: np.ndarray,
    params: CostParams,
    dt: float,
) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Sampler of the max-over-horizon predicted cost for one agent.

    Each draw rolls a fresh trajectory from the agent's prediction modes and
    returns max over horizon steps of the single-agent cost against the
    committed ego plan. ``ego_only`` is the planner's per-step ego-only cost
    vector (length T). Feeds the labeling quantile oracle.
    """
    horizon = len(ego_plan_states) - 1
    radius_sum = params.radius_for(ego_plan_states[0].agent_class) + params.radius_for(
        agent_state.agent_class
    )
    eps_rbf = params.rbf_for(agent_state.agent_class)
    w1, w2 = params.weights[0], params.weights[1]
    ego_x = np.array([s.x for s in ego_plan_states[1:]])
    ego_y = np.array([s.y for s in ego_plan_states[1:]])
    ego_vel = np.array([s.velocity for s in ego_plan_states[1:]])
    cos_h = np.array([math.cos(s.heading) for s in ego_plan_states[1:]])
    sin_h = np.array([math.sin(s.heading) for s in ego_plan_states[1:]])
    ego_only_row = np.asarray(ego_only[:horizon])

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        positions, velocities = sample_rollout_batch(
            agent_state, agent.modes, n, horizon, dt, rng
        )
        ttc_term, d2a_term = interaction_components(
            positions[:, 1:, 0] - ego_x,
            positions[:, 1:, 1] - ego_y,
            velocities[:, 1:, 0] - ego_vel[:, 0],
            velocities[:, 1:, 1] - ego_vel[:, 1],
            cos_h,
            sin_h,
            radius_sum,
            eps_rbf,
            params.eps_ttc,
        )
        cost = w1 * ttc_term + w2 * d2a_term + ego_only_row
        return cost.max(axis=1)

    return sampler


def label_cycle(
    observed_max: float,
    injection_active: bool,
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    p: float,
    rng: np.random.Generator,
    n_samples: int = 100_000,
):
    """Oracle label for one (cycle, agent): positive iff the realized
    max-over-horizon cost sits in the top-p quantile of fresh predictor
    draws AND an injection was active."""
    oracle = quantile_oracle(observed_max, sampler, p, rng, n_samples)
    return oracle, bool(oracle.is_anomaly and injection_active)


def run_scenario(scenario: Scenario, config: SimConfig | None = None) -> ScenarioLog:
    """Execute one scenario and log every planning cycle."""
    cfg = config if config is not None else SimConfig()
    dt = scenario.dt
    horizon = cfg.planner.horizon
    params = make_cost_params(scenario)
    ctx = make_cost_context(scenario)

    agent_traces = [_executed_agent_states(scenario, i) for i in range(len(scenario.agents))]
    agent_ids = tuple(a.agent_id for a in scenario.agents)

    ego_trace: list[AgentState] = [scenario.ego_init]
    prev_control = ControlInput(0.0, 0.0)
    cycles: list[CycleRecord] = []
    n_cycles = scenario.duration // horizon

    for cycle in range(n_cycles):
        t = cycle * horizon
        ego = ego_trace[t]
        record = _run_cycle(
            scenario,
            cfg,
            params,
            ctx,
            cycle,
            t,
            ego,
            ego_trace,
            prev_control,
            agent_traces,
            agent_ids,
        )
        cycles.append(record.record)
        ego_trace.extend(record.ego_states[1:])
        prev_control = record.last_control

    return ScenarioLog(
        scenario_id=scenario.scenario_id,
        scene_type=scenario.scene_type,
        seed=scenario.seed,
        dt=dt,
        cycles=cycles,
    )


@dataclass
class _CycleOutcome:
    record: CycleRecord
    ego_states: list[AgentState]
    last_control: ControlInput


def _run_cycle(
    scenario: Scenario,
    cfg: SimConfig,
    params: CostParams,
    ctx: CostContext,
    cycle: int,
    t: int,
    ego: AgentState,
    ego_trace: list[AgentState],
    prev_control: ControlInput,
    agent_traces: list[list[AgentState]],
    agent_ids: tuple[str, ...],
) -> _CycleOutcome:
    dt = scenario.dt
    horizon = cfg.planner.horizon
    det = cfg.detector
    n_agents = len(scenario.agents)

    # Predictions: sampled once, shared by the planner and all detectors.
    predictions: list[PredictionSet] = []
    for idx, agent in enumerate(scenario.agents):
        predictions.append(
            sample_predictions(
                agent_id=agent.agent_id,
                state=agent_traces[idx][t],
                modes=agent.modes,
                M=det.M,
                horizon=horizon,
                dt=dt,
                seed=np.random.SeedSequence(
                    scenario.seed, spawn_key=(_STREAM_PREDICT, cycle, idx)
                ),
            )
        )

    t0 = time.perf_counter()
    history = ego_trace[max(0, t - 2) : t]
    result: PlanResult = plan(
        ego,
        prev_control,
        predictions,
        ctx,
        params,
        cfg.planner,
        obstacles=scenario.static_obstacles,
        history=history,
    )
    planning_s = time.perf_counter() - t0

    plan_states = list(result.primitive.trajectory.states)
    cost_samples = result.per_agent_cost_samples  # (T, A, M)
    ego_only = result.ego_only_costs  # (T,)
    digest_planner = hashlib.sha256(cost_samples.tobytes()).hexdigest()

    # Observed costs along the executed horizon. The ego executes the plan
    # exactly, so the planner's ego-only values are the realized ones; adding
    # them keeps predicted and observed costs on one code path.
    full_ego = ego_trace[:t] + plan_states
    observed = np.empty((horizon, n_agents))
    for tau in range(1, horizon + 1):
        for a in range(n_agents):
            observed[tau - 1, a] = (
                _observed_interaction(plan_states[tau], agent_traces[a][t + tau], params)
                + ego_only[tau - 1]
            )

    # Detection: first the rank detector on the shared samples.
    t0 = time.perf_counter()
    enabled = set(cfg.detectors)
    digest_qad = hashlib.sha256(cost_samples.tobytes()).hexdigest()
    streams = {
        agent_ids[a]: [
            CostSampleSet(step=tau + 1, samples=cost_samples[tau, a]) for tau in range(horizon)
        ]
        for a in range(n_agents)
    }
    observed_by_agent = {agent_ids[a]: observed[:, a].tolist() for a in range(n_agents)}
    event = (
        qad_run(streams, observed_by_agent, det.n, start_step=t, skip_degenerate_matches=True)
        if n_agents and "qad" in enabled
        else None
    )

    per_agent_records: list[AgentCycleRecord] = []
    scores: dict[str, float] = {name: float("-inf") for name in cfg.detectors}
    verdicts: dict[str, bool] = {name: False for name in cfg.detectors}
    if "qad" in enabled:
        verdicts["qad"] = event is not None

    realized_positions = {
        agent_ids[a]: np.array(
            [[agent_traces[a][t + tau].x, agent_traces[a][t + tau].y] for tau in range(1, horizon + 1)]
        )
        for a in range(n_agents)
    }
    ego_positions = np.array([[s.x, s.y] for s in plan_states[1:]])

    reach_seed = int(
        np.random.SeedSequence(scenario.seed, spawn_key=(_STREAM_REACH, cycle)).generate_state(1)[0]
    )
    agents_at_t = [agent_traces[a][t] for a in range(n_agents)]

    for a in range(n_agents):
        # Degenerate exact matches (saturated, variance-free cost) carry no
        # rank evidence and score zero.
        ranks = [
            0.0
            if is_degenerate_match(observed[tau, a], streams[agent_ids[a]][tau])
            else rank_fraction(observed[tau, a], streams[agent_ids[a]][tau].samples)
            for tau in range(horizon)
        ]
        reference = cost_samples[:, a, :].T  # (M, T)
        agent_scores: dict[str, float] = {}
        if "qad" in enabled:
            agent_scores["qad"] = max(ranks)
        if "likelihood" in enabled:
            agent_scores["likelihood"] = likelihood_score(
                [predictions[a]], realized_positions, ego_positions
            )
        if "udt" in enabled:
            agent_scores["udt"] = udt_score(reference, observed[:, a])
            verdicts["udt"] = verdicts["udt"] or udt_detect(
                reference, observed[:, a], cfg.udt_p_value
            )
        if "pdt" in enabled:
            agent_scores["pdt"] = pdt_score(reference, observed[:, a])
            verdicts["pdt"] = verdicts["pdt"] or pdt_detect(
                reference, observed[:, a], cfg.pdt_p_value
            )
        if "ttc" in enabled:
            agent_scores["ttc"] = max(
                ttc_score(plan_states[tau], [agent_traces[a][t + tau]], params)
                for tau in range(1, horizon + 1)
            )
        if "reach" in enabled:
            agent_scores["reach"] = reach_score(
                np.array([[s.x, s.y] for s in plan_states]),
                params.radius_for(ego.agent_class),
                [agents_at_t[a]],
                cfg.reach_budget,
                reach_seed,
                dt,
                params,
            )
        for name, value in agent_scores.items():
            scores[name] = max(scores[name], value)
        per_agent_records.append(
            AgentCycleRecord(
                agent_id=agent_ids[a],
                injection_active=any(
                    scenario.injection_active(agent_ids[a], t + tau) for tau in range(horizon)
                ),
                observed_max_cost=float(observed[:, a].max()),
                rank_max=float(max(ranks)),
                oracle_quantile=None,
                oracle_threshold=None,
                oracle_anomaly=None,
                label=None,
                scores=agent_scores,
            )
        )

    if "likelihood" in enabled:
        verdicts["likelihood"] = scores["likelihood"] > -math.log(cfg.likelihood_threshold)
    if "ttc" in enabled:
        verdicts["ttc"] = scores["ttc"] > -cfg.ttc_threshold_s
    if "reach" in enabled:
        verdicts["reach"] = scores["reach"] >= 0.0
    detection_s = time.perf_counter() - t0

    # Oracle labeling, detector-independent.
    t0 = time.perf_counter()
    cycle_label: bool | None = None
    if cfg.label_cycles and cfg.oracle_samples > 0:
        cycle_label = False
        for a, rec in enumerate(per_agent_records):
            if not rec.injection_active and not cfg.oracle_uninjected:
                rec.label = False
                continue
            sampler = cost_stat_sampler(
                agent_traces[a][t],
                scenario.agents[a],
                plan_states,
                ego_only,
                params,
                dt,
            )
            oracle, label = label_cycle(
                rec.observed_max_cost,
                rec.injection_active,
                sampler,
                det.p,
                make_rng(scenario.seed, _STREAM_ORACLE, cycle, a),
                cfg.oracle_samples,
            )
            rec.oracle_quantile = oracle.quantile
            rec.oracle_threshold = oracle.threshold
            rec.oracle_anomaly = oracle.is_anomaly
            rec.label = label
            cycle_label = cycle_label or label
    labeling_s = time.perf_counter() - t0

    breakdowns = []
    derivs = ego_derivatives(full_ego, dt)
    for tau in range(1, horizon + 1):
        bd = step_cost_breakdown(
            plan_states[tau],
            derivs[t + tau],
            [agent_traces[a][t + tau] for a in range(n_agents)],
            ctx,
            params,
        )
        breakdowns.append(
            {
                "ttc": bd.ttc,
                "d2a": bd.d2a,
                "d2g": bd.d2g,
                "d2r": bd.d2r,
                "velocity": bd.velocity,
                "comfort": bd.comfort,
                "reverse": bd.reverse,
                "total": bd.total,
            }
        )

    record = CycleRecord(
        scenario_id=scenario.scenario_id,
        scene_type=scenario.scene_type,
        cycle_index=cycle,
        start_step=t,
        agent_ids=agent_ids,
        agents=per_agent_records,
        scores=scores,
        verdicts=verdicts,
        label=cycle_label,
        qad_event=event,
        planner_index=result.primitive.index,
        planner_cost=result.primitive.cost,
        observed_breakdowns=breakdowns,
        timings={
            "planning_s": planning_s,
            "detection_s": detection_s,
            "labeling_s": labeling_s,
        },
        sample_digest_planner=digest_planner,
        sample_digest_qad=digest_qad,
    )
    return _CycleOutcome(
        record=record,
        ego_states=plan_states,
        last_control=result.primitive.controls[-1],
    )


# ---------------------------------------------------------------------------
# Suite execution and log output.
# ---------------------------------------------------------------------------


def _run_one(args: tuple[Scenario, SimConfig]) -> ScenarioLog:
    scenario, config = args
    return run_scenario(scenario, config)


def run_suite(
    scenarios: Sequence[Scenario],
    config: SimConfig | None = None,
    workers: int = 1,
) -> list[ScenarioLog]:
    """Run scenarios (optionally in parallel) and return logs sorted by
    scenario id, so worker count never changes the output."""
    cfg = config if config is not None else SimConfig()
    if workers <= 1 or len(scenarios) <= 1:
        logs = [run_scenario(sc, cfg) for sc in scenarios]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(_run_one, [(sc, cfg) for sc in scenarios], chunksize=8))
    return sorted(logs, key=lambda log: log.scenario_id)


def write_jsonl(logs: Sequence[ScenarioLog], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for log in logs:
            for record in log.to_dicts():
                fh.write(json.dumps(record) + "\n")


def write_timings_csv(logs: Sequence[ScenarioLog], path: str | Path) -> None:
    """Wall-clock sidecar: deliberately outside the reproducible log."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario_id", "cycle_index", "planning_s", "detection_s", "labeling_s"])
        for log in logs:
            for rec in log.cycles:
                writer.writerow(
                    [
                        rec.scenario_id,
                        rec.cycle_index,
                        f"{rec.timings['planning_s']:.6f}",
                        f"{rec.timings['detection_s']:.6f}",
                        f"{rec.timings['labeling_s']:.6f}",
                    ]
                )


CSV_COLUMNS = (
    "scenario_id",
    "scene_type",
    "cycle_index",
    "start_step",
    "agent_id",
    "injection_active",
    "oracle_quantile",
    "label_agent",
    "label_cycle",
    "observed_max_cost",
    "score_qad",
    "score_likelihood",
    "score_udt",
    "score_pdt",
    "score_ttc",
    "score_reach",
    "verdict_qad",
    "verdict_likelihood",
    "verdict_udt",
    "verdict_pdt",
    "verdict_ttc",
    "verdict_reach",
)


def write_csv(logs: Sequence[ScenarioLog], path: str | Path) -> None:
    """Flattened per-(cycle, agent) rows; cycle-level verdicts repeat per row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for log in logs:
            for rec in log.cycles:
                for agent in rec.agents:
                    writer.writerow(
                        [
                            rec.scenario_id,
                            rec.scene_type,
                            rec.cycle_index,
                            rec.start_step,
                            agent.agent_id,
                            agent.injection_active,
                            agent.oracle_quantile,
                            agent.label,
                            rec.label,
                            agent.observed_max_cost,
                        ]
                        + [agent.scores.get(name, "") for name in DETECTOR_NAMES]
                        + [rec.verdicts.get(name, "") for name in DETECTOR_NAMES]
                    )


def load_jsonl(path: str | Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


# ---------------------------------------------------------------------------
# Adaptive re-planning: long-horizon plan, re-plan on detection.
# ---------------------------------------------------------------------------


@dataclass
class ReplanRunResult:
    scenario_id: str
    scene_type: str
    intervals: list[int]
    detections: int


def run_replan_scenario(
    scenario: Scenario,
    n: int,
    M: int = 100,
    p: float = 0.25,
) -> ReplanRunResult:
    """Follow a long-horizon reference plan; re-plan whenever the rank
    detector fires; record the step intervals between re-plans.

    The final interval (plan end without detection) is recorded censored at
    the remaining horizon.
    """
    from .costs import ego_only_costs as _ego_costs

    dt = scenario.dt
    horizon = scenario.duration
    params = make_cost_params(scenario)
    ctx = make_cost_context(scenario)
    agent_traces = [_executed_agent_states(scenario, i) for i in range(len(scenario.agents))]
    ego_states = list(scenario.reference.states[: horizon + 1])
    ego_only = _ego_costs(ego_states, ctx, params, dt)

    intervals: list[int] = []
    detections = 0
    t0 = 0
    replan_index = 0
    while t0 < horizon:
        remaining = horizon - t0
        # Fresh predictions for the remaining horizon, one per agent.
        sample_costs = []
        for idx, agent in enumerate(scenario.agents):
            rng = make_rng(scenario.seed, 20, replan_index, idx)
            positions, velocities = sample_rollout_batch(
                agent_traces[idx][t0], agent.modes, M, remaining, dt, rng
            )
            radius_sum = params.radius_for(scenario.ego_init.agent_class) + params.radius_for(
                agent.init.agent_class
            )
            eps_rbf = params.rbf_for(agent.init.agent_class)
            per_step = np.empty((remaining, M))
            for tau in range(1, remaining + 1):
                ego = ego_states[t0 + tau]
                ttc_term, d2a_term = interaction_terms(
                    ego_pos=ego.position,
                    ego_heading=ego.heading,
                    ego_vel=ego.velocity,
                    agent_pos=positions[:, tau],
                    agent_vel=velocities[:, tau],
                    radius_sum=radius_sum,
                    eps_rbf=eps_rbf,
                    eps_ttc=params.eps_ttc,
                )
                per_step[tau - 1] = (
                    params.weights[0] * ttc_term
                    + params.weights[1] * d2a_term
                    + ego_only[t0 + tau]
                )
            sample_costs.append(per_step)

        hit_step = None
        for tau in range(1, remaining + 1):
            w = t0 + tau
            for idx in range(len(scenario.agents)):
                observed = (
                    _observed_interaction(ego_states[w], agent_traces[idx][w], params)
                    + ego_only[w]
                )
                sample_set = CostSampleSet(step=tau, samples=sample_costs[idx][tau - 1])
                if is_degenerate_match(observed, sample_set):
                    continue
                if observed >= sample_set.threshold(n):
                    hit_step = w
                    break
            if hit_step is not None:
                break

        if hit_step is None:
            intervals.append(remaining)
            break
        intervals.append(hit_step - t0)
        detections += 1
        t0 = hit_step
        replan_index += 1

    return ReplanRunResult(
        scenario_id=scenario.scenario_id,
        scene_type=scenario.scene_type,
        intervals=intervals,
        detections=detections,
    )
