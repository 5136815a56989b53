"""ROC/AUROC computation, operating-point selection, empirical rate tables,
ensemble evaluation, and the adaptive re-planning study."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .baselines import ensemble_verdicts
from .detector import calibrate
from .simulate import DETECTOR_NAMES, ReplanRunResult, run_replan_scenario
from .suite import replan_scenarios


class UndefinedMetricError(ValueError):
    """Raised when a metric needs both classes but got one."""


@dataclass(frozen=True)
class RocCurve:
    """Threshold sweep of (FPR, TPR) points sorted by FPR.

    ``thresholds`` carries the swept parameter per point: the score cut at
    or above which a cycle is called positive (+inf and -inf bound the
    (0, 0) and (1, 1) endpoints).
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auroc: float


def roc(scores: Sequence[float], labels: Sequence[bool]) -> RocCurve:
    """ROC over every distinct score threshold, with trapezoidal AUROC."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and aligned")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs at least one positive and one negative label")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels)
    fp = np.cumsum(~sorted_labels)
    # Keep one point per distinct score: the last index of each tie block
    # (x != nan sentinel marks the final index; +/-inf ties collapse too).
    nxt = np.concatenate([sorted_scores[1:], [np.nan]])
    distinct = np.nonzero(sorted_scores != nxt)[0]
    tpr = np.concatenate([[0.0], tp[distinct] / n_pos])
    fpr = np.concatenate([[0.0], fp[distinct] / n_neg])
    thresholds = np.concatenate([[np.inf], sorted_scores[distinct]])
    if fpr[-1] != 1.0 or tpr[-1] != 1.0:
        fpr = np.concatenate([fpr, [1.0]])
        tpr = np.concatenate([tpr, [1.0]])
        thresholds = np.concatenate([thresholds, [-np.inf]])
    auroc = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auroc=auroc)


def auroc_pairwise(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Brute-force estimator: fraction of (positive, negative) pairs ranked
    correctly, ties counting one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    pos = scores[labels]
    neg = scores[~labels]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("needs both classes")
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (pos.size * neg.size))


@dataclass(frozen=True)
class BestPoint:
    fpr: float
    fnr: float
    parameter: float
    tpr: float


def best_point(curve: RocCurve) -> BestPoint:
    """Operating point farthest from the chance diagonal: maximize
    TPR - FPR; ties resolve to the lower FPR."""
    gain = curve.tpr - curve.fpr
    best = int(np.lexsort((curve.fpr, -gain))[0])
    return BestPoint(
        fpr=float(curve.fpr[best]),
        fnr=float(1.0 - curve.tpr[best]),
        parameter=float(curve.thresholds[best]),
        tpr=float(curve.tpr[best]),
    )


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval (z defaults to the two-sided 95% quantile)."""
    if trials == 0:
        return (0.0, 1.0)
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class EmpiricalRates:
    fpr: float
    fnr: float
    fpr_ci: tuple[float, float]
    fnr_ci: tuple[float, float]
    n_pos: int
    n_neg: int


def empirical_rates(verdicts: Sequence[bool], labels: Sequence[bool]) -> EmpiricalRates:
    verdicts = np.asarray(verdicts, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if verdicts.shape != labels.shape:
        raise ValueError("verdicts and labels must align")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    fp = int((verdicts & ~labels).sum())
    fn = int((~verdicts & labels).sum())
    fpr = fp / n_neg if n_neg else 0.0
    fnr = fn / n_pos if n_pos else 0.0
    return EmpiricalRates(
        fpr=fpr,
        fnr=fnr,
        fpr_ci=wilson_interval(fp, n_neg),
        fnr_ci=wilson_interval(fn, n_pos),
        n_pos=n_pos,
        n_neg=n_neg,
    )


# ---------------------------------------------------------------------------
# Log-frame extraction and full evaluation reports.
# ---------------------------------------------------------------------------


@dataclass
class LogFrame:
    """Per-cycle score/verdict columns pulled out of a simulation log."""

    labels: np.ndarray
    scores: dict[str, np.ndarray]
    verdicts: dict[str, np.ndarray]


def log_frame(records: Sequence[Mapping]) -> LogFrame:
    """Columns from JSONL cycle records (dicts) for the detectors present."""
    if not records:
        raise ValueError("no cycle records")
    labels = np.array([bool(r["label"]) for r in records])
    present = [name for name in DETECTOR_NAMES if name in records[0]["scores"]]
    scores = {
        name: np.array([float(r["scores"][name]) for r in records]) for name in present
    }
    verdicts = {
        name: np.array([bool(r["verdicts"][name]) for r in records]) for name in present
    }
    return LogFrame(labels=labels, scores=scores, verdicts=verdicts)


@dataclass
class DetectorReport:
    name: str
    curve: RocCurve | None
    best: BestPoint | None
    rates: EmpiricalRates


@dataclass
class EvalReport:
    detectors: list[DetectorReport]
    ensembles: dict[str, EmpiricalRates]
    n_cycles: int

    def auroc_table(self) -> list[tuple[str, float]]:
        rows = [
            (d.name, d.curve.auroc) for d in self.detectors if d.curve is not None
        ]
        return sorted(rows, key=lambda r: -r[1])


def evaluate_frame(frame: LogFrame, detectors: Sequence[str] | None = None) -> EvalReport:
    if detectors is None:
        detectors = [name for name in DETECTOR_NAMES if name in frame.scores]
    reports = []
    for name in detectors:
        try:
            curve = roc(frame.scores[name], frame.labels)
            best = best_point(curve)
        except UndefinedMetricError:
            curve = None
            best = None
        reports.append(
            DetectorReport(
                name=name,
                curve=curve,
                best=best,
                rates=empirical_rates(frame.verdicts[name], frame.labels),
            )
        )
    members = [frame.verdicts[name] for name in detectors]
    ensembles = {
        "all_of": empirical_rates(ensemble_verdicts(members, "all_of"), frame.labels),
        "any_of": empirical_rates(ensemble_verdicts(members, "any_of"), frame.labels),
    }
    return EvalReport(detectors=reports, ensembles=ensembles, n_cycles=int(frame.labels.size))


# ---------------------------------------------------------------------------
# Adaptive re-planning study.
# ---------------------------------------------------------------------------


@dataclass
class ReplanArmResult:
    injection_rate: float
    intervals: np.ndarray
    mean: float
    std: float
    sem: float
    by_scene: dict[str, list[int]] = field(default_factory=dict)


@dataclass
class ReplanStudyResult:
    arms: list[ReplanArmResult]
    horizon: int
    p: float
    n: int

    def cdf(self, arm_index: int) -> tuple[np.ndarray, np.ndarray]:
        values = np.sort(self.arms[arm_index].intervals)
        return values, np.arange(1, values.size + 1) / values.size


def adaptive_replan_study(
    injection_rates: Sequence[float] = (0.0, 0.035, 0.2),
    runs_per_arm: int = 100,
    seed: int = 0,
    p: float = 0.25,
    horizon: int = 20,
    M: int = 100,
    alpha: float = 0.05,
) -> ReplanStudyResult:
    """Run the re-plan-on-detection experiment across injection-rate arms.

    Every arm shares the scene templates; only the per-step injection hazard
    differs. The detector rank offset comes from the false-positive-bound
    calibration at the study quantile.
    """
    n = calibrate(M, p, "bound_fpr", alpha)
    arms = []
    for arm_index, rate in enumerate(injection_rates):
        scenarios = replan_scenarios(
            runs_per_arm, rate, seed + 1000 * arm_index, horizon
        )
        intervals: list[int] = []
        by_scene: dict[str, list[int]] = {}
        for sc in scenarios:
            result: ReplanRunResult = run_replan_scenario(sc, n=n, M=M, p=p)
            intervals.extend(result.intervals)
            by_scene.setdefault(result.scene_type, []).extend(result.intervals)
        values = np.asarray(intervals, dtype=float)
        arms.append(
            ReplanArmResult(
                injection_rate=rate,
                intervals=values,
                mean=float(values.mean()),
                std=float(values.std(ddof=1)) if values.size > 1 else 0.0,
                sem=float(values.std(ddof=1) / math.sqrt(values.size))
                if values.size > 1
                else 0.0,
                by_scene=by_scene,
            )
        )
    return ReplanStudyResult(arms=arms, horizon=horizon, p=p, n=n)


def trial_summary(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation across replicated trials."""
    if len(values) == 1:
        return float(values[0]), 0.0
    return float(statistics.fmean(values)), float(statistics.stdev(values))
