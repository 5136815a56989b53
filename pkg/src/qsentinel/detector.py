"""Rank-based anomaly detection on sampled predicted costs.

The detector flags a step when the observed cost is at least the (M-n)-th
smallest of M sampled predicted costs. Its false-positive and false-negative
rates are bounded by exact binomial tails, which also drive data-free
calibration of the rank offset n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import DetectionEvent

__all__ = [
    "CostSampleSet",
    "QuantileOracleResult",
    "InfeasibleCalibrationError",
    "detect_step",
    "qad_run",
    "is_degenerate_match",
    "fpr_bound",
    "fnr_bound",
    "calibrate",
    "quantile_oracle",
    "rank_fraction",
]


class InfeasibleCalibrationError(ValueError):
    """No rank offset can meet the requested bound."""

    def __init__(self, M: int, p: float, target: str, alpha: float, achievable: float):
        self.achievable = achievable
        super().__init__(
            f"no n in [0, {M - 1}] achieves {target} <= {alpha} at M={M}, p={p}; "
            f"tightest achievable bound is {achievable:.6g}"
        )


@dataclass(frozen=True)
class CostSampleSet:
    """M predicted-cost samples for one future step, sorted ascending."""

    step: int
    samples: np.ndarray

    def __post_init__(self) -> None:
        samples = np.sort(np.asarray(self.samples, dtype=float))
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("samples must be a nonempty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def M(self) -> int:
        return int(self.samples.size)

    def threshold(self, n: int) -> float:
        """The (M-n)-th smallest sample (duplicates counted by position)."""
        M = self.M
        if not 0 <= n <= M - 1:
            raise ValueError(f"n must lie in [0, M-1], got n={n}, M={M}")
        return float(self.samples[M - n - 1])


def detect_step(observed: float, sample_set: CostSampleSet, n: int) -> bool:
    """True iff the observed cost is >= the (M-n)-th smallest sample."""
    return observed >= sample_set.threshold(n)


def rank_fraction(observed: float, samples: np.ndarray) -> float:
    """Fraction of samples <= observed; detect_step fires iff this
    is >= (M-n)/M."""
    samples = np.asarray(samples)
    return float(np.searchsorted(samples, observed, side="right")) / samples.size


def is_degenerate_match(observed: float, sample_set: CostSampleSet) -> bool:
    """All samples identical and equal to the observed cost.

    This happens when the cost saturates (for instance, an agent far beyond
    every interaction range): the predicted cost distribution collapses to a
    point the observed cost reproduces exactly. There is no top-p tail to
    fall into, so such pairs carry no anomaly evidence.
    """
    return (
        sample_set.samples[0] == sample_set.samples[-1]
        and observed == sample_set.samples[0]
    )


def qad_run(
    cost_streams: Mapping[str, Sequence[CostSampleSet]],
    observed: Mapping[str, Sequence[float]],
    n: int,
    start_step: int = 0,
    detector_name: str = "qad",
    skip_degenerate_matches: bool = False,
) -> DetectionEvent | None:
    """Scan one planning cycle and return the first triggering step/agent.

    Steps are scanned in order; within a step, agents in the mapping's
    declared order (ties resolved by that order). Returns None if nothing
    triggers over the whole horizon. With ``skip_degenerate_matches``,
    (step, agent) pairs where the observed cost exactly reproduces an
    all-identical sample set are not eligible to trigger.
    """
    agent_ids = list(cost_streams.keys())
    if set(observed.keys()) != set(agent_ids):
        raise ValueError("observed costs must cover exactly the agents with cost streams")
    horizons = {len(v) for v in cost_streams.values()} | {len(observed[a]) for a in agent_ids}
    if len(horizons) > 1:
        raise ValueError(f"mismatched stream lengths: {sorted(horizons)}")
    horizon = horizons.pop() if horizons else 0

    for tau in range(horizon):
        for agent_id in agent_ids:
            sample_set = cost_streams[agent_id][tau]
            c_obs = float(observed[agent_id][tau])
            if skip_degenerate_matches and is_degenerate_match(c_obs, sample_set):
                continue
            if detect_step(c_obs, sample_set, n):
                return DetectionEvent(
                    wall_step=start_step + tau + 1,
                    agent_id=agent_id,
                    observed_cost=c_obs,
                    rank_threshold_cost=sample_set.threshold(n),
                    detector_name=detector_name,
                )
    return None


# ---------------------------------------------------------------------------
# Binomial tail bounds and data-free calibration.
# ---------------------------------------------------------------------------


def _binomial_pmf_terms(M: int, p: float) -> np.ndarray:
    """All M+1 binomial(M, p) probabilities via a log-space recurrence.

    The running log-probability is Kahan-compensated: it can pass through
    magnitudes near M*log(1-p), and uncompensated rounding there would cost
    ~1e-13 of absolute accuracy by M ~ 1000. Terms too small for float64
    underflow harmlessly to zero.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    log_terms = np.empty(M + 1)
    log_terms[0] = M * math.log1p(-p)
    log_ratio_const = math.log(p) - math.log1p(-p)
    running = log_terms[0]
    compensation = 0.0
    for i in range(M):
        delta = math.log(M - i) - math.log(i + 1) + log_ratio_const - compensation
        new = running + delta
        compensation = (new - running) - delta
        running = new
        log_terms[i + 1] = running
    return np.exp(log_terms)


def fpr_bound(M: int, n: int, p: float) -> float:
    """Upper bound on the false-positive rate: P[Binomial(M, p) <= n]."""
    if not 0 <= n <= M - 1:
        raise ValueError(f"n must lie in [0, M-1], got n={n}, M={M}")
    terms = _binomial_pmf_terms(M, p)
    return min(math.fsum(terms[: n + 1]), 1.0)


def fnr_bound(M: int, n: int, p: float) -> float:
    """Upper bound on the false-negative rate: P[Binomial(M, p) >= n+1]."""
    if not 0 <= n <= M - 1:
        raise ValueError(f"n must lie in [0, M-1], got n={n}, M={M}")
    terms = _binomial_pmf_terms(M, p)
    return min(math.fsum(terms[n + 1 :]), 1.0)


def calibrate(M: int, p: float, target: str, alpha: float) -> int:
    """Pick the rank offset n from the binomial bounds alone.

    ``target="bound_fpr"``: largest n with fpr_bound <= alpha (most sensitive
    detector that still honors the false-positive guarantee).
    ``target="bound_fnr"``: smallest n with fnr_bound <= alpha (fewest alarms
    that still honor the false-negative guarantee).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if target not in ("bound_fpr", "bound_fnr"):
        raise ValueError(f"target must be 'bound_fpr' or 'bound_fnr', got {target!r}")

    terms = _binomial_pmf_terms(M, p)
    if target == "bound_fpr":
        # fpr_bound is non-decreasing in n.
        best: int | None = None
        cdf = 0.0
        for n in range(M):
            cdf += terms[n]
            if cdf <= alpha:
                best = n
            else:
                break
        if best is None:
            raise InfeasibleCalibrationError(M, p, target, alpha, float(terms[0]))
        return best

    # fnr_bound is non-increasing in n.
    tail = math.fsum(terms)
    for n in range(M):
        tail -= terms[n]
        if tail <= alpha:
            return n
    raise InfeasibleCalibrationError(M, p, target, alpha, float(terms[M]))


# ---------------------------------------------------------------------------
# Brute-force quantile oracle.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantileOracleResult:
    """Large-sample estimate of where an observed cost sits in a distribution."""

    quantile: float
    threshold: float
    is_anomaly: bool
    n_samples: int


def quantile_oracle(
    observed: float,
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    p: float,
    rng: np.random.Generator,
    n_samples: int = 100_000,
) -> QuantileOracleResult:
    """Estimate the observed cost's quantile against fresh i.i.d. draws.

    ``sampler(rng, n)`` must return n i.i.d. costs. The observed cost is an
    anomaly when it strictly exceeds the empirical (1-p)-quantile threshold
    of the draws (strictness keeps a point-mass distribution, which the
    observed cost matches exactly, from counting as anomalous).
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    draws = np.asarray(sampler(rng, n_samples), dtype=float)
    if draws.shape != (n_samples,):
        raise ValueError("sampler must return exactly n_samples draws")
    quantile = float(np.count_nonzero(draws <= observed)) / n_samples
    threshold = float(np.quantile(draws, 1.0 - p))
    return QuantileOracleResult(
        quantile=quantile,
        threshold=threshold,
        is_anomaly=observed > threshold,
        n_samples=n_samples,
    )
