import math

import numpy as np
import pytest

from qsentinel.evaluate import (
    RocCurve,
    UndefinedMetricError,
    adaptive_replan_study,
    auroc_pairwise,
    best_point,
    empirical_rates,
    evaluate_frame,
    log_frame,
    roc,
    trial_summary,
    wilson_interval,
)


class TestRoc:
    def test_perfect_ranking(self):
        labels = [False] * 5 + [True] * 5
        scores = list(range(10))
        assert roc(scores, labels).auroc == 1.0

    def test_inverted_scores_complement(self):
        rng = np.random.default_rng(30)
        labels = rng.random(200) < 0.3
        scores = rng.normal(size=200) + labels
        a = roc(scores, labels).auroc
        b = roc(-scores, labels).auroc
        assert a + b == pytest.approx(1.0, abs=1e-12)

    def test_independent_scores_near_half(self):
        rng = np.random.default_rng(31)
        labels = rng.random(10_000) < 0.5
        scores = rng.normal(size=10_000)
        assert roc(scores, labels).auroc == pytest.approx(0.5, abs=0.03)

    def test_single_class_rejected(self):
        with pytest.raises(UndefinedMetricError):
            roc([1.0, 2.0], [True, True])

    def test_endpoints_and_sorting(self):
        rng = np.random.default_rng(32)
        labels = rng.random(50) < 0.4
        labels[0], labels[1] = True, False
        scores = rng.normal(size=50)
        curve = roc(scores, labels)
        assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
        assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
        assert np.all(np.diff(curve.fpr) >= 0)
        assert np.all(np.diff(curve.tpr) >= 0)

    def test_matches_pairwise_estimator(self):
        rng = np.random.default_rng(33)
        for trial in range(20):
            n = int(rng.integers(10, 400))
            labels = rng.random(n) < rng.uniform(0.2, 0.8)
            if labels.all() or not labels.any():
                continue
            # Quantized scores force ties through both code paths.
            scores = np.round(rng.normal(size=n) + labels, 1)
            assert roc(scores, labels).auroc == pytest.approx(
                auroc_pairwise(scores, labels), abs=1e-9
            )

    def test_handles_infinite_scores(self):
        labels = [True, False, True, False]
        scores = [math.inf, -math.inf, 1.0, -math.inf]
        curve = roc(scores, labels)
        assert curve.auroc == 1.0


class TestBestPoint:
    def test_perfect_curve(self):
        curve = roc([0, 0, 1, 1], [False, False, True, True])
        bp = best_point(curve)
        assert (bp.fpr, bp.fnr) == (0.0, 0.0)

    def test_three_point_example(self):
        curve = RocCurve(
            fpr=np.array([0.0, 0.1, 1.0]),
            tpr=np.array([0.0, 0.9, 1.0]),
            thresholds=np.array([np.inf, 0.5, -np.inf]),
            auroc=0.9,
        )
        bp = best_point(curve)
        assert bp.fpr == pytest.approx(0.1)
        assert bp.fnr == pytest.approx(0.1)
        assert bp.parameter == 0.5

    def test_diagonal_ties_to_origin(self):
        curve = RocCurve(
            fpr=np.array([0.0, 0.5, 1.0]),
            tpr=np.array([0.0, 0.5, 1.0]),
            thresholds=np.array([np.inf, 0.0, -np.inf]),
            auroc=0.5,
        )
        bp = best_point(curve)
        assert (bp.fpr, bp.tpr) == (0.0, 0.0)

    def test_on_curve_and_maximal(self):
        rng = np.random.default_rng(34)
        labels = rng.random(300) < 0.3
        scores = rng.normal(size=300) + 1.5 * labels
        curve = roc(scores, labels)
        bp = best_point(curve)
        gains = curve.tpr - curve.fpr
        assert bp.tpr - bp.fpr == pytest.approx(float(gains.max()))
        idx = np.where((curve.fpr == bp.fpr) & (curve.tpr == bp.tpr))[0]
        assert idx.size >= 1


class TestRates:
    def test_all_negative_detector(self):
        labels = [True] * 3 + [False] * 7
        rates = empirical_rates([False] * 10, labels)
        assert rates.fpr == 0.0 and rates.fnr == 1.0

    def test_all_positive_detector(self):
        labels = [True] * 3 + [False] * 7
        rates = empirical_rates([True] * 10, labels)
        assert rates.fpr == 1.0 and rates.fnr == 0.0

    def test_wilson_interval_contains_phat(self):
        lo, hi = wilson_interval(8, 100)
        assert lo < 0.08 < hi
        assert 0.0 <= lo and hi <= 1.0
        assert wilson_interval(0, 0) == (0.0, 1.0)

    def test_wilson_known_value(self):
        # 5 successes in 10 trials at 95%: classic Wilson bounds.
        lo, hi = wilson_interval(5, 10)
        assert lo == pytest.approx(0.2366, abs=2e-3)
        assert hi == pytest.approx(0.7634, abs=2e-3)


def synthetic_records(n=60, seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        label = bool(rng.random() < 0.3)
        base = 2.0 if label else 0.0
        scores = {
            name: float(rng.normal(base, 1.0))
            for name in ("qad", "likelihood", "udt", "pdt", "ttc", "reach")
        }
        verdicts = {name: bool(s > 1.0) for name, s in scores.items()}
        records.append({"label": label, "scores": scores, "verdicts": verdicts})
    return records


class TestFrames:
    def test_log_frame_and_report(self):
        records = synthetic_records()
        frame = log_frame(records)
        report = evaluate_frame(frame)
        assert report.n_cycles == len(records)
        names = [d.name for d in report.detectors]
        assert names == ["qad", "likelihood", "udt", "pdt", "ttc", "reach"]
        for det in report.detectors:
            assert det.curve is not None and 0.0 <= det.curve.auroc <= 1.0
        table = report.auroc_table()
        assert sorted(table, key=lambda r: -r[1]) == table

    def test_ensemble_rates_containment(self):
        records = synthetic_records(200, seed=1)
        frame = log_frame(records)
        report = evaluate_frame(frame)
        member_fprs = [d.rates.fpr for d in report.detectors]
        member_fnrs = [d.rates.fnr for d in report.detectors]
        assert report.ensembles["all_of"].fpr <= min(member_fprs) + 1e-12
        assert report.ensembles["any_of"].fnr <= min(member_fnrs) + 1e-12


class TestTrialSummary:
    def test_single_trial(self):
        assert trial_summary([0.9]) == (0.9, 0.0)

    def test_mean_std(self):
        mean, std = trial_summary([0.9, 0.94, 0.92])
        assert mean == pytest.approx(0.92)
        assert std == pytest.approx(0.02, abs=1e-12)


class TestReplanStudy:
    def test_small_study_shapes(self):
        study = adaptive_replan_study(
            injection_rates=(0.0, 0.2), runs_per_arm=9, seed=1, M=50, horizon=12
        )
        assert len(study.arms) == 2
        for arm in study.arms:
            assert arm.intervals.size >= 9
            assert set(arm.by_scene) <= {"follow_lead", "adjacent_traffic", "sparse_traffic"}
            xs, ys = study.cdf(0)
            assert ys[-1] == pytest.approx(1.0)

    def test_dense_injections_shorten_intervals(self):
        study = adaptive_replan_study(
            injection_rates=(0.0, 0.3), runs_per_arm=24, seed=2, M=50, horizon=16
        )
        assert study.arms[1].mean < study.arms[0].mean
