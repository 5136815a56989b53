"""Operator command line: generate suites, simulate, calibrate, evaluate,
run the re-planning study, and invoke the brute-force oracles.

Exit codes: 0 success, 2 usage/missing input, 3 schema violation,
4 infeasible calibration.
"""

from __future__ import annotations

import csv
import logging
import os
import sys
import time
import zlib
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .core import DetectorConfig
from .detector import (
    CostSampleSet,
    InfeasibleCalibrationError,
    calibrate,
    detect_step,
    fnr_bound,
    fpr_bound,
    quantile_oracle,
    rank_fraction,
)
from .evaluate import (
    adaptive_replan_study,
    evaluate_frame,
    log_frame,
    trial_summary,
)
from .oracles import exact_binomial_cdf, exact_binomial_tail, float_to_fraction_parts
from .planner import PlannerConfig
from .scenario import Scenario, ScenarioSchemaError, load_suite, save_suite
from .simulate import SimConfig, load_jsonl, run_suite, write_csv, write_jsonl, write_timings_csv
from .suite import generate_suite

EXIT_SCHEMA = 3
EXIT_INFEASIBLE = 4


def _setup_logging() -> None:
    level = os.environ.get("QS_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


@click.group()
def main() -> None:
    """Task-relevant prediction-failure monitoring toolkit."""
    _setup_logging()


@main.command()
@click.option("--cycles", type=int, default=2000, show_default=True, help="Total planning cycles in the suite.")
@click.option("--positive-rate", type=float, default=0.035, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def generate(cycles: int, positive_rate: float, seed: int, out: Path) -> None:
    """Write a scenario suite JSON file."""
    scenarios = generate_suite(cycles, positive_rate, seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_suite(scenarios, out)
    click.echo(f"wrote {len(scenarios)} scenarios to {out}")


def _reseed(scenario: Scenario, seed: int) -> Scenario:
    new_seed = int(
        np.random.SeedSequence(
            seed, spawn_key=(zlib.crc32(scenario.scenario_id.encode()),)
        ).generate_state(1)[0]
    )
    return Scenario(
        scenario_id=scenario.scenario_id,
        scene_type=scenario.scene_type,
        duration=scenario.duration,
        dt=scenario.dt,
        ego_init=scenario.ego_init,
        goal=scenario.goal,
        reference=scenario.reference,
        agents=scenario.agents,
        static_obstacles=scenario.static_obstacles,
        injections=scenario.injections,
        seed=new_seed,
    )


@main.command()
@click.option("--suite", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="JSON SimConfig file; flags override its fields.")
@click.option("--seed", type=int, default=None, help="Override scenario seeds deterministically.")
@click.option("--workers", type=int, default=os.cpu_count() or 1, show_default="cpu count")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--detectors", default=None, help="Comma list to restrict detectors (default: all).")
@click.option("--detector-m", "M", type=int, default=None, help="Sample count M (default 100).")
@click.option("--detector-n", "n", type=int, default=None, help="Rank offset n (default 1).")
@click.option("--detector-p", "p", type=float, default=None, help="Anomaly quantile p (default 0.05).")
@click.option("--oracle-samples", type=int, default=None, help="Label oracle draws (default 100000).")
@click.option("--labels/--no-labels", default=True, show_default=True)
def simulate(
    suite: Path,
    config_path: Path | None,
    seed: int | None,
    workers: int,
    out_dir: Path,
    detectors: str | None,
    M: int | None,
    n: int | None,
    p: float | None,
    oracle_samples: int | None,
    labels: bool,
) -> None:
    """Run a suite and write JSONL + CSV logs."""
    try:
        scenarios = load_suite(suite)
        base = SimConfig.from_file(config_path) if config_path else SimConfig()
    except (ScenarioSchemaError, ValueError, TypeError, KeyError) as exc:
        click.echo(f"schema error: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)
    if seed is not None:
        scenarios = [_reseed(sc, seed) for sc in scenarios]
    det = base.detector
    config = replace(
        base,
        detector=DetectorConfig(
            M=det.M if M is None else M,
            n=det.n if n is None else n,
            p=det.p if p is None else p,
        ),
        detectors=tuple(v.strip() for v in detectors.split(",")) if detectors else base.detectors,
        oracle_samples=base.oracle_samples if oracle_samples is None else oracle_samples,
        label_cycles=labels,
    )
    logs = run_suite(scenarios, config, workers=workers)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(logs, out_dir / "log.jsonl")
    write_csv(logs, out_dir / "log.csv")
    write_timings_csv(logs, out_dir / "timings.csv")
    n_cycles = sum(len(log.cycles) for log in logs)
    click.echo(f"wrote {n_cycles} cycles to {out_dir / 'log.jsonl'} and log.csv")


@main.command("calibrate")
@click.option("--m", "-M", "M", type=int, required=True)
@click.option("--p", type=float, required=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--target", type=click.Choice(["fpr", "fnr"]), required=True)
def calibrate_cmd(M: int, p: float, alpha: float, target: str) -> None:
    """Pick the rank offset n from the binomial bounds (data-free)."""
    try:
        n = calibrate(M, p, f"bound_{target}", alpha)
    except InfeasibleCalibrationError as exc:
        click.echo(f"infeasible: {exc}", err=True)
        sys.exit(EXIT_INFEASIBLE)
    bound = fpr_bound(M, n, p) if target == "fpr" else fnr_bound(M, n, p)
    click.echo(f"M={M} n={n} p={p} bound_{target}={bound:.6g}")


@main.command()
@click.option("--log", "log_paths", type=click.Path(exists=True, dir_okay=False, path_type=Path), multiple=True, required=True, help="JSONL log; repeat for trial replication.")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
def evaluate(log_paths: tuple[Path, ...], out_dir: Path, plots: bool) -> None:
    """ROC curves, AUROC/FPR/FNR tables, ensemble rates, optional figures."""
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for path in log_paths:
        frame = log_frame(load_jsonl(path))
        reports.append(evaluate_frame(frame))

    with open(out_dir / "roc.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "detector", "threshold", "fpr", "tpr"])
        for trial, report in enumerate(reports):
            for det in report.detectors:
                if det.curve is None:
                    continue
                for thr, fpr, tpr in zip(det.curve.thresholds, det.curve.fpr, det.curve.tpr):
                    writer.writerow([trial, det.name, thr, fpr, tpr])

    with open(out_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "detector",
                "auroc_mean",
                "auroc_std",
                "best_fpr",
                "best_fnr",
                "best_parameter",
                "empirical_fpr",
                "empirical_fpr_lo",
                "empirical_fpr_hi",
                "empirical_fnr",
                "empirical_fnr_lo",
                "empirical_fnr_hi",
            ]
        )
        first = reports[0]
        for idx, det in enumerate(first.detectors):
            aurocs = [
                r.detectors[idx].curve.auroc
                for r in reports
                if r.detectors[idx].curve is not None
            ]
            auroc_mean, auroc_std = trial_summary(aurocs) if aurocs else (float("nan"), 0.0)
            best = det.best
            writer.writerow(
                [
                    det.name,
                    f"{auroc_mean:.6f}",
                    f"{auroc_std:.6f}",
                    "" if best is None else f"{best.fpr:.6f}",
                    "" if best is None else f"{best.fnr:.6f}",
                    "" if best is None else f"{best.parameter:.6g}",
                    f"{det.rates.fpr:.6f}",
                    f"{det.rates.fpr_ci[0]:.6f}",
                    f"{det.rates.fpr_ci[1]:.6f}",
                    f"{det.rates.fnr:.6f}",
                    f"{det.rates.fnr_ci[0]:.6f}",
                    f"{det.rates.fnr_ci[1]:.6f}",
                ]
            )
        for mode, rates in first.ensembles.items():
            writer.writerow(
                [
                    f"ensemble_{mode}",
                    "",
                    "",
                    "",
                    "",
                    "",
                    f"{rates.fpr:.6f}",
                    f"{rates.fpr_ci[0]:.6f}",
                    f"{rates.fpr_ci[1]:.6f}",
                    f"{rates.fnr:.6f}",
                    f"{rates.fnr_ci[0]:.6f}",
                    f"{rates.fnr_ci[1]:.6f}",
                ]
            )

    if plots:
        from .plots import save_roc_figure

        save_roc_figure(reports[0], out_dir / "roc.svg")
    for name, auroc in reports[0].auroc_table():
        click.echo(f"{name}: AUROC {auroc:.4f}")
    click.echo(f"wrote {out_dir / 'roc.csv'} and summary.csv")


@main.command("replan-study")
@click.option("--arms", default="0,0.035,0.2", show_default=True, help="Comma list of per-step injection hazards.")
@click.option("--runs", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--horizon", type=int, default=20, show_default=True)
@click.option("--p", type=float, default=0.25, show_default=True)
@click.option("--m", "-M", "M", type=int, default=100, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
def replan_study(
    arms: str,
    runs: int,
    seed: int,
    horizon: int,
    p: float,
    M: int,
    out_dir: Path,
    plots: bool,
) -> None:
    """Inter-replan interval study across injection-rate arms."""
    rates = tuple(float(v) for v in arms.split(","))
    study = adaptive_replan_study(
        injection_rates=rates, runs_per_arm=runs, seed=seed, p=p, horizon=horizon, M=M
    )
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "intervals.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["injection_rate", "scene_type", "interval_steps"])
        for arm in study.arms:
            for scene, values in sorted(arm.by_scene.items()):
                for v in values:
                    writer.writerow([arm.injection_rate, scene, v])

    with open(out_dir / "means.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["injection_rate", "scene_type", "mean_interval", "count"])
        for arm in study.arms:
            writer.writerow([arm.injection_rate, "all", f"{arm.mean:.4f}", arm.intervals.size])
            for scene, values in sorted(arm.by_scene.items()):
                writer.writerow(
                    [arm.injection_rate, scene, f"{np.mean(values):.4f}", len(values)]
                )

    with open(out_dir / "cdf.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["injection_rate", "interval_steps", "cdf"])
        for idx, arm in enumerate(study.arms):
            xs, ys = study.cdf(idx)
            for x, y in zip(xs, ys):
                writer.writerow([arm.injection_rate, x, f"{y:.6f}"])

    if plots:
        from .plots import save_replan_cdf_figure

        save_replan_cdf_figure(study, out_dir / "replan_cdf.svg")
    for arm in study.arms:
        click.echo(
            f"rate {arm.injection_rate:g}: mean interval {arm.mean:.3f} steps "
            f"(sem {arm.sem:.3f}, {arm.intervals.size} intervals)"
        )


@main.command()
@click.option("--kind", type=click.Choice(["binomial", "quantile", "latency"]), required=True)
@click.option("--m", "-M", "M", type=int, default=100, show_default=True)
@click.option("--n", type=int, default=1, show_default=True)
@click.option("--p", type=float, default=0.05, show_default=True)
@click.option("--observed", type=float, default=0.0, show_default=True)
@click.option("--mu", type=float, default=0.0, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--samples", "-N", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--invocations", type=int, default=10_000, show_default=True)
def oracle(
    kind: str,
    M: int,
    n: int,
    p: float,
    observed: float,
    mu: float,
    sigma: float,
    samples: int,
    seed: int,
    invocations: int,
) -> None:
    """Brute-force oracles used by the test suite, plus the latency timer."""
    if kind == "binomial":
        num, den = float_to_fraction_parts(p)
        cdf = exact_binomial_cdf(M, n, num, den)
        tail = exact_binomial_tail(M, n, num, den)
        click.echo(f"exact P[X<=n]={float(cdf):.12g} P[X>=n+1]={float(tail):.12g}")
        click.echo(f"fpr_bound={fpr_bound(M, n, p):.12g} fnr_bound={fnr_bound(M, n, p):.12g}")
    elif kind == "quantile":
        rng = np.random.default_rng(seed)
        result = quantile_oracle(
            observed, lambda r, k: mu + sigma * r.standard_normal(k), p, rng, samples
        )
        click.echo(
            f"quantile={result.quantile:.6f} threshold={result.threshold:.6f} "
            f"anomaly={result.is_anomaly}"
        )
    else:
        rng = np.random.default_rng(seed)
        sample_set = CostSampleSet(step=1, samples=rng.standard_normal(M))
        draws = rng.standard_normal(invocations)
        t0 = time.perf_counter()
        hits = 0
        for c in draws:
            if detect_step(float(c), sample_set, n):
                hits += 1
            rank_fraction(float(c), sample_set.samples)
        elapsed = time.perf_counter() - t0
        per_call_ms = elapsed / invocations * 1e3
        click.echo(
            f"invocations={invocations} total_s={elapsed:.4f} "
            f"per_invocation_ms={per_call_ms:.6f} detections={hits}"
        )


if __name__ == "__main__":
    main()
