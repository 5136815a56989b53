"""Static report figures rendered to files next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evaluate import EvalReport, ReplanStudyResult


def save_roc_figure(report: EvalReport, path: str | Path) -> None:
    """One ROC panel with every detector that has a defined curve."""
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    for det in report.detectors:
        if det.curve is None:
            continue
        ax.plot(det.curve.fpr, det.curve.tpr, label=f"{det.name} (AUROC {det.curve.auroc:.3f})")
        if det.best is not None:
            ax.plot([det.best.fpr], [det.best.tpr], marker="o", ms=4, color="black")
    ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="gray", label="chance")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_replan_cdf_figure(study: ReplanStudyResult, path: str | Path) -> None:
    """Empirical CDFs of inter-replan intervals, one line per arm."""
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    for idx, arm in enumerate(study.arms):
        xs, ys = study.cdf(idx)
        ax.step(
            xs,
            ys,
            where="post",
            label=f"rate {arm.injection_rate:g} (mean {arm.mean:.2f})",
        )
    ax.set_xlabel("steps between re-plans")
    ax.set_ylabel("empirical CDF")
    ax.set_xlim(0, study.horizon + 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_score_histogram(
    scores: Sequence[float], labels: Sequence[bool], name: str, path: str | Path
) -> None:
    """Score distribution split by label, for quick debugging of a detector."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    ax.hist(neg, bins=40, alpha=0.6, label="negative", density=True)
    ax.hist(pos, bins=40, alpha=0.6, label="positive", density=True)
    ax.set_xlabel(f"{name} score")
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
