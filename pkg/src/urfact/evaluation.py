"""Benchmark harness: per-label precision/recall/F1 scoring, benchmark runs
over labeled claim datasets, evidence-threshold sweeps, trivial baselines,
and response-level factuality aggregation over QA datasets.

Metrics are computed twice per run, once with True as the positive class and
once with False. Unverifiable claims (no parseable verdict) are excluded from
metric denominators and tallied separately; coercing them to False would
silently distort recall. Metric aggregation is a sequential reduction over
items in dataset order, keeping the arithmetic deterministic regardless of
the pipeline's worker count.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .datasets import ClaimRecord, QARecord
from .llm import CostLedger
from .pipeline import FactCheckPipeline

logger = logging.getLogger(__name__)

METRICS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ConfusionCounts:
    """Confusion-matrix cells for one positive-label choice."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def scored(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class LabelMetrics:
    """Precision, recall, and F1 for one positive-label choice."""

    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def f1_value(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def metrics_from_counts(counts: ConfusionCounts) -> LabelMetrics:
    """P/R/F1 from confusion counts; zero denominators yield 0 by convention."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    return LabelMetrics(precision=precision, recall=recall, f1=f1_value(precision, recall))


@dataclass(frozen=True)
class ScoreResult:
    """Confusion counts and metrics for one positive label, plus the
    separately tallied unverifiable predictions."""

    counts: ConfusionCounts
    metrics: LabelMetrics
    unverifiable: int


def score(
    predictions: Sequence[bool | None],
    gold: Sequence[bool],
    positive: bool = True,
) -> ScoreResult:
    """Score aligned predictions against gold labels for one positive class.

    ``None`` predictions are unverifiable: excluded from the confusion counts
    and tallied separately.
    """
    if len(predictions) != len(gold):
        raise ValueError(
            f"predictions and gold must align: {len(predictions)} vs {len(gold)}"
        )
    tp = fp = fn = tn = unverifiable = 0
    for predicted, actual in zip(predictions, gold):
        if predicted is None:
            unverifiable += 1
            continue
        predicted_pos = predicted == positive
        actual_pos = actual == positive
        if predicted_pos and actual_pos:
            tp += 1
        elif predicted_pos:
            fp += 1
        elif actual_pos:
            fn += 1
        else:
            tn += 1
    counts = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)
    return ScoreResult(counts=counts, metrics=metrics_from_counts(counts), unverifiable=unverifiable)


@dataclass
class MetricsReport:
    """Per-label metrics and cost accounting for one benchmark run."""

    true_counts: ConfusionCounts
    false_counts: ConfusionCounts
    true_metrics: LabelMetrics
    false_metrics: LabelMetrics
    n_items: int
    n_scored: int
    unverifiable: int
    fallback_rate: float
    ledger: CostLedger
    wall_seconds: float = 0.0
    baselines: dict | None = None

    def to_dict(self) -> dict:
        data = {
            "schema_version": METRICS_SCHEMA_VERSION,
            "label_true": {
                "counts": self.true_counts.to_dict(),
                **self.true_metrics.to_dict(),
            },
            "label_false": {
                "counts": self.false_counts.to_dict(),
                **self.false_metrics.to_dict(),
            },
            "n_items": self.n_items,
            "n_scored": self.n_scored,
            "unverifiable": self.unverifiable,
            "fallback_rate": self.fallback_rate,
            "ledger": self.ledger.to_dict(),
            "wall_seconds": self.wall_seconds,
        }
        if self.baselines is not None:
            data["baselines"] = self.baselines
        return data


def run_benchmark(records: Sequence[ClaimRecord], pipeline: FactCheckPipeline) -> MetricsReport:
    """Fact-check every record in benchmark mode and score the verdicts.

    Wall-clock time is read through the pipeline's clock, which mock runs pin
    to a constant so serialized reports stay reproducible.
    """
    if not records:
        raise ValueError("empty dataset")
    started = pipeline.clock()
    result = pipeline.check_claims([record.claim_text for record in records])
    predictions = [
        check.verdict.label if check.verdict is not None else None for check in result.checks
    ]
    gold = [record.label for record in records]
    true_score = score(predictions, gold, positive=True)
    false_score = score(predictions, gold, positive=False)
    evidence_sets = [check.evidence for check in result.checks if check.evidence is not None]
    fallback_rate = (
        sum(1 for e in evidence_sets if e.fallback_used) / len(evidence_sets)
        if evidence_sets
        else 0.0
    )
    return MetricsReport(
        true_counts=true_score.counts,
        false_counts=false_score.counts,
        true_metrics=true_score.metrics,
        false_metrics=false_score.metrics,
        n_items=len(records),
        n_scored=true_score.counts.scored,
        unverifiable=true_score.unverifiable,
        fallback_rate=fallback_rate,
        ledger=result.ledger,
        wall_seconds=pipeline.clock() - started,
    )


@dataclass(frozen=True)
class SweepPoint:
    """One evidence-threshold setting and its outcome."""

    tau: int
    f1_true: float
    total_cost: float
    fallback_rate: float

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "f1_true": self.f1_true,
            "total_cost": self.total_cost,
            "fallback_rate": self.fallback_rate,
        }


def sweep_threshold(
    records: Sequence[ClaimRecord],
    pipeline_factory: Callable[[int], FactCheckPipeline],
    taus: Iterable[int],
) -> list[SweepPoint]:
    """Run one benchmark per threshold over identical inputs.

    ``pipeline_factory`` must build a fresh pipeline (fresh ledger and cache)
    for each threshold so points are comparable. Any per-point failure aborts
    the sweep; comparability requires completeness.
    """
    taus = sorted(set(taus))
    if not taus:
        raise ValueError("taus must be non-empty")
    if taus[0] < 1:
        raise ValueError("taus must be >= 1")
    points: list[SweepPoint] = []
    for tau in taus:
        report = run_benchmark(records, pipeline_factory(tau))
        points.append(
            SweepPoint(
                tau=tau,
                f1_true=report.true_metrics.f1,
                total_cost=report.ledger.total,
                fallback_rate=report.fallback_rate,
            )
        )
    return points


def render_sweep_chart(points: Sequence[SweepPoint], path: str | Path) -> None:
    """Render the two-axis threshold chart (F1 left, cost right) to a PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    taus = [p.tau for p in points]
    fig, ax_f1 = plt.subplots(figsize=(6, 4))
    ax_f1.plot(taus, [p.f1_true for p in points], "o-", color="tab:blue", label="F1 (true)")
    ax_f1.set_xlabel("evidence threshold")
    ax_f1.set_ylabel("F1 (label = true)", color="tab:blue")
    ax_f1.tick_params(axis="y", labelcolor="tab:blue")
    ax_cost = ax_f1.twinx()
    ax_cost.plot(taus, [p.total_cost for p in points], "s-", color="tab:red", label="cost")
    ax_cost.set_ylabel("total cost", color="tab:red")
    ax_cost.tick_params(axis="y", labelcolor="tab:red")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@dataclass
class FactualityReport:
    """Aggregate factuality of one model's responses over a QA set."""

    model_id: str
    total_claims: int
    true_claims: int
    false_claim_count: int
    unverifiable_claims: int
    percent_true_claims: float
    cost: float
    questions: int
    questions_without_claims: int
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "schema_version": METRICS_SCHEMA_VERSION,
            "model_id": self.model_id,
            "total_claims": self.total_claims,
            "true_claims": self.true_claims,
            "false_claim_count": self.false_claim_count,
            "unverifiable_claims": self.unverifiable_claims,
            "percent_true_claims": self.percent_true_claims,
            "cost": self.cost,
            "questions": self.questions,
            "questions_without_claims": self.questions_without_claims,
            "wall_seconds": self.wall_seconds,
        }


def evaluate_llm_factuality(
    qa_records: Sequence[QARecord],
    responses: dict[str, str],
    pipeline: FactCheckPipeline,
    model_id: str,
) -> FactualityReport:
    """Decompose and verify every response; aggregate claim-level verdicts.

    Every QA id must have a response. A response yielding zero extractable
    claims contributes nothing to the fractions and is logged.
    """
    missing = [record.id for record in qa_records if record.id not in responses]
    if missing:
        raise ValueError(f"missing responses for ids: {', '.join(missing)}")
    started = pipeline.clock()
    ledger = CostLedger()
    true_claims = false_claims = unverifiable = 0
    no_claim_questions = 0
    for record in qa_records:
        report = pipeline.run(responses[record.id])
        if not report.claims:
            no_claim_questions += 1
            logger.info("response %s yielded no extractable claims", record.id)
        for check in report.claims:
            if check.verdict is None:
                unverifiable += 1
            elif check.verdict.label:
                true_claims += 1
            else:
                false_claims += 1
        ledger.merge(report.ledger)
    total = true_claims + false_claims + unverifiable
    return FactualityReport(
        model_id=model_id,
        total_claims=total,
        true_claims=true_claims,
        false_claim_count=false_claims,
        unverifiable_claims=unverifiable,
        percent_true_claims=true_claims / total if total else 0.0,
        cost=ledger.total,
        questions=len(qa_records),
        questions_without_claims=no_claim_questions,
        wall_seconds=pipeline.clock() - started,
    )


def _both_labels(predictions: Sequence[bool | None], gold: Sequence[bool]) -> dict:
    return {
        "true": score(predictions, gold, positive=True).metrics.to_dict(),
        "false": score(predictions, gold, positive=False).metrics.to_dict(),
    }


def _expected_random_metrics(gold: Sequence[bool], positive: bool) -> LabelMetrics:
    """Closed-form expected metrics for label-frequency-weighted random guessing."""
    n = len(gold)
    p_label = sum(1 for g in gold if g == positive) / n
    q_label = p_label  # prediction rate matches label frequency
    tp = n * p_label * q_label
    fp = n * (1 - p_label) * q_label
    fn = n * p_label * (1 - q_label)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return LabelMetrics(precision=precision, recall=recall, f1=f1_value(precision, recall))


def baselines(gold: Sequence[bool], seed: int | None = None) -> dict:
    """Trivial-predictor metrics: Always-True, Always-False, and Random.

    Always-True/False are computed analytically through the same scorer as
    real runs. Random reports label-frequency-weighted expected metrics; with
    a seed, a drawn empirical variant is added.
    """
    if not gold:
        raise ValueError("gold labels must be non-empty")
    n = len(gold)
    out = {
        "always_true": _both_labels([True] * n, gold),
        "always_false": _both_labels([False] * n, gold),
        "random": {
            "true": _expected_random_metrics(gold, True).to_dict(),
            "false": _expected_random_metrics(gold, False).to_dict(),
        },
    }
    if seed is not None:
        import random as _random

        rng = _random.Random(seed)
        p_true = sum(gold) / n
        drawn = [rng.random() < p_true for _ in range(n)]
        out["random_empirical"] = _both_labels(drawn, gold)
    return out


def format_metrics_table(report: MetricsReport) -> str:
    """Fixed-width console table with one row block per label."""
    lines = [
        f"{'':<16}{'Prec':>8}{'Recall':>8}{'F1':>8}",
        f"{'label=true':<16}"
        f"{report.true_metrics.precision:>8.2f}{report.true_metrics.recall:>8.2f}"
        f"{report.true_metrics.f1:>8.2f}",
        f"{'label=false':<16}"
        f"{report.false_metrics.precision:>8.2f}{report.false_metrics.recall:>8.2f}"
        f"{report.false_metrics.f1:>8.2f}",
        f"items={report.n_items} scored={report.n_scored} "
        f"unverifiable={report.unverifiable} fallback_rate={report.fallback_rate:.2f}",
        f"cost={report.ledger.total:.5f} "
        f"(llm={report.ledger.llm_cost:.5f} search={report.ledger.search_cost:.5f})",
    ]
    if report.baselines:
        lines.append(f"{'baselines':<16}{'Prec':>8}{'Recall':>8}{'F1':>8}")
        for name, per_label in report.baselines.items():
            for label_name, metrics in per_label.items():
                lines.append(
                    f"{name + '/' + label_name:<16}"
                    f"{metrics['precision']:>8.2f}{metrics['recall']:>8.2f}{metrics['f1']:>8.2f}"
                )
    return "\n".join(lines)


def write_report(data: dict, path: str | Path) -> None:
    """Write a report dict as stable, human-readable JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(data, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
