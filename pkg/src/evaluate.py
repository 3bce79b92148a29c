"""
Evaluation Module
=================
Scores relevance judgments against gold labels and compares the
BaselineOnly and ExtendedTask prompt variants (deltas, per-pair
disagreements, exact McNemar test), with a comparison plot.
"""

import io
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import binomtest
from sklearn.metrics import confusion_matrix

from .data_cleaner import NewsArticle
from .errors import ConsistencyError
from .io_utils import atomic_write_bytes, canonical_json, hex_digest, write_jsonl
from .llm.mock_backend import is_relevant_by_shared_terms
from .parsing import Label, RelevanceJudgment, parser_failure_rate
from .prompting import PromptVariant
from .retrieval import CandidateSet

logger = logging.getLogger(__name__)

Pair = Tuple[str, str]


class GoldLabel(BaseModel):
    model_config = ConfigDict(frozen=True)

    target_id: str
    context_id: str
    label: Label


class Counts(BaseModel):
    model_config = ConfigDict(frozen=True)

    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)
    coverage: float = Field(default=0.0, ge=0, le=1)


class PairOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    target_id: str
    context_id: str
    gold: Label
    predicted: Label

    @property
    def correct(self) -> bool:
        return self.gold is self.predicted


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: PromptVariant
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    coverage: float
    parser_failure_rate: float
    gold_fingerprint: str
    outcomes: tuple[PairOutcome, ...] = ()


class Disagreement(BaseModel):
    model_config = ConfigDict(frozen=True)

    target_id: str
    context_id: str
    gold: Label
    baseline: Label
    extended: Label


class VariantComparison(BaseModel):
    model_config = ConfigDict(frozen=True)

    delta_precision: float
    delta_recall: float
    delta_f1: float
    baseline_only_correct: int   # b: baseline right, extended wrong
    extended_only_correct: int   # c: extended right, baseline wrong
    p_value: float
    disagreements: tuple[Disagreement, ...] = ()


# ============================================================================
# GOLD LABELS
# ============================================================================

def _check_unique_gold(gold: Sequence[GoldLabel]) -> Dict[Pair, Label]:
    index: Dict[Pair, Label] = {}
    for g in gold:
        pair = (g.target_id, g.context_id)
        if pair in index:
            raise ConsistencyError(f"duplicate gold pair {pair}")
        index[pair] = g.label
    return index


def load_gold(path: Union[str, Path]) -> List[GoldLabel]:
    """Gold JSON-lines: target_id, context_id, label in {relevant, irrelevant}."""
    gold = []
    try:
        lines = Path(path).read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise ConsistencyError(f"cannot read gold file {path}: {e}") from e
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            gold.append(GoldLabel.model_validate(json.loads(line)))
        except ValueError as e:
            raise ConsistencyError(f"gold line {line_no}: {e}") from e
    _check_unique_gold(gold)
    return gold


def write_gold(gold: Iterable[GoldLabel], path: Union[str, Path]) -> Path:
    return write_jsonl(path, ({'target_id': g.target_id, 'context_id': g.context_id,
                               'label': g.label.value} for g in gold))


def derive_mock_gold(target: NewsArticle, candidates: CandidateSet,
                     corpus_index: Dict[str, NewsArticle]) -> List[GoldLabel]:
    """Gold labels from the mock backend's two-shared-title-terms rule."""
    gold = []
    for context_id in candidates.ids:
        relevant = is_relevant_by_shared_terms(target.title, corpus_index[context_id].title)
        gold.append(GoldLabel(
            target_id=target.id,
            context_id=context_id,
            label=Label.RELEVANT if relevant else Label.IRRELEVANT,
        ))
    return gold


def gold_fingerprint(gold: Sequence[GoldLabel]) -> str:
    pairs = sorted([g.target_id, g.context_id] for g in gold)
    return hex_digest(canonical_json(pairs))


# ============================================================================
# METRICS
# ============================================================================

def _join(judgments: Sequence[RelevanceJudgment], gold: Sequence[GoldLabel]) -> List[PairOutcome]:
    predicted: Dict[Pair, Label] = {}
    for j in judgments:
        pair = (j.target_id, j.context_id)
        if pair in predicted:
            raise ConsistencyError(f"duplicate judgment for pair {pair}")
        predicted[pair] = j.label

    outcomes = []
    for pair, label in sorted(_check_unique_gold(gold).items()):
        if pair in predicted:
            outcomes.append(PairOutcome(target_id=pair[0], context_id=pair[1],
                                        gold=label, predicted=predicted[pair]))
    return outcomes


def confusion(judgments: Sequence[RelevanceJudgment],
              gold: Sequence[GoldLabel]) -> Counts:
    """
    Join on (target_id, context_id); Relevant is the positive class.

    Gold pairs without a judgment only lower coverage; judgments without a
    gold pair are ignored.
    """
    outcomes = _join(judgments, gold)
    coverage = len(outcomes) / len(gold) if gold else 0.0
    if not outcomes:
        return Counts(coverage=coverage)

    y_true = np.array([o.gold is Label.RELEVANT for o in outcomes])
    y_pred = np.array([o.predicted is Label.RELEVANT for o in outcomes])
    tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=[False, True]).ravel()
    return Counts(tp=int(tp), fp=int(fp), fn=int(fn), tn=int(tn), coverage=coverage)


def score(counts: Counts) -> Dict[str, float]:
    """Precision, recall and F1 with 0 for every zero denominator."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {'precision': precision, 'recall': recall, 'f1': f1}


def build_report(variant: PromptVariant, judgments: Sequence[RelevanceJudgment],
                 gold: Sequence[GoldLabel]) -> EvalReport:
    """Counts, metrics, coverage and parser failure rate for one variant."""
    counts = confusion(judgments, gold)
    metrics = score(counts)
    return EvalReport(
        variant=variant,
        tp=counts.tp, fp=counts.fp, fn=counts.fn, tn=counts.tn,
        precision=metrics['precision'],
        recall=metrics['recall'],
        f1=metrics['f1'],
        coverage=counts.coverage,
        parser_failure_rate=parser_failure_rate(judgments),
        gold_fingerprint=gold_fingerprint(gold),
        outcomes=tuple(_join(judgments, gold)),
    )


def mcnemar_exact(b: int, c: int) -> float:
    """Two-sided exact McNemar p-value over b and c discordant pairs."""
    if b + c == 0:
        return 1.0
    return float(min(1.0, binomtest(c, n=b + c, p=0.5, alternative='two-sided').pvalue))


def compare_variants(report_baseline: EvalReport, report_extended: EvalReport) -> VariantComparison:
    """
    Extended minus baseline deltas, disagreements and McNemar p-value.

    Raises ConsistencyError when the reports were scored on different gold sets.
    """
    if report_baseline.gold_fingerprint != report_extended.gold_fingerprint:
        raise ConsistencyError('variant reports were computed over different gold sets')

    baseline = {(o.target_id, o.context_id): o for o in report_baseline.outcomes}
    extended = {(o.target_id, o.context_id): o for o in report_extended.outcomes}

    b = c = 0
    disagreements = []
    for pair in sorted(baseline.keys() & extended.keys()):
        ob, oe = baseline[pair], extended[pair]
        if ob.correct and not oe.correct:
            b += 1
        elif oe.correct and not ob.correct:
            c += 1
        if ob.predicted is not oe.predicted:
            disagreements.append(Disagreement(
                target_id=pair[0], context_id=pair[1], gold=ob.gold,
                baseline=ob.predicted, extended=oe.predicted,
            ))

    return VariantComparison(
        delta_precision=report_extended.precision - report_baseline.precision,
        delta_recall=report_extended.recall - report_baseline.recall,
        delta_f1=report_extended.f1 - report_baseline.f1,
        baseline_only_correct=b,
        extended_only_correct=c,
        p_value=mcnemar_exact(b, c),
        disagreements=tuple(disagreements),
    )


# ============================================================================
# REPORTING
# ============================================================================

def reports_to_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    rows = []
    for r in reports:
        rows.append({
            'variant': r.variant.value,
            'tp': r.tp, 'fp': r.fp, 'fn': r.fn, 'tn': r.tn,
            'precision': r.precision, 'recall': r.recall, 'f1': r.f1,
            'coverage': r.coverage, 'parser_failure_rate': r.parser_failure_rate,
        })
    return pd.DataFrame(rows).set_index('variant')


def format_report_table(reports: Sequence[EvalReport],
                        comparison: Optional[VariantComparison] = None) -> str:
    table = reports_to_frame(reports).to_string(float_format=lambda v: f"{v:.4f}")
    if comparison is None:
        return table
    return (
        f"{table}\n\n"
        f"  Δprecision {comparison.delta_precision:+.4f}   "
        f"Δrecall {comparison.delta_recall:+.4f}   Δf1 {comparison.delta_f1:+.4f}\n"
        f"  McNemar b={comparison.baseline_only_correct} c={comparison.extended_only_correct} "
        f"p={comparison.p_value:.4f}   disagreements={len(comparison.disagreements)}"
    )


def eval_payload(reports: Sequence[EvalReport], comparison: VariantComparison) -> dict:
    return {
        'reports': [r.model_dump(mode='json', exclude={'outcomes'}) for r in reports],
        'comparison': comparison.model_dump(mode='json'),
    }


def plot_variant_comparison(reports: Sequence[EvalReport], save_path: Union[str, Path]) -> Path:
    """Bar chart of precision/recall/F1 per variant."""
    metrics = ['precision', 'recall', 'f1']
    x = np.arange(len(metrics))
    width = 0.8 / max(len(reports), 1)
    colors = ['#3b82f6', '#10b981', '#f59e0b', '#ef4444']

    fig, ax = plt.subplots(figsize=(8, 5))
    for i, r in enumerate(reports):
        values = [getattr(r, m) for m in metrics]
        bars = ax.bar(x + i * width, values, width, label=r.variant.value,
                      color=colors[i % len(colors)], edgecolor='white')
        for bar, value in zip(bars, values):
            ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 0.02,
                    f'{value:.3f}', ha='center', fontsize=9)

    ax.set_xticks(x + width * (len(reports) - 1) / 2)
    ax.set_xticklabels([m.upper() if m == 'f1' else m.title() for m in metrics])
    ax.set_ylim(0, 1.1)
    ax.set_ylabel('Score')
    ax.set_title('Prompt Variant Comparison')
    ax.legend()
    ax.grid(True, axis='y', alpha=0.3)
    fig.tight_layout()

    buffer = io.BytesIO()
    try:
        fig.savefig(buffer, format='png', dpi=150, bbox_inches='tight')
    finally:
        plt.close(fig)
    save_path = atomic_write_bytes(save_path, buffer.getvalue())
    logger.info(f"  ✓ Saved: {save_path}")
    return save_path
