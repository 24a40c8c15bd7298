"""Exact-match entity scoring and multi-run aggregation."""

from __future__ import annotations

import statistics
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Corpus, Sentence, extract_spans


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float
    gold: int
    predicted: int
    correct: int


@dataclass(frozen=True)
class ScoreReport:
    per_class: dict[str, ClassScore]
    micro: ClassScore
    runs: tuple[float, ...] = ()
    mean: float | None = None
    std: float | None = None

    def lines(self) -> list[str]:
        """Machine-readable ``key=value`` lines."""
        out = []
        for cls, s in sorted(self.per_class.items()):
            out.append(_kv(f"class={cls}", s))
        out.append(_kv("micro", self.micro))
        if self.runs:
            out.append(f"runs n={len(self.runs)} mean_f1={self.mean:.4f} std_f1={self.std:.4f}")
        return out

    def table(self) -> str:
        rows = [f"{'class':<10}{'prec':>8}{'rec':>8}{'f1':>8}{'gold':>7}{'pred':>7}{'corr':>7}"]
        items = sorted(self.per_class.items()) + [("micro", self.micro)]
        for name, s in items:
            rows.append(f"{name:<10}{s.precision:>8.4f}{s.recall:>8.4f}{s.f1:>8.4f}"
                        f"{s.gold:>7d}{s.predicted:>7d}{s.correct:>7d}")
        if self.runs:
            rows.append(f"micro f1 over {len(self.runs)} runs: {self.mean:.4f} +- {self.std:.4f}")
        return "\n".join(rows)


def _kv(prefix: str, s: ClassScore) -> str:
    return (f"{prefix} precision={s.precision:.4f} recall={s.recall:.4f} f1={s.f1:.4f} "
            f"gold={s.gold} predicted={s.predicted} correct={s.correct}")


def prf(gold: int, predicted: int, correct: int) -> ClassScore:
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return ClassScore(p, r, f, gold, predicted, correct)


def score_entities(gold: Corpus | Sequence[Sentence], predicted: Sequence[Sequence[str]],
                   scheme: str | None = None, strict_predictions: bool = False) -> ScoreReport:
    """Score predicted label sequences against gold sentences.

    A predicted mention is correct only when class, start and end all match.
    Predictions are decoded leniently unless ``strict_predictions`` is set.
    """
    gold = list(gold)
    if len(gold) != len(predicted):
        raise ValueError(f"{len(gold)} gold sentences but {len(predicted)} predictions")
    g_count: Counter[str] = Counter()
    p_count: Counter[str] = Counter()
    c_count: Counter[str] = Counter()
    for idx, (sent, pred) in enumerate(zip(gold, predicted)):
        if len(sent) != len(pred):
            raise ValueError(f"sentence {idx}: {len(sent)} gold labels but "
                             f"{len(pred)} predicted")
        gold_spans = set(extract_spans(sent.labels, sent.scheme, strict=True))
        pred_spans = set(extract_spans(pred, scheme or sent.scheme,
                                       strict=strict_predictions))
        g_count.update(s[0] for s in gold_spans)
        p_count.update(s[0] for s in pred_spans)
        c_count.update(s[0] for s in gold_spans & pred_spans)
    classes = sorted(set(g_count) | set(p_count))
    per_class = {c: prf(g_count[c], p_count[c], c_count[c]) for c in classes}
    micro = prf(sum(g_count.values()), sum(p_count.values()), sum(c_count.values()))
    return ScoreReport(per_class, micro)


def aggregate_runs(reports: Iterable[ScoreReport]) -> ScoreReport:
    """Mean and sample standard deviation of micro F1; per-class scores averaged."""
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    # sort so the result does not depend on run order
    f1s = tuple(sorted(r.micro.f1 for r in reports))
    mean = statistics.fmean(f1s)
    std = statistics.stdev(f1s) if len(f1s) > 1 else 0.0
    classes = sorted({c for r in reports for c in r.per_class})
    per_class = {c: _mean_score([r.per_class[c] for r in reports if c in r.per_class])
                 for c in classes}
    return ScoreReport(per_class, _mean_score([r.micro for r in reports]), f1s, mean, std)


def _mean_score(scores: list[ClassScore]) -> ClassScore:
    n = len(scores)

    def avg(attr):
        return sorted(getattr(s, attr) for s in scores)

    return ClassScore(
        statistics.fmean(avg("precision")), statistics.fmean(avg("recall")),
        statistics.fmean(avg("f1")), round(sum(s.gold for s in scores) / n),
        round(sum(s.predicted for s in scores) / n), round(sum(s.correct for s in scores) / n))
