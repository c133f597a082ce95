"""Intent accuracy, entity-level micro F-score, Overall score and the two-proportion z-test."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .tagging import extract_spans, restore_b_tags


@dataclass
class MetricsReport:
    intent_accuracy: float
    entity_precision: float
    entity_recall: float
    entity_f1: float
    overall: float
    counts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return (f"acc {100 * self.intent_accuracy:.1f}  F {100 * self.entity_f1:.1f}  "
                f"overall {self.overall:.1f}")


@dataclass
class SignificanceResult:
    z: float
    p_two_tailed: float
    pooled_p: float
    significant_at: dict
    defined: bool = True

    def to_json(self) -> dict:
        d = asdict(self)
        d["significant_at"] = {str(k): v for k, v in self.significant_at.items()}
        return d


def intent_accuracy(pred: Sequence[int], gold: Sequence[int]) -> float:
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predictions for {len(gold)} gold labels")
    if not gold:
        raise ValueError("intent_accuracy of an empty set")
    return sum(int(p == g) for p, g in zip(pred, gold)) / len(gold)


def span_counts(pred_io_tags, gold_bio_tags) -> tuple[int, int, int]:
    """Corpus-level (tp, fp, fn) with exact (start, end, type) span matching."""
    if len(pred_io_tags) != len(gold_bio_tags):
        raise ValueError("different number of predicted and gold utterances")
    tp = fp = fn = 0
    for i, (pred, gold) in enumerate(zip(pred_io_tags, gold_bio_tags)):
        if len(pred) != len(gold):
            raise ValueError(f"utterance {i}: {len(pred)} predicted tags for {len(gold)} gold")
        p = extract_spans(restore_b_tags(pred))
        g = extract_spans(gold)
        hit = len(p & g)
        tp += hit
        fp += len(p) - hit
        fn += len(g) - hit
    return tp, fp, fn


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def entity_f_score(pred_io_tags, gold_bio_tags) -> tuple[float, float, float]:
    return prf(*span_counts(pred_io_tags, gold_bio_tags))


def overall_score(accuracy_pct: float, f1_pct: float) -> float:
    for v in (accuracy_pct, f1_pct):
        if not 0.0 <= v <= 100.0:
            raise ValueError(f"percentage {v} outside [0, 100]")
    return (accuracy_pct + f1_pct) / 2.0


def build_report(pred_intents, gold_intents, pred_io_tags, gold_bio_tags) -> MetricsReport:
    acc = intent_accuracy(pred_intents, gold_intents)
    tp, fp, fn = span_counts(pred_io_tags, gold_bio_tags)
    p, r, f = prf(tp, fp, fn)
    correct = sum(int(a == b) for a, b in zip(pred_intents, gold_intents))
    return MetricsReport(acc, p, r, f, overall_score(100 * acc, 100 * f),
                         {"tp": tp, "fp": fp, "fn": fn, "n_intents_correct": correct,
                          "n_intents_total": len(gold_intents)})


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def z_test_proportions(k1: int, n1: int, k2: int, n2: int) -> SignificanceResult:
    """Two-tailed z-test for the difference of two proportions with pooled variance."""
    for k, n in ((k1, n1), (k2, n2)):
        if n < 1 or not 0 <= k <= n:
            raise ValueError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    pooled = (k1 + k2) / (n1 + n2)
    var = pooled * (1 - pooled) * (1 / n1 + 1 / n2)
    if var <= 0:
        # both groups all-success or all-failure: no spread to test against
        return SignificanceResult(0.0, 1.0, pooled, {0.05: False, 0.01: False}, defined=False)
    z = (k1 / n1 - k2 / n2) / math.sqrt(var)
    # erfc keeps precision in the far tail where 1 - cdf would cancel
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return SignificanceResult(z, p, pooled, {0.05: p < 0.05, 0.01: p < 0.01})
