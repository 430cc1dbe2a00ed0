"""Token accuracy, CoNLL-style span precision/recall/F1, fold aggregation."""

from __future__ import annotations

import json
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .data import split_label
from .errors import ContractError


def token_accuracy(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> float:
    if len(gold) != len(pred):
        raise ContractError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    correct = total = 0
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ContractError(f"sentence {i}: {len(g)} gold labels vs {len(p)} predicted")
        correct += sum(a == b for a, b in zip(g, p))
        total += len(g)
    if total == 0:
        raise ContractError("accuracy over an empty corpus is undefined")
    return correct / total


def extract_spans(labels: Sequence[str]) -> set:
    """``{(type, start, end)}`` with inclusive ``end``.

    An I-X whose predecessor is not B-X/I-X opens a new span, as conlleval does.
    """
    spans = set()
    cur_type, cur_start = None, None
    for i, lab in enumerate(labels):
        prefix, typ = split_label(lab)
        continues = prefix == "I" and typ == cur_type
        if cur_type is not None and not continues:
            spans.add((cur_type, cur_start, i - 1))
            cur_type = None
        if prefix != "O" and not continues:
            cur_type, cur_start = typ, i
    if cur_type is not None:
        spans.add((cur_type, cur_start, len(labels) - 1))
    return spans


def spans_to_labels(spans, length: int) -> list:
    labels = ["O"] * length
    for typ, start, end in spans:
        labels[start] = f"B-{typ}"
        for j in range(start + 1, end + 1):
            labels[j] = f"I-{typ}"
    return labels


def _prf(correct: int, n_pred: int, n_gold: int):
    p = correct / n_pred if n_pred else 0.0
    r = correct / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass
class TypeScore:
    precision: float
    recall: float
    f1: float
    correct: int
    predicted: int
    gold: int


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    correct: int
    predicted: int
    gold: int
    per_type: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "micro": {
                "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "correct": self.correct, "predicted": self.predicted, "gold": self.gold,
            },
            "per_type": {t: vars(s) for t, s in sorted(self.per_type.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        rows = [(t, s) for t, s in sorted(self.per_type.items())]
        rows.append(("micro", self))
        width = max(8, max(len(r[0]) for r in rows))
        head = f"{'type':<{width}}  {'P':>7}  {'R':>7}  {'F1':>7}  {'correct':>7}  {'pred':>6}  {'gold':>6}"
        lines = [head, "-" * len(head)]
        for name, s in rows:
            lines.append(
                f"{name:<{width}}  {100 * s.precision:7.2f}  {100 * s.recall:7.2f}  {100 * s.f1:7.2f}"
                f"  {s.correct:7d}  {s.predicted:6d}  {s.gold:6d}"
            )
        return "\n".join(lines)


def span_micro_prf(gold: Sequence[set], pred: Sequence[set]) -> EvalReport:
    """Exact-match span scoring pooled over sentences and types."""
    if len(gold) != len(pred):
        raise ContractError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    correct, n_pred, n_gold = Counter(), Counter(), Counter()
    for g, p in zip(gold, pred):
        g, p = set(g), set(p)
        for span in g:
            n_gold[span[0]] += 1
        for span in p:
            n_pred[span[0]] += 1
        for span in g & p:
            correct[span[0]] += 1
    per_type = {}
    for typ in set(n_gold) | set(n_pred):
        per_type[typ] = TypeScore(*_prf(correct[typ], n_pred[typ], n_gold[typ]),
                                  correct[typ], n_pred[typ], n_gold[typ])
    c, np_, ng = sum(correct.values()), sum(n_pred.values()), sum(n_gold.values())
    return EvalReport(*_prf(c, np_, ng), c, np_, ng, per_type)


def ner_report(gold_labels, pred_labels) -> EvalReport:
    return span_micro_prf([extract_spans(g) for g in gold_labels],
                          [extract_spans(p) for p in pred_labels])


@dataclass
class CrossvalSummary:
    mean: float
    stddev: float
    per_fold: list


def crossval_aggregate(per_fold: Sequence[float]) -> CrossvalSummary:
    """Mean and sample standard deviation over fold scores."""
    if len(per_fold) < 2:
        raise ContractError("cross-validation needs at least two folds")
    values = [float(v) for v in per_fold]
    return CrossvalSummary(statistics.fmean(values), statistics.stdev(values), values)
