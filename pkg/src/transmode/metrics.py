"""Confusion matrices, per-mode and aggregate classification metrics, gap analysis."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .codes import MODE_INDEX, MODES, Mode
from .errors import EmptyEvaluation, SchemaError

INVALID = "Invalid"


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are truth, columns predictions, in canonical mode order.

    ``invalid[t]`` counts items of true mode ``t`` whose reply could not be
    parsed; they are scored as wrong and attributed to no predicted mode.
    """
    counts: np.ndarray
    invalid: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum() + self.invalid.sum())

    @property
    def invalid_count(self) -> int:
        return int(self.invalid.sum())

    def cell(self, truth: Mode, pred: Mode) -> int:
        return int(self.counts[MODE_INDEX[truth], MODE_INDEX[pred]])

    def to_dict(self) -> dict:
        return {
            "modes": [m.value for m in MODES],
            "counts": self.counts.tolist(),
            "invalid": self.invalid.tolist(),
        }


def confusion(truth: Sequence[Mode], pred: Sequence[Mode | None]) -> ConfusionMatrix:
    """Tally (truth, prediction) pairs. A ``None`` prediction is an invalid reply."""
    if len(truth) != len(pred):
        raise SchemaError(f"truth has {len(truth)} items, predictions {len(pred)}")
    if not truth:
        raise SchemaError("cannot build a confusion matrix from empty lists")
    m = len(MODES)
    counts = np.zeros((m, m), dtype=np.int64)
    invalid = np.zeros(m, dtype=np.int64)
    for t, p in zip(truth, pred):
        if p is None:
            invalid[MODE_INDEX[t]] += 1
        else:
            counts[MODE_INDEX[t], MODE_INDEX[p]] += 1
    return ConfusionMatrix(counts, invalid)


@dataclass(frozen=True)
class ModeScore:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvaluationReport:
    accuracy: float
    per_mode: Mapping[Mode, ModeScore]
    f1_macro: float
    f1_weighted: float
    n: int
    invalid_prediction_count: int = 0

    @property
    def gap_macro(self) -> float | None:
        return relative_gap(self.accuracy, self.f1_macro)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "f1_macro": self.f1_macro,
            "f1_weighted": self.f1_weighted,
            "gap_macro": self.gap_macro,
            "invalid_prediction_count": self.invalid_prediction_count,
            "per_mode": {m.value: vars(s) for m, s in self.per_mode.items()},
        }


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def score(cm: ConfusionMatrix) -> EvaluationReport:
    n = cm.n
    if n == 0:
        raise EmptyEvaluation("no samples to evaluate")
    tp = np.diag(cm.counts).astype(float)
    predicted = cm.counts.sum(axis=0).astype(float)
    support = cm.counts.sum(axis=1) + cm.invalid
    per_mode = {}
    for i, m in enumerate(MODES):
        p = _ratio(tp[i], predicted[i])
        r = _ratio(tp[i], float(support[i]))
        f1 = _ratio(2 * p * r, p + r) if tp[i] > 0 else 0.0
        per_mode[m] = ModeScore(p, r, f1, int(support[i]))
    present = [m for m in MODES if per_mode[m].support > 0]
    f1_macro = math.fsum(per_mode[m].f1 for m in present) / len(present)
    f1_weighted = math.fsum(per_mode[m].f1 * per_mode[m].support for m in present) / n
    return EvaluationReport(
        accuracy=float(tp.sum()) / n,
        per_mode=per_mode,
        f1_macro=f1_macro,
        f1_weighted=f1_weighted,
        n=n,
        invalid_prediction_count=cm.invalid_count,
    )


def evaluate(truth: Sequence[Mode], pred: Sequence[Mode | None]) -> EvaluationReport:
    return score(confusion(truth, pred))


def relative_gap(accuracy: float, f1_macro: float) -> float | None:
    """``(accuracy - f1_macro) / accuracy``; undefined (None) at zero accuracy."""
    if accuracy <= 0:
        return None
    return (accuracy - f1_macro) / accuracy


def improvement_percent(old: float, new: float) -> float | None:
    """Relative change ``(new - old) / old`` in percent; None when ``old`` is 0."""
    if old == 0:
        return None
    return (new - old) / old * 100.0


def format_percent(value: float | None, places: int = 1, signed: bool = True) -> str:
    if value is None:
        return "n/a"
    rounded = round(value, places)
    if rounded == 0:
        rounded = 0.0  # no "-0.0"
    return f"{rounded:+.{places}f}" if signed else f"{rounded:.{places}f}"


def gap_report(reports: Mapping[str, EvaluationReport]) -> dict:
    """Per-configuration relative gap and pairwise gap differences."""
    gaps = {key: relative_gap(r.accuracy, r.f1_macro) for key, r in reports.items()}
    deltas = {}
    for a, b in combinations(sorted(gaps), 2):
        ga, gb = gaps[a], gaps[b]
        deltas[f"{a} -> {b}"] = None if ga is None or gb is None else gb - ga
    return {"gap": gaps, "delta": deltas}


def render_table(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """Aligned plain-text table. First column left-aligned, the rest right-aligned."""
    cells = [[str(c) for c in header]] + [["" if c is None else str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]

    def line(r):
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))

    out = [line(cells[0]), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in cells[1:]]
    return "\n".join(out)


def report_json(report: EvaluationReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True)
