"""Per-level classification metrics."""

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix, f1_score

from pemi.errors import DataError
from pemi.models.hierarchy import LabelHierarchy


@dataclass(frozen=True)
class LevelMetrics:
    """
    Scores for one hierarchy level.

    Macro-F1 is the unweighted mean of per-class F1 over every label defined
    at the level, observed or not; a class with precision + recall = 0 has
    F1 = 0.
    """

    level: int
    labels: tuple[str, ...]
    macro_f1: float
    accuracy: float
    per_class_f1: dict[str, float]
    confusion: tuple[tuple[int, ...], ...]  # rows gold, columns predicted

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "labels": list(self.labels),
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "per_class_f1": dict(self.per_class_f1),
            "confusion": [list(row) for row in self.confusion],
        }

    @classmethod
    def from_dict(cls, values: dict) -> "LevelMetrics":
        return cls(
            level=int(values["level"]),
            labels=tuple(values["labels"]),
            macro_f1=float(values["macro_f1"]),
            accuracy=float(values["accuracy"]),
            per_class_f1={k: float(v) for k, v in values["per_class_f1"].items()},
            confusion=tuple(tuple(int(c) for c in row) for row in values["confusion"]),
        )


def level_metrics(
    gold: Sequence[int], predicted: Sequence[int], labels: Sequence[str], level: int = 1
) -> LevelMetrics:
    """
    Score integer predictions against gold indices into ``labels``.

    Raises:
        DataError: If the vectors are empty or differ in length
    """
    if len(gold) != len(predicted):
        raise DataError(f"{len(gold)} gold labels but {len(predicted)} predictions")
    if not gold:
        raise DataError("cannot score an empty prediction set")
    classes = list(range(len(labels)))
    y_true = np.asarray(gold, dtype=np.int64)
    y_pred = np.asarray(predicted, dtype=np.int64)
    per_class = f1_score(y_true, y_pred, labels=classes, average=None, zero_division=0)
    matrix = confusion_matrix(y_true, y_pred, labels=classes)
    return LevelMetrics(
        level=level,
        labels=tuple(labels),
        macro_f1=float(np.mean(per_class)),
        accuracy=float(accuracy_score(y_true, y_pred)),
        per_class_f1={name: float(score) for name, score in zip(labels, per_class)},
        confusion=tuple(tuple(int(c) for c in row) for row in matrix),
    )


@dataclass(frozen=True)
class MetricsReport:
    """Metrics for every level, top first."""

    levels: tuple[LevelMetrics, ...]

    @property
    def macro_f1(self) -> list[float]:
        return [m.macro_f1 for m in self.levels]

    @property
    def accuracy(self) -> list[float]:
        return [m.accuracy for m in self.levels]

    @property
    def summed_macro_f1(self) -> float:
        """Model-selection score: macro-F1 summed over levels."""
        return float(sum(self.macro_f1))

    def to_dict(self) -> dict:
        return {"levels": [m.to_dict() for m in self.levels]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, values: dict) -> "MetricsReport":
        return cls(tuple(LevelMetrics.from_dict(level) for level in values["levels"]))


def compute_report(
    hierarchy: LabelHierarchy, gold: Sequence[Sequence[int]], predicted: Sequence[Sequence[int]]
) -> MetricsReport:
    """
    Score per-instance index paths (one index per level) at every level.

    Raises:
        DataError: If there are no instances or the vectors disagree in length
    """
    if len(gold) != len(predicted):
        raise DataError(f"{len(gold)} gold paths but {len(predicted)} predicted paths")
    return MetricsReport(
        tuple(
            level_metrics(
                [path[z - 1] for path in gold],
                [path[z - 1] for path in predicted],
                hierarchy.labels(z),
                level=z,
            )
            for z in range(1, hierarchy.depth + 1)
        )
    )


def format_report(report: MetricsReport) -> str:
    """Render per-level summary lines followed by a label-wise F1 table."""
    lines = []
    for metrics in report.levels:
        lines.append(
            f"level {metrics.level}: macro-F1 {100 * metrics.macro_f1:.2f}  accuracy {100 * metrics.accuracy:.2f}"
        )
    for metrics in report.levels:
        lines.append("")
        lines.append(f"level {metrics.level} label-wise F1")
        width = max(len(name) for name in metrics.labels)
        for name in metrics.labels:
            lines.append(f"  {name.ljust(width)}  {100 * metrics.per_class_f1[name]:6.2f}")
    return "\n".join(lines) + "\n"
