"""Normalized parent→child weight tables."""

import math
from dataclasses import dataclass

import numpy as np

from pemi.errors import ConfigError
from pemi.models.verbalizer import VerbalizerState, normalize_weights


@dataclass(frozen=True)
class WeightRow:
    parent: str
    children: tuple[tuple[str, float], ...]  # (child, percent)


def _round_to_total(percents: list[float], total_hundredths: int = 10_000) -> list[float]:
    """Round to 2 decimals so the rounded values sum to exactly 100.00."""
    scaled = [p * 100.0 for p in percents]
    floors = [math.floor(s) for s in scaled]
    remainder = total_hundredths - sum(floors)
    order = sorted(range(len(scaled)), key=lambda i: (floors[i] - scaled[i], i))
    for i in order[: max(remainder, 0)]:
        floors[i] += 1
    return [f / 100.0 for f in floors]


def weight_table(verbalizer: VerbalizerState, z: int) -> list[WeightRow]:
    """
    Read f(W^z) as percentages, children in hierarchy order.

    Raises:
        ConfigError: If the verbalizer has no weight units (flat mode)
    """
    units = verbalizer.units
    if units is None:
        raise ConfigError("weight inspection needs an hlr verbalizer, this one is flat")
    hierarchy = verbalizer.hierarchy
    weights = normalize_weights(units, z).data.astype(np.float64)
    parents, children = hierarchy.labels(z), hierarchy.labels(z + 1)
    rows = []
    for j, parent in enumerate(parents):
        support = hierarchy.children(z, j)
        percents = _round_to_total([100.0 * weights[j, i] for i in support])
        rows.append(WeightRow(parent, tuple((children[i], p) for i, p in zip(support, percents))))
    return rows


def format_weight_table(rows: list[WeightRow], upper: str = "Level 1", lower: str = "Level 2") -> str:
    """Render ``parent  child (pct), child (pct)`` lines under a two-column header."""
    width = max([len(upper), *(len(row.parent) for row in rows)])
    lines = [f"{upper.ljust(width)}  {lower}"]
    for row in rows:
        listing = ", ".join(f"{child} ({pct:.2f})" for child, pct in row.children)
        lines.append(f"{row.parent.ljust(width)}  {listing}")
    return "\n".join(lines) + "\n"
