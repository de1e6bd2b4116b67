"""Per-level, per-class instance counts for dataset splits."""

from dataclasses import dataclass

from pemi.data.dataset import DatasetBundle, label_indices
from pemi.models.hierarchy import LabelHierarchy

SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class ClassStats:
    """counts[z-1][label][split] for every label of every level."""

    hierarchy: LabelHierarchy
    counts: tuple[dict[str, dict[str, int]], ...]
    totals: dict[str, int]


def class_stats(bundle: DatasetBundle, hierarchy: LabelHierarchy) -> ClassStats:
    """
    Count instances per class at every level; labels with no instances get zeros.

    Raises:
        LabelPathError: If an instance's labels are not a path of the hierarchy
    """
    counts = tuple(
        {label: {split: 0 for split in SPLITS} for label in hierarchy.labels(z)}
        for z in range(1, hierarchy.depth + 1)
    )
    totals = {}
    for split, instances in bundle.splits().items():
        totals[split] = len(instances)
        for instance in instances:
            label_indices(hierarchy, instance.labels)
            for z, label in enumerate(instance.labels):
                counts[z][label][split] += 1
    return ClassStats(hierarchy, counts, totals)


def format_stats(stats: ClassStats) -> str:
    """Render aligned columns: level, relation, one count column per split."""
    header = ("Level", "Relation", "Train", "Dev", "Test")
    rows: list[tuple[str, ...]] = []
    for z, level_counts in enumerate(stats.counts, 1):
        for label, per_split in level_counts.items():
            rows.append((str(z), label, *(str(per_split[split]) for split in SPLITS)))
    rows.append(("", "Total", *(str(stats.totals.get(split, 0)) for split in SPLITS)))

    widths = [max(len(row[i]) for row in [header, *rows]) for i in range(len(header))]

    def render(row: tuple[str, ...]) -> str:
        cells = [row[0].ljust(widths[0]), row[1].ljust(widths[1])]
        cells += [cell.rjust(width) for cell, width in zip(row[2:], widths[2:])]
        return "  ".join(cells).rstrip()

    lines = [render(header), "  ".join("-" * width for width in widths)]
    lines += [render(row) for row in rows]
    return "\n".join(lines) + "\n"
