"""Visualization and inspection of learned label embeddings."""

from dataclasses import dataclass

import numpy as np

from pemi.errors import LevelError
from pemi.models.verbalizer import VerbalizerState, refine


@dataclass
class LabelEmbeddings:
    """Verbalizer rows of a level range, flattened for export."""

    levels: list[int]
    labels: list[str]
    vectors: np.ndarray  # one row per label

    @classmethod
    def from_verbalizer(cls, verbalizer: VerbalizerState, first: int, last: int) -> "LabelEmbeddings":
        """
        Collect M^first..M^last after refinement.

        Raises:
            LevelError: If the range is empty or leaves 1..Z
        """
        depth = verbalizer.hierarchy.depth
        if not 1 <= first <= last <= depth:
            raise LevelError(f"level range {first}..{last} is outside 1..{depth}")
        matrices = refine(verbalizer)
        levels, labels, rows = [], [], []
        for z in range(first, last + 1):
            names = verbalizer.hierarchy.labels(z)
            levels.extend([z] * len(names))
            labels.extend(names)
            rows.append(matrices[z - 1].data.astype(np.float64))
        return cls(levels=levels, labels=labels, vectors=np.concatenate(rows, axis=0))


from pemi.visualization.embeddings import (  # noqa: E402
    create_embedding_scatter,
    create_embedding_svg,
    pca_2d,
    write_embeddings_csv,
    write_scatter_html,
    write_scatter_svg,
)
from pemi.visualization.weights import WeightRow, format_weight_table, weight_table  # noqa: E402
