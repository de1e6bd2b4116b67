"""Hierarchical label refining verbalizer.

Only the bottom-level label embeddings and one weight unit per hierarchy edge
are trainable. Upper-level verbalizer matrices are rebuilt from them on every
forward pass:

    M^z = f(W^z) · M^{z+1}        for z = Z-1 down to 1

where f is a row normalization restricted to each parent's children.
"""

import logging
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from config import DEFAULT_INIT_STD, DEFAULT_NORMALIZATION, DEFAULT_VERBALIZER_MODE
from pemi.errors import CheckpointError, ConfigError, DimensionError
from pemi.models.hierarchy import LabelHierarchy
from pemi.models.template import Vocab, tokenize
from pemi.numcore import (
    Tensor,
    l1_normalize_rows,
    matmul,
    reshape,
    row_softmax,
    scatter_matrix,
)

logger = logging.getLogger(__name__)

VERBALIZER_MODES = ("hlr", "flat")
NORMALIZATIONS = ("softmax", "l1")

BOTTOM_NAME = "verbalizer.bottom"


def unit_name(z: int) -> str:
    return f"verbalizer.units.{z}"


def level_name(z: int) -> str:
    return f"verbalizer.level.{z}"


def _check_choice(field_name: str, value: str, choices: tuple[str, ...]) -> None:
    if value not in choices:
        raise ConfigError(f"{field_name} must be one of {choices}, got {value!r}")


def verbalizer_shapes(
    hierarchy: LabelHierarchy, d_model: int, mode: str = DEFAULT_VERBALIZER_MODE
) -> dict[str, tuple[int, ...]]:
    """
    Get the trainable verbalizer tensors and their shapes.

    In ``hlr`` mode this is the bottom matrix plus one unit vector per level
    above the bottom; in ``flat`` mode every level owns its own matrix.
    """
    _check_choice("verbalizer.mode", mode, VERBALIZER_MODES)
    if mode == "flat":
        return {level_name(z): (size, d_model) for z, size in enumerate(hierarchy.sizes, 1)}
    shapes: dict[str, tuple[int, ...]] = {BOTTOM_NAME: (hierarchy.sizes[-1], d_model)}
    for z in range(1, hierarchy.depth):
        shapes[unit_name(z)] = (len(hierarchy.edges_at(z)),)
    return shapes


@dataclass(frozen=True)
class WeightUnits:
    """One raw scalar per edge, level by level, ordered as ``hierarchy.edges_at(z)``."""

    hierarchy: LabelHierarchy
    values: tuple[Tensor, ...]
    normalization: str = DEFAULT_NORMALIZATION

    def __post_init__(self) -> None:
        _check_choice("verbalizer.normalization", self.normalization, NORMALIZATIONS)
        if len(self.values) != self.hierarchy.depth - 1:
            raise DimensionError(
                f"expected {self.hierarchy.depth - 1} unit vectors, got {len(self.values)}"
            )
        for z, units in enumerate(self.values, 1):
            expected = (len(self.hierarchy.edges_at(z)),)
            if units.shape != expected:
                raise DimensionError(f"units at level {z} have shape {units.shape}, expected {expected}")

    def at(self, z: int) -> Tensor:
        return self.values[z - 1]

    @property
    def count(self) -> int:
        return sum(units.size for units in self.values)


def init_weight_units(
    hierarchy: LabelHierarchy, seed: int = 0, normalization: str = DEFAULT_NORMALIZATION
) -> WeightUnits:
    """
    Create trainable weight units with a uniform start.

    Softmax units start at 0 and L1 units at 1, so every parent initially
    weighs its children equally. The start is constant; ``seed`` is accepted
    for call-site symmetry with the other initializers.
    """
    _check_choice("verbalizer.normalization", normalization, NORMALIZATIONS)
    fill = 0.0 if normalization == "softmax" else 1.0
    values = tuple(
        Tensor(np.full(len(hierarchy.edges_at(z)), fill), requires_grad=True, name=unit_name(z))
        for z in range(1, hierarchy.depth)
    )
    logger.debug("initialized %d weight units (seed %d, %s)", sum(v.size for v in values), seed, normalization)
    return WeightUnits(hierarchy, values, normalization)


def normalize_weights(units: WeightUnits, z: int) -> Tensor:
    """
    Build f(W^z), the |L^z|×|L^{z+1}| row-stochastic weight matrix.

    Entries off the support set are exactly 0.

    Raises:
        LevelError: If z is the bottom level
        DegenerateRowError: In L1 mode, if a parent's units are all zero
    """
    hierarchy = units.hierarchy
    edges = hierarchy.edges_at(z)
    shape = (hierarchy.sizes[z - 1], hierarchy.sizes[z])
    raw = scatter_matrix(units.at(z), [p for p, _ in edges], [c for _, c in edges], shape)
    mask = hierarchy.support_mask(z)
    if units.normalization == "l1":
        return l1_normalize_rows(raw, mask)
    return row_softmax(raw, mask)


class VerbalizerState:
    """Trainable verbalizer tensors bound to a hierarchy."""

    def __init__(
        self,
        hierarchy: LabelHierarchy,
        parameters: Mapping[str, Tensor],
        mode: str = DEFAULT_VERBALIZER_MODE,
        normalization: str = DEFAULT_NORMALIZATION,
    ) -> None:
        """
        Args:
            hierarchy: Label hierarchy the tensors are laid out for
            parameters: Tensors by name, exactly those of verbalizer_shapes()
            mode: ``hlr`` (refined) or ``flat`` (independent per-level matrices)
            normalization: f for hlr mode, ``softmax`` or ``l1``

        Raises:
            ConfigError: On an unknown mode or normalization
            DimensionError: If a tensor is missing, unexpected or mis-shaped
        """
        _check_choice("verbalizer.mode", mode, VERBALIZER_MODES)
        _check_choice("verbalizer.normalization", normalization, NORMALIZATIONS)
        anchor = level_name(1) if mode == "flat" else BOTTOM_NAME
        if anchor not in parameters:
            raise DimensionError(f"verbalizer parameters lack {anchor!r}")
        d_model = parameters[anchor].shape[-1]
        shapes = verbalizer_shapes(hierarchy, d_model, mode)
        if set(parameters) != set(shapes):
            extra = sorted(set(parameters) ^ set(shapes))
            raise DimensionError(f"verbalizer parameter set mismatch at {extra[0]!r}")
        for name, shape in shapes.items():
            if parameters[name].shape != shape:
                raise DimensionError(f"{name} has shape {parameters[name].shape}, expected {shape}")

        self._hierarchy = hierarchy
        self._mode = mode
        self._normalization = normalization
        self._d_model = d_model
        self._parameters = {name: parameters[name] for name in shapes}

    @property
    def hierarchy(self) -> LabelHierarchy:
        return self._hierarchy

    @property
    def mode(self) -> str:
        return self._mode

    @property
    def normalization(self) -> str:
        return self._normalization

    @property
    def d_model(self) -> int:
        return self._d_model

    @property
    def parameters(self) -> dict[str, Tensor]:
        return dict(self._parameters)

    @property
    def bottom(self) -> Tensor:
        """M^Z (the trainable bottom matrix in hlr mode)."""
        name = level_name(self._hierarchy.depth) if self._mode == "flat" else BOTTOM_NAME
        return self._parameters[name]

    @property
    def units(self) -> Optional[WeightUnits]:
        if self._mode == "flat":
            return None
        values = tuple(self._parameters[unit_name(z)] for z in range(1, self._hierarchy.depth))
        return WeightUnits(self._hierarchy, values, self._normalization)

    def replace(self, updated: Mapping[str, Tensor]) -> "VerbalizerState":
        """Get a state with some tensors swapped (names must already exist)."""
        unknown = sorted(set(updated) - set(self._parameters))
        if unknown:
            raise DimensionError(f"unknown verbalizer parameter {unknown[0]!r}")
        merged = {**self._parameters, **updated}
        return VerbalizerState(self._hierarchy, merged, self._mode, self._normalization)

    def project(self) -> "VerbalizerState":
        """Clip L1 weight units onto [0, inf); other states are returned unchanged."""
        if self._mode == "flat" or self._normalization != "l1":
            return self
        clipped = {}
        for z in range(1, self._hierarchy.depth):
            name = unit_name(z)
            units = self._parameters[name]
            if (units.data < 0).any():
                clipped[name] = Tensor(np.maximum(units.data, 0.0), requires_grad=True, name=name, dtype=units.dtype)
        return self.replace(clipped) if clipped else self


def refine(state: VerbalizerState) -> list[Tensor]:
    """
    Compute the verbalizer matrices M^1..M^Z (list index z-1).

    In hlr mode each upper matrix is f(W^z)·M^{z+1}, bottom-up; gradients
    reach both the units and the bottom matrix. In flat mode the per-level
    matrices are returned as they are.
    """
    hierarchy = state.hierarchy
    if state.mode == "flat":
        return [state.parameters[level_name(z)] for z in range(1, hierarchy.depth + 1)]

    units = state.units
    matrices = [state.bottom]
    for z in range(hierarchy.depth - 1, 0, -1):
        matrices.append(matmul(normalize_weights(units, z), matrices[-1]))
    matrices.reverse()
    return matrices


@dataclass(frozen=True)
class LevelPrediction:
    logits: Tensor
    probs: Tensor


def predict_level(h_prime: Tensor, matrix: Tensor) -> LevelPrediction:
    """
    Score the labels of one level: ŷ = softmax(M h′).

    Raises:
        DimensionError: If h′ is not a vector of the matrix width
    """
    if h_prime.ndim != 1 or matrix.ndim != 2 or matrix.shape[1] != h_prime.shape[0]:
        raise DimensionError(f"cannot project h' {h_prime.shape} with verbalizer {matrix.shape}")
    n_labels, width = matrix.shape
    logits = reshape(matmul(matrix, reshape(h_prime, (width, 1))), (n_labels,))
    probs = reshape(row_softmax(reshape(logits, (1, n_labels))), (n_labels,))
    return LevelPrediction(logits=logits, probs=probs)


def _label_rows(
    labels: tuple[str, ...],
    d_model: int,
    token_table: Optional[np.ndarray],
    vocab: Optional[Vocab],
    rng: np.random.Generator,
    init_std: float,
) -> tuple[np.ndarray, int]:
    rows = []
    warm = 0
    for label in labels:
        token_id = None
        if vocab is not None and token_table is not None:
            tokens = tokenize(label)
            token_id = vocab.lookup(tokens[0]) if tokens else None
        if token_id is not None:
            rows.append(np.array(token_table[token_id], dtype=np.float32))
            warm += 1
        else:
            rows.append(rng.normal(0.0, init_std, size=d_model).astype(np.float32))
    return np.stack(rows), warm


def init_verbalizer(
    hierarchy: LabelHierarchy,
    d_model: int,
    seed: int = 0,
    mode: str = DEFAULT_VERBALIZER_MODE,
    normalization: str = DEFAULT_NORMALIZATION,
    token_table: Optional[np.ndarray] = None,
    vocab: Optional[Vocab] = None,
    init_std: float = DEFAULT_INIT_STD,
) -> VerbalizerState:
    """
    Create a fresh verbalizer.

    Label rows are warm-started from the token embedding of the label's first
    word when ``token_table`` and ``vocab`` know it, otherwise drawn from
    Normal(0, init_std) with ``seed``.

    Args:
        hierarchy: Label hierarchy
        d_model: Embedding width
        seed: Seed for label rows without a vocabulary match
        mode: ``hlr`` or ``flat``
        normalization: ``softmax`` or ``l1`` (hlr only)
        token_table: Encoder token-embedding table (vocab_size×d_model)
        vocab: Vocabulary matching ``token_table``
        init_std: Standard deviation for random rows
    """
    _check_choice("verbalizer.mode", mode, VERBALIZER_MODES)
    if token_table is not None and token_table.shape[1] != d_model:
        raise DimensionError(f"token table width {token_table.shape[1]} differs from d_model {d_model}")
    rng = np.random.default_rng(seed)

    parameters: dict[str, Tensor] = {}
    levels = range(1, hierarchy.depth + 1) if mode == "flat" else [hierarchy.depth]
    warm_total = 0
    for z in levels:
        rows, warm = _label_rows(hierarchy.labels(z), d_model, token_table, vocab, rng, init_std)
        warm_total += warm
        name = level_name(z) if mode == "flat" else BOTTOM_NAME
        parameters[name] = Tensor(rows, requires_grad=True, name=name)
    if mode == "hlr":
        parameters.update(
            {t.name: t for t in init_weight_units(hierarchy, seed, normalization).values}
        )
    logger.info("verbalizer: %s mode, %d label rows warm-started from token embeddings", mode, warm_total)
    return VerbalizerState(hierarchy, parameters, mode, normalization)


def load_verbalizer(
    hierarchy: LabelHierarchy,
    arrays: Mapping[str, np.ndarray],
    mode: str,
    normalization: str,
) -> VerbalizerState:
    """
    Rebuild a verbalizer from stored arrays.

    Raises:
        CheckpointError: If the arrays do not fit the hierarchy
    """
    parameters = {
        name: Tensor(array, requires_grad=True, name=name, dtype=np.float32)
        for name, array in arrays.items()
    }
    try:
        return VerbalizerState(hierarchy, parameters, mode, normalization)
    except (DimensionError, ConfigError) as e:
        raise CheckpointError(f"stored verbalizer does not fit the hierarchy: {e}") from e
