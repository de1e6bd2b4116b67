"""Trainable/frozen split of the model parameters and its accounting."""

import math
from dataclasses import dataclass
from typing import Optional

from config import DEFAULT_VERBALIZER_MODE
from pemi.errors import ConfigError
from pemi.models.encoder import EncoderConfig, parameter_shapes
from pemi.models.hierarchy import LabelHierarchy
from pemi.models.model import PROMPT_NAME, PemiModel
from pemi.models.verbalizer import verbalizer_shapes

PROMPT_GROUP = "prompt"
VERBALIZER_GROUP = "verbalizer"
UNITS_GROUP = "weight_units"
GROUPS = (PROMPT_GROUP, VERBALIZER_GROUP, UNITS_GROUP)

Shape = tuple[int, ...]


def group_of(name: str) -> str:
    if name == PROMPT_NAME:
        return PROMPT_GROUP
    if name.startswith("verbalizer.units."):
        return UNITS_GROUP
    if name.startswith("verbalizer."):
        return VERBALIZER_GROUP
    raise ConfigError(f"{name!r} is not a trainable parameter name")


@dataclass(frozen=True)
class ParameterPartition:
    """δ (prompt, verbalizer and weight-unit groups) against the frozen encoder."""

    trainable: dict[str, Shape]
    frozen: dict[str, Shape]

    def __post_init__(self) -> None:
        """Validate that the two sets are disjoint and δ names are known."""
        overlap = sorted(set(self.trainable) & set(self.frozen))
        if overlap:
            raise ConfigError(f"parameter {overlap[0]!r} is both trainable and frozen")
        for name in self.trainable:
            group_of(name)

    @classmethod
    def from_model(cls, model: PemiModel) -> "ParameterPartition":
        trainable = {name: t.shape for name, t in model.trainable_parameters().items()}
        frozen = {name: t.shape for name, t in model.encoder.parameters.items()}
        return cls(trainable, frozen)

    @classmethod
    def from_layout(
        cls,
        n_prompts: int,
        d_model: int,
        hierarchy: LabelHierarchy,
        mode: str = DEFAULT_VERBALIZER_MODE,
        encoder_config: Optional[EncoderConfig] = None,
    ) -> "ParameterPartition":
        """Build the partition a configuration would produce without building the model."""
        trainable: dict[str, Shape] = {PROMPT_NAME: (n_prompts, d_model)}
        trainable.update(verbalizer_shapes(hierarchy, d_model, mode))
        frozen = dict(parameter_shapes(encoder_config)) if encoder_config is not None else {}
        return cls(trainable, frozen)

    def group(self, group: str) -> dict[str, Shape]:
        return {name: shape for name, shape in self.trainable.items() if group_of(name) == group}

    def is_trainable(self, name: str) -> bool:
        return name in self.trainable


@dataclass(frozen=True)
class ParameterCount:
    total: int
    by_group: dict[str, int]
    frozen: int

    def lines(self) -> list[str]:
        width = max(len(group) for group in self.by_group)
        rows = [f"{group.ljust(width)}  {count:>12,}" for group, count in self.by_group.items()]
        rows.append(f"{'trainable'.ljust(width)}  {self.total:>12,}")
        if self.frozen:
            rows.append(f"{'frozen'.ljust(width)}  {self.frozen:>12,}")
        return rows


def count_trainable_params(partition: ParameterPartition) -> ParameterCount:
    """K·d + |L^Z|·d + |edges| in hlr mode, reported per group."""
    by_group = {group: 0 for group in GROUPS}
    for name, shape in partition.trainable.items():
        by_group[group_of(name)] += math.prod(shape)
    return ParameterCount(
        total=sum(by_group.values()),
        by_group=by_group,
        frozen=sum(math.prod(shape) for shape in partition.frozen.values()),
    )

