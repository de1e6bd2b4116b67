"""JSON-lines datasets of argument pairs with per-level labels."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

from pemi.errors import DataError, HierarchyError, LabelPathError
from pemi.models.hierarchy import LabelHierarchy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Instance:
    """An argument pair with one label name per hierarchy level, top first."""

    arg1: str
    arg2: str
    labels: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"arg1": self.arg1, "arg2": self.arg2, "labels": list(self.labels)}


@dataclass(frozen=True)
class DatasetBundle:
    """Train/dev/test splits plus a note on where they came from."""

    train: tuple[Instance, ...]
    dev: tuple[Instance, ...]
    test: tuple[Instance, ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        """Validate that no instance object sits in two splits."""
        seen: dict[int, str] = {}
        for split, instances in self.splits().items():
            for instance in instances:
                other = seen.setdefault(id(instance), split)
                if other != split:
                    raise DataError(f"an instance appears in both {other} and {split}")

    def splits(self) -> dict[str, tuple[Instance, ...]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


def label_indices(hierarchy: LabelHierarchy, labels: Sequence[str]) -> tuple[int, ...]:
    """
    Resolve a label path to per-level indices.

    Raises:
        LabelPathError: On wrong arity, an unknown name or a non-edge step
    """
    if len(labels) != hierarchy.depth:
        raise LabelPathError(f"expected {hierarchy.depth} labels, got {len(labels)}")
    indices = []
    for z, name in enumerate(labels, 1):
        try:
            indices.append(hierarchy.index(z, name))
        except HierarchyError:
            raise LabelPathError(f"unknown level-{z} label {name!r}") from None
    for z in range(1, hierarchy.depth):
        if not hierarchy.is_edge(z, indices[z - 1], indices[z]):
            raise LabelPathError(f"{labels[z]!r} is not a child of {labels[z - 1]!r}")
    return tuple(indices)


def _parse_record(record: object, hierarchy: LabelHierarchy) -> Instance:
    if not isinstance(record, dict):
        raise DataError("record must be a JSON object")
    for key in ("arg1", "arg2"):
        if not isinstance(record.get(key), str):
            raise DataError(f'"{key}" must be a string')
    labels = record.get("labels")
    if not isinstance(labels, list) or not all(isinstance(name, str) for name in labels):
        raise DataError('"labels" must be a list of strings')
    label_indices(hierarchy, labels)
    return Instance(record["arg1"], record["arg2"], tuple(labels))


def parse_lines(lines: Iterable[str], hierarchy: LabelHierarchy, source: str = "<input>") -> list[Instance]:
    """
    Parse JSON-lines records, skipping blank lines.

    Raises:
        DataError: On malformed JSON or fields, citing the line number
        LabelPathError: On an invalid label path, citing the line number
    """
    instances = []
    for line_number, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{source} line {line_number}: invalid JSON ({e.msg})") from e
        try:
            instances.append(_parse_record(record, hierarchy))
        except DataError as e:
            raise type(e)(f"{source} line {line_number}: {e}") from e
    return instances


def parse_dataset(path: Union[str, Path], hierarchy: LabelHierarchy) -> list[Instance]:
    """
    Read and validate a dataset file.

    Each line is ``{"arg1": str, "arg2": str, "labels": [str, ...]}`` with one
    label per level, top first. Labels are never repaired.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read dataset {path}: {e}") from e
    instances = parse_lines(text.splitlines(), hierarchy, source=str(path))
    logger.info("loaded %d instances from %s", len(instances), path)
    return instances


def write_dataset(path: Union[str, Path], instances: Iterable[Instance]) -> None:
    lines = [json.dumps(instance.to_dict(), ensure_ascii=False) + "\n" for instance in instances]
    Path(path).write_text("".join(lines), encoding="utf-8")
