"""Leveled label hierarchy with parent→child edges between adjacent levels."""

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

from pemi.errors import HierarchyError, LevelError

Edge = tuple[int, int, int]  # (parent level z, 1-based; parent index at z; child index at z+1)


@dataclass(frozen=True)
class LabelHierarchy:
    """
    Z levels of relation labels, top level first.

    Edges only connect adjacent levels and may be many-to-many. Every label
    below the top has at least one parent and every label above the bottom
    has at least one child.
    """

    levels: tuple[tuple[str, ...], ...]
    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        """Validate structure, naming the first offending node."""
        if not self.levels:
            raise HierarchyError("hierarchy must have at least one level")
        for z, names in enumerate(self.levels, 1):
            if not names:
                raise HierarchyError(f"level {z} is empty")
            seen: set[str] = set()
            for name in names:
                if name in seen:
                    raise HierarchyError(f"duplicate label {name!r} at level {z}")
                seen.add(name)

        depth = len(self.levels)
        if len(set(self.edges)) != len(self.edges):
            raise HierarchyError("hierarchy contains a duplicate edge")
        for z, parent, child in self.edges:
            if not 1 <= z < depth:
                raise HierarchyError(f"edge ({z}, {parent}, {child}) leaves the level range 1..{depth - 1}")
            if not 0 <= parent < len(self.levels[z - 1]) or not 0 <= child < len(self.levels[z]):
                raise HierarchyError(f"edge ({z}, {parent}, {child}) references an unknown label")

        for z in range(1, depth):
            has_child = {p for lz, p, _ in self.edges if lz == z}
            has_parent = {c for lz, _, c in self.edges if lz == z}
            for j, name in enumerate(self.levels[z - 1]):
                if j not in has_child:
                    raise HierarchyError(f"label {name!r} at level {z} has no children")
            for i, name in enumerate(self.levels[z]):
                if i not in has_parent:
                    raise HierarchyError(f"label {name!r} at level {z + 1} has no parent")

    @property
    def depth(self) -> int:
        """Z, the number of levels."""
        return len(self.levels)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(names) for names in self.levels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _index(self) -> tuple[dict[str, int], ...]:
        return tuple({name: i for i, name in enumerate(names)} for names in self.levels)

    @cached_property
    def _edges_by_level(self) -> dict[int, tuple[tuple[int, int], ...]]:
        return {
            z: tuple(sorted((p, c) for lz, p, c in self.edges if lz == z))
            for z in range(1, self.depth)
        }

    @cached_property
    def _edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    def _check_level(self, z: int) -> None:
        if not 1 <= z <= self.depth:
            raise LevelError(f"level {z} out of range 1..{self.depth}")

    def labels(self, z: int) -> tuple[str, ...]:
        self._check_level(z)
        return self.levels[z - 1]

    def index(self, z: int, name: str) -> int:
        """
        Get a label's index within its level.

        Raises:
            HierarchyError: If the name is not a level-z label
        """
        self._check_level(z)
        try:
            return self._index[z - 1][name]
        except KeyError:
            raise HierarchyError(f"unknown label {name!r} at level {z}") from None

    def edges_at(self, z: int) -> tuple[tuple[int, int], ...]:
        """Get the (parent, child) index pairs between levels z and z+1, sorted."""
        if not 1 <= z < self.depth:
            raise LevelError(f"no edges below level {z} in a {self.depth}-level hierarchy")
        return self._edges_by_level[z]

    def children(self, z: int, j: int) -> tuple[int, ...]:
        """
        Get the support set of label j at level z (child indices at z+1).

        Raises:
            LevelError: If z is the bottom level
        """
        if z == self.depth:
            raise LevelError(f"level {z} is the bottom level and has no children")
        self._check_level(z)
        return tuple(c for p, c in self.edges_at(z) if p == j)

    def parents(self, z: int, i: int) -> tuple[int, ...]:
        """
        Get the parent indices at level z-1 of label i at level z.

        Raises:
            LevelError: If z is the top level
        """
        if z == 1:
            raise LevelError("level 1 is the top level and has no parents")
        self._check_level(z)
        return tuple(p for p, c in self.edges_at(z - 1) if c == i)

    def is_edge(self, z: int, parent: int, child: int) -> bool:
        return (z, parent, child) in self._edge_set

    def support_mask(self, z: int) -> np.ndarray:
        """Boolean |L^z|×|L^{z+1}| matrix, True exactly on edges."""
        mask = np.zeros((self.sizes[z - 1], self.sizes[z]), dtype=bool)
        for parent, child in self.edges_at(z):
            mask[parent, child] = True
        return mask

    def to_dict(self) -> dict:
        return {
            "levels": [list(names) for names in self.levels],
            "edges": [
                [z, self.levels[z - 1][p], self.levels[z][c]] for z, p, c in sorted(self.edges)
            ],
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "LabelHierarchy":
        """
        Build from ``{"levels": [[...], ...], "edges": [[z, parent, child], ...]}``.

        Raises:
            HierarchyError: On malformed structure or an edge naming labels outside levels z / z+1
        """
        if not isinstance(spec, dict) or "levels" not in spec or "edges" not in spec:
            raise HierarchyError('hierarchy spec needs "levels" and "edges"')
        levels = tuple(tuple(str(name) for name in names) for names in spec["levels"])
        lookup = [{name: i for i, name in enumerate(names)} for names in levels]
        edges: list[Edge] = []
        for entry in spec["edges"]:
            if not (isinstance(entry, (list, tuple)) and len(entry) == 3 and isinstance(entry[0], int)):
                raise HierarchyError(f"malformed edge {entry!r}")
            z, parent, child = entry
            if not 1 <= z < len(levels):
                raise HierarchyError(f"edge {entry!r}: parent level {z} has no level below it")
            if parent not in lookup[z - 1]:
                raise HierarchyError(f"edge {entry!r}: {parent!r} is not a level-{z} label")
            if child not in lookup[z]:
                raise HierarchyError(f"edge {entry!r}: {child!r} is not a level-{z + 1} label")
            edges.append((z, lookup[z - 1][parent], lookup[z][child]))
        return cls(levels, tuple(sorted(edges)))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


def load_hierarchy(path: Union[str, Path]) -> LabelHierarchy:
    """
    Load and validate a hierarchy spec file (UTF-8 JSON).

    Raises:
        HierarchyError: If the file is unreadable, not JSON or fails validation
    """
    try:
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise HierarchyError(f"cannot read hierarchy {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise HierarchyError(f"hierarchy {path} is not valid JSON: {e}") from e
    return LabelHierarchy.from_dict(spec)
