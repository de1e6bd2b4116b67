"""Shipped PDTB-shaped label hierarchies.

``pdtb2``: 4 top-level senses, 11 second-level senses, 102 connectives (tree).
``pdtb3``: 4 top-level senses, 14 second-level senses.
"""

from pathlib import Path
from typing import Union

from pemi.errors import HierarchyError
from pemi.models.hierarchy import LabelHierarchy, load_hierarchy

FIXTURE_DIR = Path(__file__).parent
FIXTURES = {
    "pdtb2": FIXTURE_DIR / "pdtb2_hierarchy.json",
    "pdtb3": FIXTURE_DIR / "pdtb3_hierarchy.json",
}
FIXTURE_PREFIX = "fixture:"


def load_fixture(name: str) -> LabelHierarchy:
    if name not in FIXTURES:
        raise HierarchyError(f"unknown hierarchy fixture {name!r}, expected one of {sorted(FIXTURES)}")
    return load_hierarchy(FIXTURES[name])


def resolve_hierarchy(source: Union[str, Path]) -> LabelHierarchy:
    """Load ``fixture:<name>`` from the shipped set, anything else as a file path."""
    text = str(source)
    if text.startswith(FIXTURE_PREFIX):
        return load_fixture(text[len(FIXTURE_PREFIX):])
    return load_hierarchy(source)
