"""Synthetic argument pairs with a planted, separable label structure.

Each bottom label owns a disjoint set of signature words. An argument is two
signature words of its instance's bottom label mixed with two filler words,
so a bag-of-words lookup recovers the bottom label exactly. Upper labels
follow one ancestor path, sampled uniformly over the parents at each level.
"""

import logging
from typing import Sequence

import numpy as np

from config import (
    DEFAULT_SYNTH_PER_LABEL,
    DEFAULT_SYNTH_SEED,
    DEFAULT_SYNTH_SIGNATURE_SIZE,
    DEFAULT_SYNTH_VOCAB_SIZE,
)
from pemi.errors import ConfigError, DataError
from pemi.data.dataset import DatasetBundle, Instance
from pemi.models.hierarchy import LabelHierarchy

logger = logging.getLogger(__name__)

SIGNATURE_TOKENS_PER_ARG = 2
FILLER_TOKENS_PER_ARG = 2
SPLIT_FRACTIONS = (0.8, 0.1)  # train, dev; test takes the rest


def planted_hierarchy(n_top: int = 3, children_per_top: int = 2) -> LabelHierarchy:
    """Two-level tree: ``top{i}`` parents with ``children_per_top`` ``leaf{j}`` children each."""
    if n_top < 1 or children_per_top < 1:
        raise ConfigError(f"planted hierarchy needs positive sizes, got {n_top}×{children_per_top}")
    top = tuple(f"top{i}" for i in range(n_top))
    leaves = tuple(f"leaf{j}" for j in range(n_top * children_per_top))
    edges = tuple((1, j // children_per_top, j) for j in range(len(leaves)))
    return LabelHierarchy((top, leaves), edges)


def random_hierarchy(rng: np.random.Generator, max_levels: int = 4, max_nodes: int = 30) -> LabelHierarchy:
    """
    Draw a random valid hierarchy with many-to-many edges.

    Every child gets one or two random parents; any parent left without
    children then adopts a random child.
    """
    depth = int(rng.integers(2, max_levels + 1))
    budget = max_nodes - depth
    sizes = [1] * depth
    for _ in range(int(rng.integers(0, budget + 1))):
        sizes[int(rng.integers(0, depth))] += 1
    levels = tuple(tuple(f"n{z}_{i}" for i in range(size)) for z, size in enumerate(sizes, 1))

    edges: set[tuple[int, int, int]] = set()
    for z in range(1, depth):
        n_parents, n_children = sizes[z - 1], sizes[z]
        for child in range(n_children):
            count = min(n_parents, int(rng.integers(1, 3)))
            for parent in rng.choice(n_parents, size=count, replace=False):
                edges.add((z, int(parent), child))
        for parent in range(n_parents):
            if not any(lz == z and p == parent for lz, p, _ in edges):
                edges.add((z, parent, int(rng.integers(0, n_children))))
    return LabelHierarchy(levels, tuple(sorted(edges)))


def signature_tokens(
    hierarchy: LabelHierarchy,
    vocab_size: int = DEFAULT_SYNTH_VOCAB_SIZE,
    signature_size: int = DEFAULT_SYNTH_SIGNATURE_SIZE,
) -> tuple[dict[str, tuple[str, ...]], tuple[str, ...]]:
    """
    Assign signature words to bottom labels.

    Returns:
        (signatures by bottom label, filler words)

    Raises:
        ConfigError: If the word budget cannot give every label its own signature plus filler
    """
    bottom = hierarchy.labels(hierarchy.depth)
    if signature_size < SIGNATURE_TOKENS_PER_ARG:
        raise ConfigError(f"signature_size must be >= {SIGNATURE_TOKENS_PER_ARG}, got {signature_size}")
    needed = len(bottom) * signature_size + FILLER_TOKENS_PER_ARG
    if vocab_size < needed:
        raise ConfigError(
            f"vocab_size {vocab_size} too small for {len(bottom)} disjoint signatures of "
            f"{signature_size} words plus filler (need >= {needed})"
        )
    words = tuple(f"w{i}" for i in range(vocab_size))
    signatures = {
        label: words[i * signature_size : (i + 1) * signature_size] for i, label in enumerate(bottom)
    }
    return signatures, words[len(bottom) * signature_size :]


def _argument(rng: np.random.Generator, signature: Sequence[str], filler: Sequence[str]) -> str:
    picked = list(rng.choice(signature, size=SIGNATURE_TOKENS_PER_ARG, replace=False))
    picked += list(rng.choice(filler, size=FILLER_TOKENS_PER_ARG, replace=True))
    return " ".join(picked[i] for i in rng.permutation(len(picked)))


def _ancestor_path(rng: np.random.Generator, hierarchy: LabelHierarchy, bottom_index: int) -> tuple[str, ...]:
    indices = [bottom_index]
    for z in range(hierarchy.depth, 1, -1):
        parents = hierarchy.parents(z, indices[-1])
        indices.append(int(parents[int(rng.integers(0, len(parents)))]))
    indices.reverse()
    return tuple(hierarchy.labels(z)[i] for z, i in enumerate(indices, 1))


def nearest_signature_accuracy(
    instances: Sequence[Instance], signatures: dict[str, Sequence[str]]
) -> float:
    """Bottom-level accuracy of picking the label whose signature overlaps the text most."""
    if not instances:
        return 1.0
    names = list(signatures)
    sets = [set(signatures[name]) for name in names]
    correct = 0
    for instance in instances:
        words = (instance.arg1 + " " + instance.arg2).split()
        overlaps = [sum(word in s for word in words) for s in sets]
        correct += names[int(np.argmax(overlaps))] == instance.labels[-1]
    return correct / len(instances)


def generate_synthetic(
    hierarchy: LabelHierarchy,
    n_per_label: int = DEFAULT_SYNTH_PER_LABEL,
    vocab_size: int = DEFAULT_SYNTH_VOCAB_SIZE,
    seed: int = DEFAULT_SYNTH_SEED,
    signature_size: int = DEFAULT_SYNTH_SIGNATURE_SIZE,
) -> DatasetBundle:
    """
    Generate a separable dataset, split 80/10/10 per bottom label.

    Raises:
        ConfigError: If n_per_label < 1 or the word budget is too small
        DataError: If the generated data fails its own separability check
    """
    if n_per_label < 1:
        raise ConfigError(f"n_per_label must be >= 1, got {n_per_label}")
    signatures, filler = signature_tokens(hierarchy, vocab_size, signature_size)
    rng = np.random.default_rng(seed)
    n_train = int(n_per_label * SPLIT_FRACTIONS[0])
    n_dev = int(n_per_label * SPLIT_FRACTIONS[1])

    splits: dict[str, list[Instance]] = {"train": [], "dev": [], "test": []}
    for index, label in enumerate(hierarchy.labels(hierarchy.depth)):
        signature = signatures[label]
        instances = [
            Instance(
                _argument(rng, signature, filler),
                _argument(rng, signature, filler),
                _ancestor_path(rng, hierarchy, index),
            )
            for _ in range(n_per_label)
        ]
        splits["train"].extend(instances[:n_train])
        splits["dev"].extend(instances[n_train : n_train + n_dev])
        splits["test"].extend(instances[n_train + n_dev :])
    for name in splits:
        order = rng.permutation(len(splits[name]))
        splits[name] = [splits[name][i] for i in order]

    accuracy = nearest_signature_accuracy(
        splits["train"] + splits["dev"] + splits["test"], signatures
    )
    if accuracy < 1.0:
        raise DataError(f"synthetic data is not separable (oracle accuracy {accuracy:.4f})")
    logger.info(
        "generated %d/%d/%d synthetic instances (oracle accuracy %.2f)",
        len(splits["train"]),
        len(splits["dev"]),
        len(splits["test"]),
        accuracy,
    )
    return DatasetBundle(
        tuple(splits["train"]),
        tuple(splits["dev"]),
        tuple(splits["test"]),
        provenance=(
            f"synthetic(seed={seed}, n_per_label={n_per_label}, vocab_size={vocab_size}, "
            f"signature_size={signature_size})"
        ),
    )
