"""Per-level cross-entropy and the weighted joint objective."""

from typing import Sequence

from pemi.errors import ConfigError
from pemi.numcore import Tensor, add_n, cross_entropy, scale


def level_loss(logits: Tensor, target: int) -> Tensor:
    """
    -log ŷ_target for one level, computed from logits via log-sum-exp.

    Raises:
        DimensionError: If target is not a valid class index
    """
    return cross_entropy(logits, target)


def mean_loss(losses: Sequence[Tensor]) -> Tensor:
    """Average scalar losses over a batch."""
    return scale(add_n(losses), 1.0 / len(losses))


def joint_loss(losses: Sequence[Tensor], lambdas: Sequence[float]) -> Tensor:
    """
    Σ_z λ_z · L_z.

    Raises:
        ConfigError: If the number of weights differs from the number of levels
    """
    if len(losses) != len(lambdas):
        raise ConfigError(f"got {len(lambdas)} lambdas for {len(losses)} level losses")
    return add_n([scale(loss, weight) for loss, weight in zip(losses, lambdas)])
