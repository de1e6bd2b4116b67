"""Central finite-difference gradient checking."""

from typing import Callable, Mapping, Optional

import numpy as np

from pemi.numcore.tensor import Tape, Tensor, backward, precision

LossFn = Callable[[dict[str, Tensor]], Tensor]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def check_gradients(
    loss_fn: LossFn,
    leaves: Mapping[str, np.ndarray],
    h: float = 1e-3,
    max_elements: Optional[int] = None,
    seed: int = 0,
    dtype=np.float64,
) -> dict[str, float]:
    """
    Compare tape gradients against central differences for every leaf.

    Leaves are stored as ``dtype`` (float64 by default) and the graph is
    built under that precision; differences of the loss are always taken in
    float64, divided by the step actually applied after the leaf value is
    rounded to ``dtype``. ``loss_fn`` receives a dict of trainable leaves
    keyed by name and must build its graph from them.

    Args:
        loss_fn: Builds a scalar loss from the leaves
        leaves: Initial leaf values by name
        h: Finite-difference step
        max_elements: If set, check at most this many randomly chosen
            elements per leaf
        seed: Seed for element sampling
        dtype: Storage dtype of the leaves (float32 checks the stored precision)

    Returns:
        Relative error per leaf (over the checked elements)
    """
    rng = np.random.default_rng(seed)
    with precision(dtype):
        base = {name: np.asarray(value, dtype=dtype) for name, value in leaves.items()}

        params = {name: Tensor(value, requires_grad=True, name=name) for name, value in base.items()}
        with Tape() as tape:
            loss = loss_fn(params)
        analytic = backward(loss, tape)

        errors: dict[str, float] = {}
        for name, value in base.items():
            flat_indices = np.arange(value.size)
            if max_elements is not None and value.size > max_elements:
                flat_indices = np.sort(rng.choice(value.size, size=max_elements, replace=False))

            numeric = np.empty(flat_indices.size)
            for slot, flat in enumerate(flat_indices):
                index = np.unravel_index(flat, value.shape)
                evaluations, points = [], []
                for step in (h, -h):
                    shifted = value.copy()
                    shifted[index] += step
                    points.append(float(shifted[index]))
                    trial = dict(params)
                    trial[name] = Tensor(shifted, requires_grad=True, name=name)
                    evaluations.append(loss_fn(trial).item())
                numeric[slot] = (evaluations[0] - evaluations[1]) / (points[0] - points[1])

            errors[name] = relative_error(analytic[name].ravel()[flat_indices], numeric)
    return errors
