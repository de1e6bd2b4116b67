"""Differentiable primitives over Tensor.

Every primitive computes its value eagerly and, when a tape is active and an
input requires gradients, records a closure mapping the upstream gradient to
one gradient per input. Reductions (softmax, layer norm, cross-entropy) are
accumulated in float64 and cast back to the storage dtype.
"""

import math
from typing import Sequence, Union

import numpy as np

from pemi.errors import ConfigError, DegenerateRowError, DimensionError
from pemi.numcore.tensor import BackwardFn, Tensor, current_tape

# GELU tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))
GELU_COEFF = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715

Operand = Union[Tensor, float, int, np.ndarray]


def as_tensor(value: Operand) -> Tensor:
    """Wrap a constant as a frozen tensor (tensors pass through)."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _apply(op: str, array: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    tape = current_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    dtype = np.result_type(*(t.dtype for t in inputs))
    out = Tensor._from_op(np.array(array, dtype=dtype), needs_grad, op)
    if needs_grad:
        tape.record(op, out, tuple(inputs), backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return _apply("add", a.data + b.data, (a, b), backward)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return _apply("sub", a.data - b.data, (a, b), backward)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _apply("mul", a.data * b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _apply("neg", -a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    factor = float(factor)
    return _apply("scale", a.data * factor, (a,), lambda g: (g * factor,))


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum a non-empty list of same-shaped tensors."""
    if not tensors:
        raise DimensionError("add_n needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise DimensionError(f"add_n: shape {t.shape} differs from {shape}")
    total = tensors[0].data.copy()
    for t in tensors[1:]:
        total = total + t.data

    def backward(g):
        return tuple(g if t.requires_grad else None for t in tensors)

    return _apply("add_n", total, tuple(tensors), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of m×k and k×n tensors (or batched b×m×k and b×k×n).

    Raises:
        DimensionError: If ranks differ, inner dimensions disagree or batch sizes differ
    """
    if a.ndim not in (2, 3) or a.ndim != b.ndim:
        raise DimensionError(f"matmul needs two rank-2 or two rank-3 tensors, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul dimension mismatch: {a.shape} x {b.shape}")

    def backward(g):
        return (
            g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None,
            np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None,
        )

    return _apply("matmul", a.data @ b.data, (a, b), backward)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _apply("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"cannot reshape {a.shape} into {tuple(shape)}") from None
    return _apply("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def sum_all(a: Tensor) -> Tensor:
    """Sum every element into a scalar (float64 accumulation)."""
    total = np.sum(a.data, dtype=np.float64)
    return _apply("sum", total, (a,), lambda g: (np.full(a.shape, g, dtype=a.dtype),))


def gather_rows(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Select rows of a rank-2 tensor (embedding lookup)."""
    idx = np.asarray(indices, dtype=np.intp)
    if table.ndim != 2:
        raise DimensionError(f"gather_rows needs a rank-2 table, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise DimensionError(f"gather_rows index out of range for {table.shape[0]} rows")

    def backward(g):
        grad = np.zeros(table.shape, dtype=g.dtype)
        np.add.at(grad, idx, g)
        return (grad,)

    return _apply("gather_rows", table.data[idx], (table,), backward)


def scatter_rows(base: Tensor, positions: Sequence[int], rows: Tensor) -> Tensor:
    """Replace rows of ``base`` at distinct ``positions`` with ``rows``."""
    pos = np.asarray(positions, dtype=np.intp)
    if base.ndim != 2 or rows.ndim != 2 or rows.shape != (pos.size, base.shape[1]):
        raise DimensionError(
            f"scatter_rows: {rows.shape} rows do not fit {pos.size} positions of {base.shape}"
        )
    if len(set(pos.tolist())) != pos.size:
        raise DimensionError("scatter_rows positions must be distinct")
    out = np.array(base.data, dtype=np.result_type(base.dtype, rows.dtype))
    out[pos] = rows.data

    def backward(g):
        grad_base = None
        if base.requires_grad:
            grad_base = g.copy()
            grad_base[pos] = 0
        return grad_base, (g[pos] if rows.requires_grad else None)

    return _apply("scatter_rows", out, (base, rows), backward)


def scatter_matrix(
    values: Tensor, rows: Sequence[int], cols: Sequence[int], shape: tuple[int, int]
) -> Tensor:
    """Place a vector of values at (rows[i], cols[i]) of a zero matrix."""
    r = np.asarray(rows, dtype=np.intp)
    c = np.asarray(cols, dtype=np.intp)
    if values.shape != (r.size,) or r.size != c.size:
        raise DimensionError(f"scatter_matrix: {values.shape} values for {r.size} coordinates")
    out = np.zeros(shape, dtype=values.dtype)
    out[r, c] = values.data
    return _apply("scatter_matrix", out, (values,), lambda g: (g[r, c],))


def _as_mask(mask, shape: tuple[int, ...]) -> np.ndarray:
    array = mask.data if isinstance(mask, Tensor) else mask
    array = np.asarray(array).astype(bool)
    if array.shape != shape:
        raise DimensionError(f"mask shape {array.shape} does not match {shape}")
    return array


def row_softmax(x: Tensor, mask=None) -> Tensor:
    """
    Softmax over the last axis, optionally restricted to ``mask``.

    Masked entries are exactly 0; each row is shifted by its (masked) max
    before exponentiation.

    Raises:
        DegenerateRowError: If a row has no unmasked entry
    """
    values = x.data.astype(np.float64)
    if mask is not None:
        keep = _as_mask(mask, x.shape)
        empty = ~keep.any(axis=-1)
        if empty.any():
            row = tuple(int(i) for i in np.argwhere(empty)[0])
            raise DegenerateRowError(f"row_softmax: row {row} is fully masked")
        values = np.where(keep, values, -np.inf)
    shifted = values - values.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=-1, keepdims=True)

    def backward(g):
        g64 = g.astype(np.float64)
        return (probs * (g64 - (g64 * probs).sum(axis=-1, keepdims=True)),)

    return _apply("row_softmax", probs, (x,), backward)


def l1_normalize_rows(x: Tensor, mask) -> Tensor:
    """
    Divide each row's masked entries by their sum; masked-out entries are 0.

    Raises:
        DegenerateRowError: If a masked entry is negative or a row sums to 0
    """
    keep = _as_mask(mask, x.shape)
    values = np.where(keep, x.data.astype(np.float64), 0.0)
    if (values < 0).any():
        raise DegenerateRowError("L1 normalization requires nonnegative weight units")
    sums = values.sum(axis=-1, keepdims=True)
    if (sums == 0).any():
        row = tuple(int(i) for i in np.argwhere(sums[..., 0] == 0)[0])
        raise DegenerateRowError(f"L1 normalization: row {row} has zero mass")
    normalized = values / sums

    def backward(g):
        g64 = g.astype(np.float64)
        inner = (g64 * normalized).sum(axis=-1, keepdims=True)
        return (np.where(keep, (g64 - inner) / sums, 0.0),)

    return _apply("l1_normalize_rows", normalized, (x,), backward)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] through the log-sum-exp path."""
    if logits.ndim != 1:
        raise DimensionError(f"cross_entropy needs a logit vector, got {logits.shape}")
    if not 0 <= target < logits.shape[0]:
        raise DimensionError(f"target index {target} out of range for {logits.shape[0]} classes")
    z = logits.data.astype(np.float64)
    peak = z.max()
    lse = peak + np.log(np.exp(z - peak).sum())
    probs = np.exp(z - lse)

    def backward(g):
        grad = probs.copy()
        grad[target] -= 1.0
        return (grad * float(g),)

    return _apply("cross_entropy", lse - z[target], (logits,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then apply gain and bias."""
    if not eps > 0:
        raise ConfigError(f"layer_norm eps must be > 0, got {eps}")
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} vs width {width}")
    values = x.data.astype(np.float64)
    centered = values - values.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + bias.data

    def backward(g):
        g64 = g.astype(np.float64)
        grad_x = None
        if x.requires_grad:
            dxhat = g64 * gain.data
            grad_x = inv_std * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        grad_gain = (g64 * xhat).reshape(-1, width).sum(axis=0) if gain.requires_grad else None
        grad_bias = g64.reshape(-1, width).sum(axis=0) if bias.requires_grad else None
        return grad_x, grad_gain, grad_bias

    return _apply("layer_norm", out, (x, gain, bias), backward)


def gelu(x: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh approximation (constant √(2/π))."""
    values = x.data.astype(np.float64)
    t = np.tanh(GELU_COEFF * (values + GELU_CUBIC * values**3))

    def backward(g):
        slope = 0.5 * (1.0 + t) + 0.5 * values * (1.0 - t * t) * GELU_COEFF * (
            1.0 + 3.0 * GELU_CUBIC * values * values
        )
        return (g * slope,)

    return _apply("gelu", 0.5 * values * (1.0 + t), (x,), backward)
