"""Tensor values and the reverse-mode tape for PEMI."""

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from pemi.errors import DimensionError, NumericalError, TapeError

GradientTable = dict[str, np.ndarray]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_local = threading.local()
_leaf_counter = itertools.count()


def default_dtype() -> np.dtype:
    """Get the floating dtype used for newly created tensors (float32 unless overridden)."""
    return getattr(_local, "dtype", np.dtype(np.float32))


@contextmanager
def precision(dtype) -> Iterator[None]:
    """
    Temporarily change the dtype of newly created tensors on this thread.

    Gradient checks run under ``precision(np.float64)`` so central differences
    are not swamped by float32 rounding.
    """
    previous = default_dtype()
    _local.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _local.dtype = previous


def current_tape() -> Optional["Tape"]:
    """Get the innermost active tape on this thread, if any."""
    stack = getattr(_local, "tapes", None)
    return stack[-1] if stack else None


class Tensor:
    """Immutable dense array with an optional gradient requirement."""

    __slots__ = ("_data", "requires_grad", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype=None,
    ) -> None:
        """
        Create a leaf tensor (the input is copied).

        Args:
            data: Array-like values
            requires_grad: Whether backward() should report a gradient for this leaf
            name: Key used in gradient tables; generated when omitted
            dtype: Storage dtype, defaults to default_dtype()

        Raises:
            NumericalError: If any value is NaN or infinite
        """
        array = np.array(data, dtype=dtype or default_dtype())
        self._init(array, requires_grad, name, origin="leaf")

    @classmethod
    def _from_op(cls, array: np.ndarray, requires_grad: bool, op: str) -> "Tensor":
        tensor = cls.__new__(cls)
        tensor._init(array, requires_grad, None, origin=op)
        return tensor

    def _init(self, array: np.ndarray, requires_grad: bool, name: Optional[str], origin: str) -> None:
        if not np.all(np.isfinite(array)):
            raise NumericalError(f"non-finite values produced by {origin}, shape {array.shape}")
        array.setflags(write=False)
        self._data = array
        self.requires_grad = bool(requires_grad)
        if name is None and requires_grad and origin == "leaf":
            name = f"leaf_{next(_leaf_counter)}"
        self.name = name

    @property
    def data(self) -> np.ndarray:
        """Get the read-only value array."""
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    def numpy(self) -> np.ndarray:
        """Get a writable copy of the values."""
        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._data.reshape(-1)[0])

    def detach(self, requires_grad: bool = False, name: Optional[str] = None) -> "Tensor":
        """Get a new leaf with the same values."""
        return Tensor(self._data, requires_grad=requires_grad, name=name or self.name, dtype=self.dtype)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{flag}{label})"

    def __add__(self, other):
        from pemi.numcore import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from pemi.numcore import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from pemi.numcore import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from pemi.numcore import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from pemi.numcore import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from pemi.numcore import ops

        return ops.matmul(self, other)


@dataclass
class TapeNode:
    """One recorded primitive application."""

    op: str
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardFn


class Tape:
    """
    Ordered record of primitive applications on one thread.

    Use as a context manager; every primitive evaluated inside the block whose
    inputs require gradients is appended in execution order, which is a
    topological order of the computation graph.
    """

    def __init__(self) -> None:
        self._nodes: list[TapeNode] = []
        self._position: dict[int, int] = {}
        self._leaves: dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "tapes", None)
        if stack is None:
            stack = _local.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.tapes.remove(self)

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._position

    @property
    def nodes(self) -> list[TapeNode]:
        return list(self._nodes)

    def record(self, op: str, output: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn) -> None:
        for tensor in inputs:
            if tensor.requires_grad and id(tensor) not in self._position:
                self._leaves.setdefault(id(tensor), tensor)
        self._position[id(output)] = len(self._nodes)
        self._nodes.append(TapeNode(op, output, inputs, backward))


def _accumulate(grads: dict[int, np.ndarray], key: int, value: np.ndarray) -> None:
    if key in grads:
        grads[key] = grads[key] + value
    else:
        grads[key] = value


def backward(loss: Tensor, tape: Tape) -> GradientTable:
    """
    Replay the tape in reverse and return gradients of ``loss`` for trainable leaves.

    Args:
        loss: Scalar (single-element) tensor recorded on ``tape``
        tape: Tape that recorded the forward pass

    Returns:
        Mapping leaf name -> gradient array of the leaf's shape. Leaves that
        were recorded but do not influence the loss get zeros; frozen leaves
        never appear.

    Raises:
        DimensionError: If loss has more than one element
        TapeError: If loss was not produced on this tape
    """
    if loss.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss not in tape:
        raise TapeError("backward called on a tensor that is not on the tape")

    last = tape._position[id(loss)]
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}

    for node in reversed(tape._nodes[: last + 1]):
        upstream = grads.pop(id(node.output), None)
        if upstream is None:
            continue
        for tensor, grad in zip(node.inputs, node.backward(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            if grad.shape != tensor.shape:
                raise DimensionError(
                    f"{node.op} backward produced shape {grad.shape} for input {tensor.shape}"
                )
            _accumulate(grads, id(tensor), grad)

    table: GradientTable = {}
    for key, leaf in tape._leaves.items():
        if leaf.name in table:
            raise TapeError(f"two trainable leaves share the name {leaf.name!r}")
        grad = grads.get(key)
        if grad is None:
            grad = np.zeros(leaf.shape)
        table[leaf.name] = grad.astype(leaf.dtype, copy=False)
    return table
