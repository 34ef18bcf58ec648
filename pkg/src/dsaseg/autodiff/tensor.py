"""Tensor, Parameter and the Tape that records primitives for reverse mode.

Every primitive appends one :class:`Node` to the active tape when any of its
inputs requires a gradient. :func:`backward` walks the tape in exact reverse
execution order, which is a valid topological order because the tape is
append-only.
"""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import NumericalError, UsageError

DTYPES = (np.float32, np.float64)


class Tensor:
    """Dense n-dimensional array with an optional gradient record."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in DTYPES:
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return self.shape[0]

    # operator sugar; the primitives live in ``ops``
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def permute(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.permute(self, axes)


@dataclass
class InitSpec:
    kind: str
    seed: int
    fan_in: int = 0
    std: float = 0.0


class Parameter(Tensor):
    """A learnable tensor with a hierarchical name and a reproducible initializer."""

    def __init__(self, data, name: str = "", init_spec: Optional[InitSpec] = None):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.init_spec = init_spec

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


@dataclass(eq=False)
class Node:
    op: str
    out: Optional[Tensor]
    inputs: Sequence[Tensor]
    vjp: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]]
    tape: Optional["Tape"] = None


@dataclass(eq=False)
class Tape:
    """Append-only record of executed primitives."""

    nodes: list = field(default_factory=list)

    def record(self, node: Node):
        self.nodes.append(node)

    def clear(self):
        for node in self.nodes:
            if node.out is not None:
                node.out._node = None
            node.out = None
            node.inputs = ()
            node.vjp = None
            node.tape = None
        self.nodes.clear()

    def __len__(self):
        return len(self.nodes)

    def __enter__(self):
        _state().tapes.append(self)
        return self

    def __exit__(self, *exc):
        _state().tapes.pop()
        return False


class _State(threading.local):
    def __init__(self):
        self.tapes = [Tape()]
        self.grad_enabled = True


_STATE = _State()


def _state() -> _State:
    return _STATE


def active_tape() -> Tape:
    return _state().tapes[-1]


def grad_enabled() -> bool:
    return _state().grad_enabled


@contextlib.contextmanager
def no_grad():
    st = _state()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(op: str, data: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    """Wrap a primitive's output and record it on the active tape if needed."""
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"{op} produced non-finite values")
    out = Tensor(data)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape = active_tape()
        node = Node(op, out, tuple(inputs), vjp, tape)
        tape.record(node)
        out._node = node
    return out


def backward(loss: Tensor, tape: Optional[Tape] = None):
    """Populate ``.grad`` on every leaf reachable from ``loss``.

    Gradients accumulate; call ``zero_grad`` on parameters between steps.
    """
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._node is None:
        raise UsageError("loss was not produced by any recorded primitive (empty tape)")
    tape = tape if tape is not None else loss._node.tape
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        in_grads = node.vjp(g)
        for inp, ig in zip(node.inputs, in_grads):
            if ig is None or not inp.requires_grad:
                continue
            if inp._node is None:
                inp.grad = ig.copy() if inp.grad is None else inp.grad + ig
            else:
                key = id(inp)
                grads[key] = ig if key not in grads else grads[key] + ig
