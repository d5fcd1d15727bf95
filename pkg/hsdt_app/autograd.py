"""
Dense tensors with tape-based reverse-mode differentiation.

A `Tape` opened as a context manager records every operation whose operands
require gradients; `backward()` replays it in reverse. Outside a tape nothing
is recorded, which is how inference runs.
"""
import contextvars
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .conf import hsdt_settings
from .exceptions import ShapeError

MAX_RANK = 5

DTYPES = {
    'float32': np.dtype(np.float32),
    'float64': np.dtype(np.float64),
    'single': np.dtype(np.float32),
    'double': np.dtype(np.float64),
}

_active_tape = contextvars.ContextVar('hsdt_active_tape', default=None)
_flop_counter = contextvars.ContextVar('hsdt_flop_counter', default=None)


def resolve_dtype(dtype=None):
    """
    Map a dtype name or numpy dtype to one of the two supported precisions.

    Args:
        dtype: None (use the DTYPE setting), a name from DTYPES, or a numpy dtype.

    Returns:
        np.dtype: float32 or float64.
    """
    if dtype is None:
        dtype = hsdt_settings.DTYPE
    if isinstance(dtype, str):
        try:
            return DTYPES[dtype]
        except KeyError:
            raise ValueError(f"Unsupported dtype '{dtype}'.")
    dtype = np.dtype(dtype)
    if dtype not in (DTYPES['float32'], DTYPES['float64']):
        raise ValueError(f"Unsupported dtype '{dtype}'.")
    return dtype


class FlopCounter:
    """Accumulates arithmetic-operation counts reported by tensor ops."""

    def __init__(self):
        self.total = 0
        self.by_op = {}

    def add(self, op, count):
        self.total += int(count)
        self.by_op[op] = self.by_op.get(op, 0) + int(count)


@contextmanager
def count_flops():
    """
    Count arithmetic operations performed inside the block.

    Yields:
        FlopCounter: Filled in as operations run.
    """
    counter = FlopCounter()
    token = _flop_counter.set(counter)
    try:
        yield counter
    finally:
        _flop_counter.reset(token)


def add_flops(op, count):
    counter = _flop_counter.get()
    if counter is not None:
        counter.add(op, count)


@dataclass
class Node:
    """
    One recorded operation.

    `backward` maps the output gradient to a tuple with one entry per input;
    entries are None for inputs that need no gradient.
    """
    inputs: tuple
    output: 'Tensor'
    backward: Callable


class Tape:
    """
    Ordered record of operations, confined to the context that opened it.

    Nodes are appended as operations execute, so the list is already in
    topological order.
    """

    def __init__(self):
        self.nodes = []
        self._token = None

    def __enter__(self):
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active_tape.reset(self._token)
        self._token = None
        return False

    def record(self, node):
        self.nodes.append(node)

    def backward(self, loss):
        """
        Propagate d(loss)/d(loss) = 1 through the recorded nodes.

        Args:
            loss (Tensor): Scalar tensor produced while this tape was active.

        Returns:
            dict: Leaf tensor -> gradient array, for every leaf that requires grad.

        Raises:
            ShapeError: If loss is not a scalar.
        """
        if loss.data.size != 1:
            raise ShapeError(
                f"backward() needs a scalar loss, got shape {loss.shape}", axis='loss')

        produced = {id(node.output) for node in self.nodes}
        leaves = {}
        for node in self.nodes:
            for tensor in node.inputs:
                if tensor.requires_grad and id(tensor) not in produced:
                    leaves[id(tensor)] = tensor
        if loss.requires_grad and id(loss) not in produced:
            leaves[id(loss)] = loss

        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            grad = grads.pop(id(node.output), None)
            if grad is None:
                continue
            for tensor, input_grad in zip(node.inputs, node.backward(grad)):
                if input_grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + input_grad
                else:
                    grads[key] = input_grad

        result = {}
        for key, tensor in leaves.items():
            if key in grads:
                grad = np.asarray(grads[key], dtype=tensor.dtype).reshape(tensor.shape)
                tensor.grad = grad
                result[tensor] = grad
        return result


def backward(loss, tape, parameters=None):
    """
    Reverse-mode gradients of a scalar loss.

    Args:
        loss (Tensor): Scalar produced under `tape`.
        tape (Tape): The tape that recorded the computation.
        parameters (iterable[Tensor] | None): When given, the result holds exactly
            these tensors; the ones the loss does not depend on get zero gradients.

    Returns:
        dict: Tensor -> gradient array of identical shape.
    """
    grads = tape.backward(loss)
    if parameters is None:
        return grads
    result = {}
    for param in parameters:
        grad = grads.get(param)
        if grad is None:
            grad = np.zeros_like(param.data)
            param.grad = grad
        result[param] = grad
    return result


def is_recording():
    return _active_tape.get() is not None


def record(data, inputs, backward_fn):
    """
    Wrap an op result in a Tensor and put it on the active tape when needed.

    Args:
        data (np.ndarray): Result of the forward computation.
        inputs (tuple[Tensor]): Operands, in the order `backward_fn` answers for.
        backward_fn (callable): Output gradient -> tuple of input gradients.

    Returns:
        Tensor
    """
    out = Tensor(data, dtype=data.dtype)
    tape = _active_tape.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(Node(tuple(inputs), out, backward_fn))
    return out


def unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing trailing-axis broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    small, large = (a, b) if a.ndim <= b.ndim else (b, a)
    if large.shape[large.ndim - small.ndim:] != small.shape:
        raise ShapeError(
            f"{op}: shapes {a.shape} and {b.shape} are neither equal nor a "
            f"trailing-axis broadcast", axis=-1)


class Tensor:
    """
    Dense row-major array with optional gradient tracking.

    Attributes:
        data (np.ndarray): Contiguous float32 or float64 buffer.
        requires_grad (bool): Whether ops on this tensor are taped.
        grad (np.ndarray | None): Filled in by `Tape.backward` for leaves.
        name (str | None): Dotted parameter name, for parameters.
    """
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is None and arr.dtype in (DTYPES['float32'], DTYPES['float64']):
            dtype = arr.dtype
        arr = np.ascontiguousarray(arr, dtype=resolve_dtype(dtype))
        if arr.ndim > MAX_RANK:
            raise ShapeError(f"rank {arr.ndim} exceeds {MAX_RANK}", axis='rank')
        if arr.size == 0:
            raise ShapeError(f"all extents must be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ''
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, dtype=self.dtype)

    def _wrap(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype), dtype=self.dtype)

    def __add__(self, other):
        other = self._wrap(other)
        _check_broadcast(self, other, 'add')
        a_shape, b_shape = self.shape, other.shape
        add_flops('add', max(self.size, other.size))

        def backward_fn(g):
            return unbroadcast(g, a_shape), unbroadcast(g, b_shape)

        return record(self.data + other.data, (self, other), backward_fn)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._wrap(other)
        _check_broadcast(self, other, 'sub')
        a_shape, b_shape = self.shape, other.shape
        add_flops('sub', max(self.size, other.size))

        def backward_fn(g):
            return unbroadcast(g, a_shape), unbroadcast(-g, b_shape)

        return record(self.data - other.data, (self, other), backward_fn)

    def __rsub__(self, other):
        return self._wrap(other) - self

    def __mul__(self, other):
        other = self._wrap(other)
        _check_broadcast(self, other, 'mul')
        a, b = self.data, other.data
        add_flops('mul', max(self.size, other.size))

        def backward_fn(g):
            return unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)

        return record(a * b, (self, other), backward_fn)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._wrap(other)
        _check_broadcast(self, other, 'div')
        a, b = self.data, other.data
        add_flops('div', max(self.size, other.size))

        def backward_fn(g):
            return unbroadcast(g / b, a.shape), unbroadcast(-g * a / (b * b), b.shape)

        return record(a / b, (self, other), backward_fn)

    def __neg__(self):
        return record(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("Tensor exponents are not supported.")
        a = self.data
        add_flops('pow', self.size)

        def backward_fn(g):
            return (g * exponent * a ** (exponent - 1),)

        return record(a ** exponent, (self,), backward_fn)

    def __matmul__(self, other):
        from .functional import matmul
        return matmul(self, other)

    def __getitem__(self, key):
        shape, dtype = self.shape, self.dtype

        def backward_fn(g):
            full = np.zeros(shape, dtype=dtype)
            full[key] = g
            return (full,)

        return record(np.ascontiguousarray(self.data[key]), (self,), backward_fn)

    def sqrt(self):
        out = np.sqrt(self.data)
        add_flops('sqrt', self.size)
        return record(out, (self,), lambda g: (g * 0.5 / out,))

    def sum(self, axis=None, keepdims=False):
        shape = self.shape
        add_flops('sum', self.size)

        def backward_fn(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return record(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), backward_fn)

    def mean(self, axis=None, keepdims=False):
        count = self.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        return record(self.data.reshape(shape), (self,), lambda g: (g.reshape(original),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = np.argsort(axes)
        return record(np.ascontiguousarray(self.data.transpose(axes)), (self,),
                      lambda g: (g.transpose(inverse),))


def tensor(data, requires_grad=False, dtype=None, name=None):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype, name=name)
