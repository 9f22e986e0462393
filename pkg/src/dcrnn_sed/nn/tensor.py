"""Reverse-mode automatic differentiation on top of ``numpy`` arrays.

Every differentiable operation creates a new ``Tensor`` that remembers its parents and a closure mapping the
gradient of the output onto the gradients of the parents. ``Tensor.backward`` walks this tape in reverse
topological order. Only the operations needed by the CRNN are provided; there is no general broadcasting.
"""

from typing import Callable, Optional, Sequence

import numpy

from dcrnn_sed.common.exceptions import InputValidationError

DEFAULT_DTYPE = numpy.float64

BackwardFn = Callable[[numpy.ndarray], Sequence[Optional[numpy.ndarray]]]


class Tensor:
    """Dense n-dimensional real array that can take part in a gradient tape."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, copy: bool = True):
        dtype = dtype or DEFAULT_DTYPE
        array = numpy.array(data, dtype=dtype) if copy else numpy.asarray(data, dtype=dtype)
        if array.ndim > 0 and 0 in array.shape:
            raise InputValidationError(f"tensor dimensions must be positive, got shape {array.shape}")
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[numpy.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[BackwardFn] = None

    @classmethod
    def from_op(cls, data: numpy.ndarray, parents: Sequence["Tensor"], backward: BackwardFn) -> "Tensor":
        """Wrap the result of an operation, recording it on the tape if any parent requires a gradient."""
        out = cls(data, copy=False)
        if any(parent.requires_grad for parent in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def item(self) -> float:
        if self.data.size != 1:
            raise InputValidationError(f"only single-element tensors can be converted, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> numpy.ndarray:
        return self.data

    def is_finite(self) -> bool:
        """Return whether all values (and the gradient, if present) are finite."""
        finite = bool(numpy.isfinite(self.data).all())
        if self.grad is not None:
            finite = finite and bool(numpy.isfinite(self.grad).all())
        return finite

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, copy=False)

    def backward(self) -> None:
        """Propagate the gradient of this scalar to every tensor on the tape that requires one."""
        if self.data.size != 1:
            raise InputValidationError(
                f"`backward` can only be called on a scalar, got a tensor of shape {self.shape}"
            )
        order = self._topological_order()
        grads = {id(self): numpy.ones_like(self.data)}

        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.is_leaf and node.grad is not None:
                node.grad = node.grad + grad
            else:
                node.grad = grad
            if node._backward is None:
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad

    def _topological_order(self) -> list:
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    # Elementwise arithmetic, restricted to tensors of identical shape or scalars.

    def __add__(self, other):
        other = _as_operand(other, self.shape)
        return Tensor.from_op(self.data + other.data, (self, other), lambda g: (g, _unbroadcast(g, other)))

    __radd__ = __add__

    def __neg__(self):
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_as_operand(other, self.shape))

    def __rsub__(self, other):
        return _as_operand(other, self.shape) + (-self)

    def __mul__(self, other):
        other = _as_operand(other, self.shape)
        a, b = self.data, other.data
        return Tensor.from_op(a * b, (self, other), lambda g: (g * b, _unbroadcast(g * a, other)))

    __rmul__ = __mul__

    def sum(self) -> "Tensor":
        shape = self.shape
        return Tensor.from_op(numpy.asarray(self.data.sum()), (self,), lambda g: (numpy.full(shape, g),))

    def mean(self) -> "Tensor":
        return self.sum() * (1.0 / self.size)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        return Tensor.from_op(self.data.reshape(shape), (self,), lambda g: (g.reshape(original),))

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(numpy.argsort(axes))
        return Tensor.from_op(
            numpy.ascontiguousarray(self.data.transpose(axes)),
            (self,),
            lambda g: (g.transpose(inverse),),
        )


def _as_operand(value, shape) -> Tensor:
    if isinstance(value, Tensor):
        if value.shape not in (shape, ()):
            raise InputValidationError(f"operand shape {value.shape} does not match tensor shape {shape}")
        return value
    array = numpy.asarray(value, dtype=DEFAULT_DTYPE)
    if array.shape not in (shape, ()):
        raise InputValidationError(f"operand shape {array.shape} does not match tensor shape {shape}")
    return Tensor(array, copy=False)


def _unbroadcast(grad: numpy.ndarray, operand: Tensor) -> numpy.ndarray:
    if operand.shape == ():
        return numpy.asarray(grad.sum())
    return grad


def as_tensor(value, requires_grad: bool = False) -> Tensor:
    """Return ``value`` as a ``Tensor``, without copying when it already is one."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=requires_grad)
