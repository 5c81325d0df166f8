"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array (rank <= 4, NHWC for images) plus an
optional tape record: the producing op's parents and a closure that routes
the output gradient to them. ``backward(loss)`` topologically sorts the
recorded graph and runs each closure exactly once, accumulating ``.grad``
on every reachable tensor that participates in gradients. Tensors with
``requires_grad=False`` (frozen parameters, plain data) receive no gradient
and prune traversal of their subgraphs.

Training runs in float32; float64 exists for finite-difference checking.
"""

from contextlib import contextmanager

import numpy as np

from .errors import GraphError, ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    """Numeric array with optional gradient participation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, op=""):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if arr.ndim > 4:
            raise ShapeError(f"tensors are rank <= 4, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._backward = backward_fn
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def detach(self):
        """A view of the same data outside the recorded graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        flags = []
        if self.requires_grad:
            flags.append("grad")
        if self.op:
            flags.append(self.op)
        tail = f" [{', '.join(flags)}]" if flags else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype.name}{tail})"


def record(data, parents, backward_fn, op):
    """Create an op output, recording the tape edge only when useful.

    The output participates in gradients iff recording is enabled and any
    parent does; otherwise the result is a detached constant and backward
    traversal prunes the whole subgraph.
    """
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn, op=op)


def backward(loss):
    """Accumulate d(loss)/d(tensor) for every recorded tensor feeding ``loss``.

    ``loss`` must be scalar and must have been produced by recorded ops;
    each record's closure runs exactly once, in reverse topological order.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    if not loss.requires_grad or loss._backward is None:
        raise GraphError(
            "backward called before a recorded forward pass: the loss has no "
            "gradient-participating inputs"
        )

    order = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        if dtype is not None and x.dtype != dtype:
            raise ShapeError(f"expected dtype {np.dtype(dtype).name}, got {x.dtype.name}")
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else np.float32)
    return Tensor(arr)
