"""Dense float tensors with reverse-mode automatic differentiation.

Ops executed while a :class:`Tape` is active are recorded as a Wengert list;
:func:`backward` replays that list in reverse to accumulate gradients into
every ``requires_grad`` leaf. Without an active tape ops run forward-only,
which is the inference fast path.

Layout conventions: row-major float32 by default (float64 is supported so
finite-difference checks can run at full precision). Image tensors are NHWC.
"""

import numpy as np

from .errors import GraphError, ShapeError

_FLOAT_TYPES = (np.float32, np.float64)

_TAPE_STACK = []


class Tape:
    """Ordered record of executed differentiable ops.

    Execution order is a topological order of the data-flow graph, so
    replaying the list in reverse visits every node after all its consumers.
    """

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._nodes)


class _Node:
    __slots__ = ("out", "inputs", "backward_fn", "index", "tape")

    def __init__(self, out, inputs, backward_fn, index, tape):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.index = index
        self.tape = tape


class Tensor:
    """n-dimensional float array, optionally participating in a tape."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_TYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = None

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

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def backward(self):
        backward(self)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=dtype)


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record(out, inputs, backward_fn):
    """Attach `out` to the active tape when any input participates in it."""
    tape = active_tape()
    if tape is None:
        return out
    if not any(t.requires_grad for t in inputs):
        return out
    out.requires_grad = True
    node = _Node(out, inputs, backward_fn, len(tape._nodes), tape)
    out.node = node
    tape._nodes.append(node)
    return out


def backward(loss):
    """Accumulate d(loss)/d(leaf) into .grad of every requires_grad leaf."""
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    if loss.node is None:
        raise GraphError(
            "loss is not recorded on a tape; run the forward pass inside "
            "`with Tape():` and make sure some input has requires_grad=True"
        )
    tape = loss.node.tape
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape._nodes[: loss.node.index + 1]):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward_fn(g)):
            if gi is None:
                continue
            if t.node is not None and t.node.tape is tape:
                prev = grads.get(id(t))
                grads[id(t)] = gi if prev is None else prev + gi
            elif t.requires_grad:
                t.grad = np.array(gi) if t.grad is None else t.grad + gi


def _unbroadcast(g, shape):
    """Sum gradient g back down to `shape` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)

    def bwd(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)

    def bwd(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)

    def bwd(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def neg(a):
    a = as_tensor(a)
    out = Tensor(-a.data)

    def bwd(g):
        return (-g,)

    return _record(out, (a,), bwd)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b):
    """Matrix product. Supports 2D x 2D, batched ND x ND (equal batch dims),
    and ND x 2D (shared right operand, e.g. a weight matrix)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2D operands, got {tuple(a.shape)} x {tuple(b.shape)}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ: {tuple(a.shape)} x {tuple(b.shape)}")
    if a.ndim != b.ndim and b.ndim != 2:
        raise ShapeError(f"matmul: unsupported rank combination {tuple(a.shape)} x {tuple(b.shape)}")
    if a.ndim == b.ndim and a.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions differ: {tuple(a.shape)} x {tuple(b.shape)}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        ga = gb = None
        if a.requires_grad:
            ga = g @ b.data.swapaxes(-1, -2)
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = a.data.swapaxes(-1, -2) @ g
        return ga, gb

    return _record(out, (a, b), bwd)


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(a, shape):
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))

    def bwd(g):
        return (g.reshape(a.shape),)

    return _record(out, (a,), bwd)


def transpose(a, axes=None):
    a = as_tensor(a)
    out = Tensor(a.data.transpose(axes))

    def bwd(g):
        if axes is None:
            return (g.transpose(),)
        inv = np.argsort(axes)
        return (g.transpose(inv),)

    return _record(out, (a,), bwd)


def broadcast_to(a, shape):
    a = as_tensor(a)
    out = Tensor(np.broadcast_to(a.data, shape).copy())

    def bwd(g):
        return (_unbroadcast(g, a.shape),)

    return _record(out, (a,), bwd)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), bwd)


# ---------------------------------------------------------------------------
# reductions

def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(out, (a,), bwd)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, a.shape).copy(),)

    return _record(out, (a,), bwd)


# ---------------------------------------------------------------------------
# activations

def relu(a):
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0))

    def bwd(g):
        return (g * (a.data > 0),)

    return _record(out, (a,), bwd)


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    out = Tensor(y)

    def bwd(g):
        return (g * (1 - y * y),)

    return _record(out, (a,), bwd)


def softmax(a, axis=-1):
    """Numerically stabilized softmax along `axis`; slices sum to 1."""
    a = as_tensor(a)
    if a.shape[axis] == 0:
        raise ShapeError(f"softmax over an empty axis {axis} of shape {tuple(a.shape)}")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _record(out, (a,), bwd)


def dropout(a, p, rng, training=True):
    """Inverted dropout; identity when not training or p == 0."""
    a = as_tensor(a)
    if not training or p <= 0.0:
        return a
    keep = 1.0 - p
    mask = (rng.random(a.shape) < keep).astype(a.data.dtype) / keep
    out = Tensor(a.data * mask)

    def bwd(g):
        return (g * mask,)

    return _record(out, (a,), bwd)
