"""Taped reverse-mode differentiation over dense 2-D float64 arrays.

Every value is a 2-D ``numpy`` array wrapped in a :class:`Node`.  Each op
appends its output node to the :class:`Tape` shared by its inputs, so the
tape is already in topological order and :meth:`Tape.backward` is a single
reverse sweep.

Example::

    tape = Tape(seed=0)
    w = tape.leaf(np.ones((2, 2)), name="w")
    x = tape.const(np.array([[1.0, 2.0]]))
    loss = sum_all(tanh_op(matmul(x, w)))
    tape.backward(loss)
    w.grad  # dloss/dw
"""

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, UsageError

LOG_CLAMP = 1e-12


class Node:
    __slots__ = ("id", "value", "op", "parents", "tape", "requires_grad",
                 "name", "_grad", "_backward")

    def __init__(self, tape, value, op, parents=(), requires_grad=False,
                 backward=None, name=None):
        self.tape = tape
        self.value = value
        self.op = op
        self.parents = parents
        self.requires_grad = requires_grad
        self.name = name
        self._grad = None
        self._backward = backward
        self.id = tape._register(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self):
        """Adjoint of this node; zeros until backward() reaches it."""
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    def _accumulate(self, g):
        if self._grad is None:
            self._grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self._grad += g

    def __repr__(self):
        label = self.name or self.op
        return f"Node(id={self.id}, op={label}, shape={self.shape})"


class Tape:
    """Append-only record of nodes plus the generator used for dropout masks.

    With ``grad=False`` nothing is recorded and no backward closures are
    kept, which is what evaluation uses.
    """

    def __init__(self, seed=None, grad=True):
        self.nodes = []
        self.grad_enabled = grad
        self.rng = np.random.default_rng(seed)
        self._next_id = 0

    def _register(self, node):
        nid = self._next_id
        self._next_id += 1
        if self.grad_enabled:
            self.nodes.append(node)
        return nid

    def leaf(self, value, name=None):
        """Trainable input; its ``grad`` is filled in by backward()."""
        return Node(self, _as_matrix(value), "leaf", requires_grad=self.grad_enabled,
                    name=name)

    def const(self, value, name=None):
        return Node(self, _as_matrix(value), "const", name=name)

    def backward(self, loss):
        if not self.grad_enabled:
            raise UsageError("tape was created with grad=False")
        if loss.tape is not self:
            raise UsageError("loss node belongs to a different tape")
        if loss.shape != (1, 1):
            raise UsageError(f"loss must be 1x1, got {loss.shape[0]}x{loss.shape[1]}")
        for node in self.nodes:
            node._grad = None
        loss._grad = np.ones((1, 1))
        for node in reversed(self.nodes[: self.nodes.index(loss) + 1]):
            if node._backward is None or node._grad is None:
                continue
            for parent, g in zip(node.parents, node._backward(node._grad)):
                if parent.requires_grad and g is not None:
                    parent._accumulate(g)


def _as_matrix(value):
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"tensors are 2-D, got {arr.ndim}-D input")
    return arr


def _emit(tape, value, op, parents, backward):
    needs = tape.grad_enabled and any(p.requires_grad for p in parents)
    return Node(tape, value, op, parents, requires_grad=needs,
                backward=backward if needs else None)


def _tape_of(*nodes):
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise UsageError("operands live on different tapes")
    return tape


def _broadcast_shape(op, a, b):
    (ra, ca), (rb, cb) = a.shape, b.shape
    rows = ra if rb in (1, ra) else (rb if ra == 1 else None)
    cols = ca if cb in (1, ca) else (cb if ca == 1 else None)
    if rows is None or cols is None:
        raise DimensionError(f"{op}: incompatible shapes {ra}x{ca} and {rb}x{cb}")
    return rows, cols


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions differ for {a.shape[0]}x{a.shape[1]} "
            f"and {b.shape[0]}x{b.shape[1]}")
    tape = _tape_of(a, b)
    av, bv = a.value, b.value

    def backward(g):
        return g @ bv.T, av.T @ g

    return _emit(tape, av @ bv, "matmul", (a, b), backward)


def hadamard(a, b):
    """Elementwise product; either side may be a row or column vector."""
    _broadcast_shape("hadamard", a, b)
    tape = _tape_of(a, b)
    av, bv = a.value, b.value

    def backward(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return _emit(tape, av * bv, "hadamard", (a, b), backward)


def add(a, b):
    _broadcast_shape("add", a, b)
    tape = _tape_of(a, b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _emit(tape, a.value + b.value, "add", (a, b), backward)


def sub(a, b):
    _broadcast_shape("sub", a, b)
    tape = _tape_of(a, b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return _emit(tape, a.value - b.value, "sub", (a, b), backward)


def one_minus(a):
    return _emit(a.tape, 1.0 - a.value, "one_minus", (a,), lambda g: (-g,))


def sigmoid(a):
    # split by sign so exp never overflows
    x = a.value
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * y * (1.0 - y),)

    return _emit(a.tape, y, "sigmoid", (a,), backward)


def tanh_op(a):
    y = np.tanh(a.value)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _emit(a.tape, y, "tanh", (a,), backward)


def identity(a):
    return a


def sum_all(a):
    shape = a.shape

    def backward(g):
        return (np.full(shape, g[0, 0]),)

    return _emit(a.tape, np.array([[a.value.sum()]]), "sum", (a,), backward)


def scale(a, c):
    c = float(c)
    return _emit(a.tape, a.value * c, "scale", (a,), lambda g: (g * c,))


def dropout(a, keep_prob, training):
    """Inverted dropout: scale kept units by 1/keep_prob, identity at eval."""
    if not 0.0 < keep_prob <= 1.0:
        raise ConfigError(f"keep_prob must lie in (0, 1], got {keep_prob}")
    if not training or keep_prob == 1.0:
        return a
    mask = (a.tape.rng.random(a.shape) < keep_prob) / keep_prob

    def backward(g):
        return (g * mask,)

    return _emit(a.tape, a.value * mask, "dropout", (a,), backward)


def row_nll(y, p, positive_only=False):
    """Plain-array NLL per row (summed over columns), with the log clamp."""
    pc = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
    if positive_only:
        return -(y * np.log(pc)).sum(axis=1)
    return -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).sum(axis=1)


def weighted_bernoulli_nll(y, yhat, row_weights, positive_only=False):
    """Sum over rows of ``row_weights[r] * -sum_p log-likelihood(y[r,p] | yhat[r,p])``.

    ``y`` and ``row_weights`` are plain arrays (targets carry no gradient);
    ``row_weights`` has one entry per row.  Predictions are clamped to
    ``[1e-12, 1 - 1e-12]`` before the log, and the clamp is differentiated
    honestly (zero slope outside the band).
    """
    y = _as_matrix(y)
    p = yhat.value
    if y.shape != p.shape:
        raise DimensionError(
            f"bernoulli_nll: targets {y.shape[0]}x{y.shape[1]} vs "
            f"predictions {p.shape[0]}x{p.shape[1]}")
    w = np.asarray(row_weights, dtype=np.float64).reshape(-1, 1)
    if w.shape[0] != p.shape[0]:
        raise DimensionError(
            f"bernoulli_nll: {w.shape[0]} row weights for {p.shape[0]} rows")
    if np.isnan(p).any() or (p < 0.0).any() or (p > 1.0).any():
        raise DomainError("bernoulli_nll: predictions must lie in [0, 1]")
    pc = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
    inside = (p >= LOG_CLAMP) & (p <= 1.0 - LOG_CLAMP)
    if positive_only:
        dp = -y / pc
    else:
        dp = -y / pc + (1.0 - y) / (1.0 - pc)
    value = (w[:, 0] * row_nll(y, p, positive_only)).sum()

    def backward(g):
        return (g[0, 0] * w * dp * inside,)

    return _emit(yhat.tape, np.array([[value]]), "bernoulli_nll", (yhat,), backward)


def bernoulli_nll(y, yhat, mask, positive_only=False):
    """Per-frame negative log-likelihood over the frames where ``mask`` is 1."""
    mask = np.asarray(mask, dtype=np.float64).reshape(-1)
    n = mask.sum()
    if n <= 0:
        raise UsageError("bernoulli_nll: mask selects no frames")
    return weighted_bernoulli_nll(y, yhat, mask / n, positive_only)
