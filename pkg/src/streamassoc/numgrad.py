"""Tape-style reverse-mode differentiation over dense float64 matrices.

Every value is a 2-D ``numpy`` array. A :class:`Graph` records each
operation as a :class:`Node`; :meth:`Graph.backward` sweeps the tape in
reverse and accumulates adjoints. Graphs are meant to be rebuilt for every
training step.

Example::

    g = Graph()
    x = g.leaf(np.array([[1.0, 2.0]]))
    loss = g.sum(x * x)
    grads = g.backward(loss)
    grads[x]  # array([[2., 4.]])
"""

import numpy as np

LOG_FLOOR = 1e-12


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A precondition of an operation is violated."""


class GradientCheckError(AssertionError):
    """Analytic and numeric gradients disagree beyond tolerance."""


def as_matrix(x):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


class Node:
    __slots__ = ("graph", "id", "op", "inputs", "value", "_backward")

    def __init__(self, graph, id, op, inputs, value, backward):
        self.graph = graph
        self.id = id
        self.op = op
        self.inputs = inputs
        self.value = value
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.id}, {self.op}, shape={self.shape})"

    def __add__(self, other):
        return self.graph.add(self, other)

    def __sub__(self, other):
        return self.graph.sub(self, other)

    def __mul__(self, other):
        return self.graph.mul(self, other)

    def __matmul__(self, other):
        return self.graph.matmul(self, other)

    def __neg__(self):
        return self.graph.scale(self, -1.0)

    @property
    def T(self):
        return self.graph.transpose(self)


def _unbroadcast(grad, shape):
    # Reduce a gradient back to a row- or column-broadcast operand shape.
    if grad.shape == shape:
        return grad
    if shape[0] == 1 and grad.shape[0] != 1:
        grad = grad.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        grad = grad.sum(axis=1, keepdims=True)
    return grad


def _broadcast_shape(a, b):
    """Shape of an elementwise result; only row/column vectors broadcast."""
    if a == b:
        return a
    out = []
    for da, db in zip(a, b):
        if da == db or db == 1:
            out.append(da)
        elif da == 1:
            out.append(db)
        else:
            raise DimensionError(f"cannot combine shapes {a} and {b}")
    return tuple(out)


_AXES = {"cols": 0, "columns": 0, "rows": 1, "all": None}


class Graph:
    """A tape of differentiable matrix operations."""

    def __init__(self):
        self.nodes = []
        self.adjoints = {}

    def _push(self, op, inputs, value, backward=None):
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"non-finite output from {op}")
        node = Node(self, len(self.nodes), op, tuple(inputs), value, backward)
        self.nodes.append(node)
        return node

    def _node(self, x):
        if isinstance(x, Node):
            if x.graph is not self:
                raise ContractError("node belongs to a different graph")
            return x
        return self.constant(x)

    # -- leaves -----------------------------------------------------------

    def leaf(self, value):
        """A differentiable input."""
        return self._push("leaf", (), as_matrix(value).copy())

    def constant(self, value):
        """A non-differentiable input (labels, weights, masks)."""
        return self._push("const", (), as_matrix(value).copy())

    # -- linear algebra ---------------------------------------------------

    def matmul(self, a, b):
        a, b = self._node(a), self._node(b)
        if a.shape[1] != b.shape[0]:
            raise DimensionError(
                f"matmul shape mismatch: {a.shape} x {b.shape}")
        av, bv = a.value, b.value

        def backward(g):
            return g @ bv.T, av.T @ g

        return self._push("matmul", (a, b), av @ bv, backward)

    def transpose(self, a):
        a = self._node(a)
        return self._push("transpose", (a,), a.value.T.copy(),
                          lambda g: (g.T,))

    # -- elementwise ------------------------------------------------------

    def _binary(self, kind, a, b):
        a, b = self._node(a), self._node(b)
        _broadcast_shape(a.shape, b.shape)
        av, bv = a.value, b.value
        sa, sb = a.shape, b.shape
        if kind == "add":
            out = av + bv

            def backward(g):
                return _unbroadcast(g, sa), _unbroadcast(g, sb)
        elif kind == "sub":
            out = av - bv

            def backward(g):
                return _unbroadcast(g, sa), _unbroadcast(-g, sb)
        elif kind == "mul":
            out = av * bv

            def backward(g):
                return _unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)
        else:
            raise ValueError(f"unknown elementwise kind {kind!r}")
        return self._push(kind, (a, b), out, backward)

    def elementwise(self, a, b, kind):
        return self._binary(kind, a, b)

    def add(self, a, b):
        return self._binary("add", a, b)

    def sub(self, a, b):
        return self._binary("sub", a, b)

    def mul(self, a, b):
        return self._binary("mul", a, b)

    def scale(self, a, s):
        a = self._node(a)
        s = float(s)
        return self._push("scale", (a,), a.value * s, lambda g: (g * s,))

    def log(self, a):
        """Natural log of ``max(a, LOG_FLOOR)``; zero gradient below the floor."""
        a = self._node(a)
        av = a.value
        clipped = np.maximum(av, LOG_FLOOR)

        def backward(g):
            return (np.where(av > LOG_FLOOR, g / clipped, 0.0),)

        return self._push("log", (a,), np.log(clipped), backward)

    def tanh(self, a):
        a = self._node(a)
        out = np.tanh(a.value)
        return self._push("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))

    # -- softmax ----------------------------------------------------------

    def row_softmax(self, a):
        a = self._node(a)
        if a.value.size == 0:
            raise ContractError("row_softmax of an empty matrix")
        p = _softmax(a.value)

        def backward(g):
            return (p * (g - np.sum(g * p, axis=1, keepdims=True)),)

        return self._push("row_softmax", (a,), p, backward)

    def log_softmax(self, a):
        a = self._node(a)
        if a.value.size == 0:
            raise ContractError("log_softmax of an empty matrix")
        shifted = a.value - a.value.max(axis=1, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        p = np.exp(out)

        def backward(g):
            return (g - p * g.sum(axis=1, keepdims=True),)

        return self._push("log_softmax", (a,), out, backward)

    # -- reductions -------------------------------------------------------

    def reduce(self, a, axis=None, kind="sum"):
        """Sum or mean over ``axis``.

        ``axis`` is 0 / ``"cols"`` (collapse rows, one value per column),
        1 / ``"rows"`` (one value per row) or None / ``"all"``. The result
        stays 2-D: ``1 x n``, ``m x 1`` or ``1 x 1``.
        """
        axis = _AXES.get(axis, axis)
        a = self._node(a)
        m, n = a.shape
        if kind == "sum":
            count = 1
        elif kind == "mean":
            count = {None: m * n, 0: m, 1: n}[axis]
            if count == 0:
                raise ContractError("mean over an empty axis")
        else:
            raise ValueError(f"unknown reduction {kind!r}")
        if axis is None:
            out = np.array([[a.value.sum()]])
        elif axis in (0, 1):
            out = a.value.sum(axis=axis, keepdims=True)
        else:
            raise ValueError(f"axis must be 0, 1 or None, got {axis!r}")
        out = out / count

        def backward(g):
            return (np.broadcast_to(g / count, (m, n)).copy(),)

        return self._push(f"{kind}", (a,), out, backward)

    def sum(self, a, axis=None):
        return self.reduce(a, axis, "sum")

    def mean(self, a, axis=None):
        return self.reduce(a, axis, "mean")

    # -- reverse sweep ----------------------------------------------------

    def backward(self, root):
        """Populate adjoints from scalar ``root``; return ``{leaf: grad}``."""
        root = self._node(root)
        if root.shape != (1, 1):
            raise ContractError(
                f"backward() needs a 1x1 root, got shape {root.shape}")
        adj = {root.id: np.ones((1, 1))}
        for node in reversed(self.nodes[: root.id + 1]):
            g = adj.get(node.id)
            if g is None or node._backward is None:
                continue
            for inp, gi in zip(node.inputs, node._backward(g)):
                if inp.id in adj:
                    adj[inp.id] = adj[inp.id] + gi
                else:
                    adj[inp.id] = gi
        self.adjoints = {
            n.id: adj.get(n.id, np.zeros(n.shape))
            for n in self.nodes[: root.id + 1]
        }
        return {n: self.adjoints[n.id] for n in self.nodes
                if n.op == "leaf" and n.id in self.adjoints}

    def grad(self, node):
        return self.adjoints.get(node.id, np.zeros(node.shape))


def _softmax(a):
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax(a):
    """Row softmax on a plain array (no graph)."""
    return _softmax(as_matrix(a))


# convenience wrappers mirroring the Graph methods


def matmul(a, b):
    return a.graph.matmul(a, b)


def row_softmax(a):
    return a.graph.row_softmax(a)


def elementwise(a, b, kind):
    return a.graph.elementwise(a, b, kind)


def log(a):
    return a.graph.log(a)


def scale(a, s):
    return a.graph.scale(a, s)


def reduce(a, axis=None, kind="sum"):
    return a.graph.reduce(a, axis, kind)


def backward(graph, root):
    return graph.backward(root)


def grad_check(f, x, step=1e-5, tol=None):
    """Compare reverse-mode gradients of ``f`` with central differences.

    ``f(graph, *leaves)`` must build a scalar node. ``x`` is one array or a
    tuple of arrays, one per leaf. Returns the max over entries of
    ``|analytic - numeric| / max(1, |numeric|)``; raises
    :class:`GradientCheckError` when ``tol`` is given and exceeded.
    """
    xs = tuple(as_matrix(v).copy() for v in (x if isinstance(x, tuple) else (x,)))

    g = Graph()
    leaves = [g.leaf(v) for v in xs]
    root = f(g, *leaves)
    grads = g.backward(root)
    analytic = [grads.get(lf, np.zeros(lf.shape)) for lf in leaves]

    def value():
        h = Graph()
        return float(f(h, *[h.leaf(v) for v in xs]).value[0, 0])

    worst = 0.0
    for k, base in enumerate(xs):
        for idx in np.ndindex(base.shape):
            orig = base[idx]
            base[idx] = orig + step
            up = value()
            base[idx] = orig - step
            down = value()
            base[idx] = orig
            numeric = (up - down) / (2.0 * step)
            err = abs(analytic[k][idx] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    if tol is not None and worst > tol:
        raise GradientCheckError(
            f"max relative gradient error {worst:.3e} exceeds {tol:.1e}")
    return worst
