"""Tape-based reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tape` records every operation applied through it. Calling
:func:`backward` on a scalar produced on that tape walks the records in
reverse and writes ``d(root)/d(leaf)`` into ``leaf.grad`` for every leaf
tensor created with ``requires_grad=True``.

Only a small, fixed op set is supported; there is no implicit broadcasting
apart from ``add_row_bias``.

Example::

    tape = Tape()
    w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    loss = tape.sum(tape.square(w))
    backward(tape, loss)
    w.grad  # array([2., 4., 6.])
"""

import numpy as np

from .errors import ContractError, DimensionError, NumericError

LOG_FLOOR = 1e-12

OP_KINDS = (
    "add",
    "sub",
    "mul_elementwise",
    "matmul",
    "tanh",
    "sigmoid",
    "relu",
    "exp",
    "log",
    "abs",
    "square",
    "sum",
    "mean",
    "concat_last_dim",
    "add_row_bias",
)


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data.copy()

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def as_tensor(value):
    """Wrap arrays and scalars as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class _Node:
    __slots__ = ("kind", "inputs", "output", "saved")

    def __init__(self, kind, inputs, output, saved):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.saved = saved


# ---------------------------------------------------------------------------
# shape rules
# ---------------------------------------------------------------------------


def _mismatch(kind, shapes):
    return DimensionError(f"{kind}: incompatible shapes " + " and ".join(str(s) for s in shapes))


def _check_shapes(kind, arrays):
    if kind in ("add", "sub", "mul_elementwise"):
        a, b = arrays
        if a.shape != b.shape:
            raise _mismatch(kind, [a.shape, b.shape])
    elif kind == "matmul":
        a, b = arrays
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise _mismatch(kind, [a.shape, b.shape])
    elif kind == "add_row_bias":
        x, b = arrays
        if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
            raise _mismatch(kind, [x.shape, b.shape])
    elif kind == "concat_last_dim":
        if not arrays:
            raise DimensionError("concat_last_dim: needs at least one input")
        lead = arrays[0].shape[:-1]
        if any(a.ndim == 0 or a.shape[:-1] != lead for a in arrays):
            raise _mismatch(kind, [a.shape for a in arrays])


# ---------------------------------------------------------------------------
# forward and backward rules
#
# forward(*arrays) -> (out, saved)
# backward(g, arrays, out, saved) -> tuple of input gradients
# ---------------------------------------------------------------------------


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _fwd_concat(*arrays):
    return np.concatenate(arrays, axis=-1), None


def _bwd_concat(g, arrays, out, saved):
    edges = np.cumsum([a.shape[-1] for a in arrays])[:-1]
    return tuple(np.split(g, edges, axis=-1))


FORWARD = {
    "add": lambda a, b: (a + b, None),
    "sub": lambda a, b: (a - b, None),
    "mul_elementwise": lambda a, b: (a * b, None),
    "matmul": lambda a, b: (a @ b, None),
    "tanh": lambda x: (np.tanh(x), None),
    "sigmoid": lambda x: (_sigmoid(x), None),
    "relu": lambda x: (np.maximum(x, 0.0), None),
    "exp": lambda x: (np.exp(x), None),
    "log": lambda x: (np.log(np.maximum(x, LOG_FLOOR)), None),
    "abs": lambda x: (np.abs(x), None),
    "square": lambda x: (x * x, None),
    "sum": lambda x: (np.asarray(x.sum()), None),
    "mean": lambda x: (np.asarray(x.mean()), None),
    "concat_last_dim": _fwd_concat,
    "add_row_bias": lambda x, b: (x + b, None),
}

BACKWARD = {
    "add": lambda g, xs, out, s: (g, g),
    "sub": lambda g, xs, out, s: (g, -g),
    "mul_elementwise": lambda g, xs, out, s: (g * xs[1], g * xs[0]),
    "matmul": lambda g, xs, out, s: (g @ xs[1].T, xs[0].T @ g),
    "tanh": lambda g, xs, out, s: (g * (1.0 - out * out),),
    "sigmoid": lambda g, xs, out, s: (g * out * (1.0 - out),),
    "relu": lambda g, xs, out, s: (g * (xs[0] > 0.0),),
    "exp": lambda g, xs, out, s: (g * out,),
    "log": lambda g, xs, out, s: (np.where(xs[0] > LOG_FLOOR, g / np.maximum(xs[0], LOG_FLOOR), 0.0),),
    # np.sign(0) == 0 gives the zero subgradient at the kink
    "abs": lambda g, xs, out, s: (g * np.sign(xs[0]),),
    "square": lambda g, xs, out, s: (2.0 * g * xs[0],),
    "sum": lambda g, xs, out, s: (np.full(xs[0].shape, float(g)),),
    "mean": lambda g, xs, out, s: (np.full(xs[0].shape, float(g) / max(xs[0].size, 1)),),
    "concat_last_dim": _bwd_concat,
    "add_row_bias": lambda g, xs, out, s: (g, g.sum(axis=0)),
}


class Tape:
    """Ordered record of operations for one forward pass.

    Tapes are cheap; build a new one per training step. Recording never
    touches global state, so independent tapes may live on different threads.
    """

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def apply(self, kind, *inputs):
        """Run op ``kind`` on ``inputs`` and record it."""
        if kind not in FORWARD:
            raise ContractError(f"unknown op kind {kind!r}")
        tensors = [as_tensor(t) for t in inputs]
        arrays = [t.data for t in tensors]
        _check_shapes(kind, arrays)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out, saved = FORWARD[kind](*arrays)
        if not np.all(np.isfinite(out)):
            raise NumericError(f"{kind}: non-finite output")
        result = Tensor.__new__(Tensor)
        result.data = out
        result.grad = None
        result.requires_grad = any(t.requires_grad for t in tensors)
        result.name = None
        self.nodes.append(_Node(kind, tensors, result, saved))
        return result

    # thin named wrappers, mostly for readability at call sites
    def add(self, a, b):
        return self.apply("add", a, b)

    def sub(self, a, b):
        return self.apply("sub", a, b)

    def mul(self, a, b):
        return self.apply("mul_elementwise", a, b)

    def matmul(self, a, b):
        return self.apply("matmul", a, b)

    def tanh(self, x):
        return self.apply("tanh", x)

    def sigmoid(self, x):
        return self.apply("sigmoid", x)

    def relu(self, x):
        return self.apply("relu", x)

    def exp(self, x):
        return self.apply("exp", x)

    def log(self, x):
        return self.apply("log", x)

    def abs(self, x):
        return self.apply("abs", x)

    def square(self, x):
        return self.apply("square", x)

    def sum(self, x):
        return self.apply("sum", x)

    def mean(self, x):
        return self.apply("mean", x)

    def concat(self, tensors):
        return self.apply("concat_last_dim", *tensors)

    def add_row_bias(self, x, b):
        return self.apply("add_row_bias", x, b)

    def scale(self, x, c):
        """Multiply by a constant (scalar or array broadcast to ``x``'s shape)."""
        x = as_tensor(x)
        return self.mul(x, Tensor(np.broadcast_to(np.asarray(c, dtype=np.float64), x.shape)))

    def shift(self, x, c):
        """Add a constant (scalar or array broadcast to ``x``'s shape)."""
        x = as_tensor(x)
        return self.add(x, Tensor(np.broadcast_to(np.asarray(c, dtype=np.float64), x.shape)))


def forward_op(tape, op_kind, inputs):
    """Functional entry point: apply ``op_kind`` to a list of inputs on ``tape``."""
    return tape.apply(op_kind, *inputs)


def backward(tape, root):
    """Populate ``.grad`` of every ``requires_grad`` leaf reachable from ``root``.

    Gradients from multiple paths are summed. Leaf gradients are overwritten,
    not accumulated across calls. Leaves that are recorded on the tape but get
    no gradient flow receive zeros.
    """
    if root.data.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    produced = {id(n.output) for n in tape.nodes}
    if id(root) not in produced:
        raise ContractError("backward root was not produced on this tape")

    grads = {id(root): np.ones_like(root.data)}
    leaves = {}
    for node in reversed(tape.nodes):
        for t in node.inputs:
            if t.requires_grad and id(t) not in produced:
                leaves[id(t)] = t
        g = grads.pop(id(node.output), None)
        if g is None or not node.output.requires_grad:
            continue
        arrays = [t.data for t in node.inputs]
        in_grads = BACKWARD[node.kind](g, arrays, node.output.data, node.saved)
        for t, gi in zip(node.inputs, in_grads):
            if not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.array(gi, dtype=np.float64)
    for key, leaf in leaves.items():
        g = grads.get(key)
        leaf.grad = np.zeros_like(leaf.data) if g is None else g.reshape(leaf.data.shape)


def finite_difference_check(f, point, h=1e-5):
    """Max relative error between the tape gradient and central differences.

    ``f(tape, x)`` must build a scalar from tensor ``x`` on ``tape``. The
    relative error per coordinate is ``|a - c| / max(|a|, |c|, 1e-8)``.
    """
    if h <= 0:
        raise ContractError("h must be positive")
    base = np.array(as_tensor(point).data, dtype=np.float64)

    x = Tensor(base, requires_grad=True)
    tape = Tape()
    root = f(tape, x)
    backward(tape, root)
    analytic = x.grad.reshape(-1)

    flat = base.reshape(-1)
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        up = flat.copy()
        up[i] += h
        down = flat.copy()
        down[i] -= h
        f_up = f(Tape(), Tensor(up.reshape(base.shape))).item()
        f_down = f(Tape(), Tensor(down.reshape(base.shape))).item()
        numeric[i] = (f_up - f_down) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    if flat.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / denom))
