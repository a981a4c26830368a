"""Reverse-mode automatic differentiation over float64 numpy arrays.

Graphs are define-by-run: every operation returns a fresh ``Tensor`` that
records its parents and a closure accumulating gradients into them. Calling
``backward()`` on a scalar fills ``grad`` on every requires-grad tensor
reachable from it; repeated calls accumulate until grads are zeroed.

Non-finite values are propagated untouched (no clamping); use
``Tensor.all_finite()`` to detect them.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "add",
    "sub",
    "mul",
    "div",
    "affine",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "slice_",
    "take_columns",
    "embedding_lookup",
    "leaky_relu",
    "sigmoid",
    "softmax",
    "log_softmax",
    "exp",
    "log",
    "sqrt",
    "dropout",
    "sum_",
    "mean",
    "batch_moments",
    "cross_entropy",
]


class ShapeError(ValueError):
    """Operand shapes incompatible for the named operation."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        shown = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {shown}")


class Tensor:
    """N-dimensional float64 array participating in an autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        # Leaves created with requires_grad get a zero grad buffer up front so
        # that tensors unreachable from a loss still report zero gradient.
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def zero_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def backward(self):
        """Accumulate gradients of this scalar w.r.t. all reachable tensors."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if not self.requires_grad:
            raise ValueError("backward on a tensor that does not require grad")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        # Op outputs get fresh gradients each pass; only leaves accumulate
        # across repeated backward calls.
        for node in topo:
            if node._backward is not None:
                node.grad = None
        _accum(self, np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return affine(self, -1.0, 0.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _lift(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _from_op(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# elementwise arithmetic -------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("add", a.data, b.data)
    out = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    return _from_op(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("sub", a.data, b.data)
    out = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.data.shape))

    return _from_op(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("mul", a.data, b.data)
    out = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _from_op(out, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("div", a.data, b.data)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _from_op(out, (a, b), bwd)


def affine(x, scale: float, shift: float) -> Tensor:
    """Elementwise x * scale + shift with python-scalar coefficients."""
    x = _lift(x)
    out = x.data * scale + shift

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * scale)

    return _from_op(out, (x,), bwd)


# linear algebra ----------------------------------------------------------

def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Preallocating the output avoids page-fault churn on the stacked-matmul
    # path (attention), which is several times faster for large batches.
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    out = np.empty(lead + (a.shape[-2], b.shape[-1]), dtype=np.float64)
    return np.matmul(a, b, out=out)


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise ShapeError("matmul", ad.shape, bd.shape)
    try:
        np.broadcast_shapes(ad.shape[:-2], bd.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", ad.shape, bd.shape) from None
    out = _mm(ad, bd)

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(_mm(g, _swap(bd)), ad.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(_mm(_swap(ad), g), bd.shape))

    return _from_op(out, (a, b), bwd)


def transpose(x, axes=None) -> Tensor:
    x = _lift(x)
    out = np.transpose(x.data, axes)
    inverse = None if axes is None else tuple(np.argsort(axes))

    def bwd(g):
        if x.requires_grad:
            _accum(x, np.transpose(g, inverse))

    return _from_op(out, (x,), bwd)


# shape manipulation ------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = _lift(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.data.shape, tuple(shape)) from None

    def bwd(g):
        if x.requires_grad:
            _accum(x, g.reshape(x.data.shape))

    return _from_op(out, (x,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of zero tensors")
    base = list(tensors[0].data.shape)
    for t in tensors[1:]:
        other = list(t.data.shape)
        if len(other) != len(base) or any(
            i != (axis % len(base)) and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError("concat", tensors[0].data.shape, t.data.shape)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + [t.data.shape[axis] for t in tensors])

    def bwd(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                key = [slice(None)] * g.ndim
                key[axis] = slice(start, stop)
                _accum(t, g[tuple(key)])

    return _from_op(out, tuple(tensors), bwd)


def slice_(x, key) -> Tensor:
    """Basic (non-fancy) slicing; gradient scatters back into a zero buffer."""
    x = _lift(x)
    out = x.data[key]

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[key] = g
            _accum(x, full)

    return _from_op(out, (x,), bwd)


def take_columns(x, cols) -> Tensor:
    """Gather columns of a 2-D tensor. ``cols`` must not contain duplicates."""
    x = _lift(x)
    if x.data.ndim != 2:
        raise ShapeError("take_columns", x.data.shape)
    cols = np.asarray(cols, dtype=np.intp)
    out = x.data[:, cols]

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, cols] = g
            _accum(x, full)

    return _from_op(out, (x,), bwd)


def embedding_lookup(table, codes) -> Tensor:
    """Select columns of an (m, cardinality) table: output row i is column codes[i]."""
    table = _lift(table)
    codes = np.asarray(codes, dtype=np.intp)
    m, cardinality = table.data.shape
    if codes.size and (codes.min() < 0 or codes.max() >= cardinality):
        bad = int(np.argmax((codes < 0) | (codes >= cardinality)))
        raise IndexError(
            f"embedding code {int(codes[bad])} at row {bad} out of range [0, {cardinality})"
        )
    out = table.data[:, codes].T.copy()

    def bwd(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full.T, codes, g)  # duplicate codes accumulate
            _accum(table, full)

    return _from_op(out, (table,), bwd)


# nonlinearities ----------------------------------------------------------

def leaky_relu(x, slope: float = 0.01) -> Tensor:
    x = _lift(x)
    out = np.where(x.data > 0, x.data, slope * x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * np.where(x.data > 0, 1.0, slope))

    return _from_op(out, (x,), bwd)


def sigmoid(x) -> Tensor:
    x = _lift(x)
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * out * (1.0 - out))

    return _from_op(out, (x,), bwd)


def softmax(x, axis: int = -1) -> Tensor:
    x = _lift(x)
    y = x.data - x.data.max(axis=axis, keepdims=True)
    np.exp(y, out=y)
    y /= y.sum(axis=axis, keepdims=True)

    def bwd(g):
        if x.requires_grad:
            gy = g * y
            _accum(x, gy - y * gy.sum(axis=axis, keepdims=True))

    return _from_op(y, (x,), bwd)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = _lift(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    sm = np.exp(out)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g - sm * g.sum(axis=axis, keepdims=True))

    return _from_op(out, (x,), bwd)


def exp(x) -> Tensor:
    x = _lift(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * out)

    return _from_op(out, (x,), bwd)


def log(x) -> Tensor:
    x = _lift(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g / x.data)

    return _from_op(out, (x,), bwd)


def sqrt(x) -> Tensor:
    x = _lift(x)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * 0.5 / out)

    return _from_op(out, (x,), bwd)


def dropout(x, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted-scaling dropout: eval mode is the identity, train mode keeps
    E[output] == input by dividing kept entries by (1 - rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = _lift(x)
    if not training or rate == 0.0:
        return x
    scale = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = x.data * scale

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * scale)

    return _from_op(out, (x,), bwd)


# reductions --------------------------------------------------------------

def _expand_reduced(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g.reshape((1,) * len(shape)), shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    if not keepdims:
        expanded = list(g.shape)
        for a in sorted(axes):
            expanded.insert(a, 1)
        g = g.reshape(expanded)
    return np.broadcast_to(g, shape)


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if x.requires_grad:
            _accum(x, _expand_reduced(g, x.data.shape, axis, keepdims))

    return _from_op(np.asarray(out), (x,), bwd)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size if axis is None else x.data.size // np.asarray(out).size

    def bwd(g):
        if x.requires_grad:
            _accum(x, _expand_reduced(g, x.data.shape, axis, keepdims) / count)

    return _from_op(np.asarray(out), (x,), bwd)


def batch_moments(x, axis: int = 0) -> tuple[Tensor, Tensor]:
    """Differentiable (mean, biased variance) over one axis, keepdims."""
    mu = mean(x, axis=axis, keepdims=True)
    centered = sub(x, mu)
    var = mean(mul(centered, centered), axis=axis, keepdims=True)
    return mu, var


# loss --------------------------------------------------------------------

def cross_entropy(logits, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    logits = _lift(logits)
    if logits.data.ndim != 2:
        raise ShapeError("cross_entropy", logits.data.shape)
    batch, n_classes = logits.data.shape
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape != (batch,):
        raise ShapeError("cross_entropy", logits.data.shape, labels.shape)
    bad = (labels < 0) | (labels >= n_classes)
    if bad.any():
        row = int(np.argmax(bad))
        raise ValueError(f"label {int(labels[row])} at row {row} outside [0, {n_classes})")
    onehot = np.zeros((batch, n_classes))
    onehot[np.arange(batch), labels] = 1.0
    picked = mul(log_softmax(logits, axis=-1), Tensor(onehot))
    return affine(sum_(picked), -1.0 / batch, 0.0)
