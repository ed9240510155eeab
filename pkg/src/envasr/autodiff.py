"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray plus an optional gradient. Every operation records
a backward closure on its output node; calling ``backward()`` on a scalar
walks the recorded graph once in reverse topological order, accumulates
gradients into the leaves, and frees the graph.

Arithmetic runs in float64 by default (the precision the numeric checks
assume); models may opt into float32 per tensor for training speed.
"""

import math
from contextlib import contextmanager

import numpy as np

_FLOAT_DTYPES = (np.float32, np.float64)

_default_dtype = np.float64
_grad_enabled = True
_debug_checks = False


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype).type
    if dtype not in _FLOAT_DTYPES:
        raise ValueError("default dtype must be float32 or float64")
    _default_dtype = dtype


def default_dtype():
    return _default_dtype


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / frozen passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_debug_checks(enabled: bool) -> None:
    """Toggle the NaN/Inf check that runs after every operation."""
    global _debug_checks
    _debug_checks = bool(enabled)


@contextmanager
def debug_checks():
    prev = _debug_checks
    set_debug_checks(True)
    try:
        yield
    finally:
        set_debug_checks(prev)


class Tensor:
    """N-dimensional array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = np.ascontiguousarray(arr, dtype=dtype)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = np.ascontiguousarray(arr, dtype=_default_dtype)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar; frees the graph afterwards."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar, got shape {self.data.shape}")
        topo = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()
            if node._parents:
                # interior node: release tape entry and buffer
                node._backward = None
                node._parents = ()
                node.grad = None


def _toposort(root: Tensor):
    """Iterative post-order over the parent DAG (graphs can be deep)."""
    topo = []
    visited = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        nxt = next((p for p in parents if id(p) not in visited), None)
        if nxt is None:
            topo.append(node)
            stack.pop()
        else:
            visited.add(id(nxt))
            stack.append((nxt, iter(nxt._parents)))
    return topo


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by '{op}'")


def _node(data: np.ndarray, parents) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
    return out


def _finish(out: Tensor, backward, op: str) -> Tensor:
    if _debug_checks:
        _check_finite(out.data, op)
    if out._parents:
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad += g


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and broadcasting ops


def add(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out = _node(a.data + b.data, (a, b))

    def backward():
        _accum(a, _unbroadcast(out.grad, a.data.shape))
        _accum(b, _unbroadcast(out.grad, b.data.shape))

    return _finish(out, backward, "add")


def sub(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out = _node(a.data - b.data, (a, b))

    def backward():
        _accum(a, _unbroadcast(out.grad, a.data.shape))
        _accum(b, _unbroadcast(-out.grad, b.data.shape))

    return _finish(out, backward, "sub")


def mul(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out = _node(a.data * b.data, (a, b))

    def backward():
        _accum(a, _unbroadcast(out.grad * b.data, a.data.shape))
        _accum(b, _unbroadcast(out.grad * a.data, b.data.shape))

    return _finish(out, backward, "mul")


def div(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    out = _node(a.data / b.data, (a, b))

    def backward():
        _accum(a, _unbroadcast(out.grad / b.data, a.data.shape))
        _accum(b, _unbroadcast(-out.grad * a.data / (b.data * b.data), b.data.shape))

    return _finish(out, backward, "div")


def neg(a: Tensor) -> Tensor:
    out = _node(-a.data, (a,))

    def backward():
        _accum(a, -out.grad)

    return _finish(out, backward, "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    out = _node(a.data ** exponent, (a,))

    def backward():
        _accum(a, out.grad * exponent * a.data ** (exponent - 1.0))

    return _finish(out, backward, "power")


def exp(a: Tensor) -> Tensor:
    out = _node(np.exp(a.data), (a,))

    def backward():
        _accum(a, out.grad * out.data)

    return _finish(out, backward, "exp")


def log(a: Tensor) -> Tensor:
    out = _node(np.log(a.data), (a,))

    def backward():
        _accum(a, out.grad / a.data)

    return _finish(out, backward, "log")


def sqrt(a: Tensor) -> Tensor:
    out = _node(np.sqrt(a.data), (a,))

    def backward():
        _accum(a, out.grad / (2.0 * out.data))

    return _finish(out, backward, "sqrt")


def tanh(a: Tensor) -> Tensor:
    out = _node(np.tanh(a.data), (a,))

    def backward():
        _accum(a, out.grad * (1.0 - out.data * out.data))

    return _finish(out, backward, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = _node(1.0 / (1.0 + np.exp(-a.data)), (a,))

    def backward():
        _accum(a, out.grad * out.data * (1.0 - out.data))

    return _finish(out, backward, "sigmoid")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """tanh-form GELU (smooth, so finite-difference checks behave)."""
    inner = mul(add(a, mul(power(a, 3.0), 0.044715)), _GELU_C)
    return mul(mul(a, add(tanh(inner), 1.0)), 0.5)


def swish(a: Tensor) -> Tensor:
    return mul(a, sigmoid(a))


# ---------------------------------------------------------------------------
# shape ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul requires tensors with ndim >= 2")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(
            f"matmul shape mismatch: {a.data.shape} x {b.data.shape}"
        )
    out = _node(np.matmul(a.data, b.data), (a, b))

    def backward():
        ga = np.matmul(out.grad, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), out.grad)
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _finish(out, backward, "matmul")


def transpose(a: Tensor, axes=None) -> Tensor:
    out = _node(np.transpose(a.data, axes), (a,))
    if axes is None:
        inverse = None
    else:
        inverse = np.argsort(axes)

    def backward():
        _accum(a, np.transpose(out.grad, inverse))

    return _finish(out, backward, "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    out = _node(a.data.reshape(shape), (a,))

    def backward():
        _accum(a, out.grad.reshape(a.data.shape))

    return _finish(out, backward, "reshape")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat requires at least one tensor")
    out = _node(np.concatenate([t.data for t in tensors], axis=axis), tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, out.grad[tuple(idx)])

    return _finish(out, backward, "concat")


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = _node(a.data[idx], (a,))

    def backward():
        g = np.zeros_like(a.data)
        g[idx] = out.grad
        _accum(a, g)

    return _finish(out, backward, "narrow")


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = _node(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def backward():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _finish(out, backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of `table` by integer index; backward scatter-adds."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError("embedding ids must be 1-D")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ValueError("embedding id out of range")
    out = _node(table.data[ids], (table,))

    def backward():
        g = np.zeros_like(table.data)
        np.add.at(g, ids, out.grad)
        _accum(table, g)

    return _finish(out, backward, "embedding")


# ---------------------------------------------------------------------------
# normalization, softmax, losses


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if a.data.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _node(y, (a,))

    def backward():
        g = out.grad
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accum(a, (g - dot) * y)

    return _finish(out, backward, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    if a.data.shape[axis] == 0:
        raise ValueError("log_softmax over an empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    out = _node(y, (a,))

    def backward():
        g = out.grad
        _accum(a, g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return _finish(out, backward, "log_softmax")


def standardize(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero mean / unit variance over the last axis (the core of both norms)."""
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = centered * inv
    out = _node(y, (a,))

    def backward():
        g = out.grad
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        _accum(a, (g - gm - y * gy) * inv)

    return _finish(out, backward, "standardize")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-vector normalization over the last axis, then affine."""
    if gamma.data.shape != (x.data.shape[-1],) or beta.data.shape != (x.data.shape[-1],):
        raise ValueError("layer_norm affine parameters must match the last axis")
    return add(mul(standardize(x, eps), gamma), beta)


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization of a (channels, length) tensor.

    Statistics are taken over the length axis of this sample only; no batch
    state is involved.
    """
    if x.data.ndim != 2:
        raise ValueError("instance_norm expects a (channels, length) tensor")
    c = x.data.shape[0]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ValueError("instance_norm affine parameters must match the channel axis")
    g = reshape(gamma, (c, 1))
    b = reshape(beta, (c, 1))
    return add(mul(standardize(x, eps), g), b)


def cross_entropy(logits: Tensor, targets, ignore=None) -> Tensor:
    """Mean negative log-likelihood over rows not flagged in `ignore`."""
    if logits.data.ndim != 2:
        raise ValueError("cross_entropy expects (n, vocab) logits")
    n, v = logits.data.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (n,):
        raise ValueError("targets must have one class id per logit row")
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise ValueError("target id out of range")
    if ignore is None:
        keep = np.ones(n, dtype=bool)
    else:
        keep = ~np.asarray(ignore, dtype=bool)
    m = int(keep.sum())
    if m == 0:
        raise ValueError("cross_entropy: every position is ignored")

    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1))
    nll = lse - shifted[np.arange(n), targets]
    value = nll[keep].mean()
    out = _node(np.asarray(value, dtype=logits.data.dtype), (logits,))

    def backward():
        probs = np.exp(shifted - lse[:, None])
        probs[np.arange(n), targets] -= 1.0
        probs[~keep] = 0.0
        _accum(logits, out.grad * probs / m)

    return _finish(out, backward, "cross_entropy")


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int, return_weights: bool = False):
    """Multi-head scaled dot-product attention on (time, dim) tensors."""
    tq, d = q.data.shape
    tk = k.data.shape[0]
    if d % heads != 0:
        raise ValueError(f"model dim {d} not divisible by {heads} heads")
    if k.data.shape != (tk, d) or v.data.shape != (tk, d):
        raise ValueError("key/value shape mismatch")
    dh = d // heads

    def split(t, n):
        return transpose(reshape(t, (n, heads, dh)), (1, 0, 2))

    qh = split(q, tq)
    kh = split(k, tk)
    vh = split(v, tk)
    scores = mul(matmul(qh, transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(dh))
    weights = softmax(scores, axis=-1)
    mixed = matmul(weights, vh)
    out = reshape(transpose(mixed, (1, 0, 2)), (tq, d))
    if return_weights:
        return out, weights
    return out


# ---------------------------------------------------------------------------
# temporal convolutions


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """1-D convolution over time, no padding. x:(T,Din) w:(K,Din,Dout) b:(Dout,)."""
    t, din = x.data.shape
    kk, win, dout = w.data.shape
    if win != din:
        raise ValueError(f"conv1d channel mismatch: input {din}, weight {win}")
    if t < kk:
        raise ValueError(f"conv1d input length {t} shorter than kernel {kk}")
    t_out = (t - kk) // stride + 1
    y = np.tile(b.data, (t_out, 1)).astype(x.data.dtype)
    for j in range(kk):
        y += np.matmul(x.data[j : j + (t_out - 1) * stride + 1 : stride], w.data[j])
    out = _node(y, (x, w, b))

    def backward():
        g = out.grad
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(w.data)
        for j in range(kk):
            sl = slice(j, j + (t_out - 1) * stride + 1, stride)
            gx[sl] += np.matmul(g, w.data[j].T)
            gw[j] = np.matmul(x.data[sl].T, g)
        _accum(x, gx)
        _accum(w, gw)
        _accum(b, g.sum(axis=0))

    return _finish(out, backward, "conv1d")


def depthwise_conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-channel 1-D convolution with same padding. x:(T,D) w:(K,D) b:(D,)."""
    t, d = x.data.shape
    kk = w.data.shape[0]
    if kk % 2 == 0:
        raise ValueError("depthwise kernel width must be odd")
    if w.data.shape != (kk, d) or b.data.shape != (d,):
        raise ValueError("depthwise weight shape mismatch")
    pad = (kk - 1) // 2
    xp = np.pad(x.data, ((pad, pad), (0, 0)))
    y = np.tile(b.data, (t, 1)).astype(x.data.dtype)
    for j in range(kk):
        y += xp[j : j + t] * w.data[j]
    out = _node(y, (x, w, b))

    def backward():
        g = out.grad
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for j in range(kk):
            gxp[j : j + t] += g * w.data[j]
            gw[j] = (xp[j : j + t] * g).sum(axis=0)
        _accum(x, gxp[pad : pad + t])
        _accum(w, gw)
        _accum(b, g.sum(axis=0))

    return _finish(out, backward, "depthwise_conv1d")


# ---------------------------------------------------------------------------
# numeric gradient checking


def numeric_gradient(f, t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar f() w.r.t. t.data."""
    g = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gf = g.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
    return g


def check_gradients(f, wrt, rtol: float = 1e-4, atol: float = 1e-7, h: float = 1e-5) -> float:
    """Compare reverse-mode gradients of scalar f() against central differences.

    Returns the worst relative error and raises AssertionError past tolerance.
    """
    wrt = list(wrt)
    for t in wrt:
        t.grad = None
    loss = f()
    loss.backward()
    worst = 0.0
    for t in wrt:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        numeric = numeric_gradient(f, t, h=h)
        denom = np.maximum(np.abs(analytic), np.abs(numeric))
        err = np.abs(analytic - numeric)
        rel = err / np.maximum(denom, atol / rtol)
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
        if not np.all(err <= atol + rtol * denom):
            idx = np.unravel_index(np.argmax(err - rtol * denom), err.shape)
            raise AssertionError(
                f"gradient mismatch at {idx}: analytic {analytic[idx]:.8g} "
                f"vs numeric {numeric[idx]:.8g}"
            )
    return worst
