"""A small reverse-mode autodiff engine on top of numpy.

Every operation returns a :class:`Tensor`; when any input requires a
gradient, the result remembers its parents and a closure that maps the
output gradient to input gradients.  :func:`backward` walks the recorded
graph once in reverse topological order, accumulates gradients on leaf
tensors and then frees the graph.

Training runs in float32; float64 exists for finite-difference checks.
"""

from __future__ import annotations

import contextlib
import io
import math
import struct
from typing import Callable, Iterable, Sequence

import numpy as np

PRECISIONS = {"single": np.float32, "double": np.float64}

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "_freed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple = ()
        self._backward = None
        self.op = "leaf"
        self._freed = False

    # -- introspection -------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def precision(self) -> str:
        return "double" if self.data.dtype == np.float64 else "single"

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_nonscalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- operators -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not np.isscalar(other):
            raise TypeError("only division by a scalar is supported")
        return scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _raise_nonscalar(t):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out.op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise arithmetic ----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _check_broadcast("add", a, b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _check_broadcast("sub", a, b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with broadcasting."""
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _check_broadcast("mul", a, b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; leading dimensions broadcast as in ``numpy.matmul``."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data @ b.data, (a, b), back, "matmul")


# -- shape manipulation ----------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ValueError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _node(data, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    if len({t.shape for t in tensors}) != 1:
        raise ValueError(f"stack: incompatible shapes {[t.shape for t in tensors]}")
    data = np.stack([t.data for t in tensors], axis=axis)
    return _node(data, tensors,
                 lambda g: tuple(np.moveaxis(g, axis, 0)), "stack")


def split(a: Tensor, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    if sum(sizes) != a.shape[axis]:
        raise ValueError(f"split: sizes {list(sizes)} do not cover axis of shape {a.shape}")
    out, start = [], 0
    for n in sizes:
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(start, start + n)
        out.append(getitem(a, tuple(idx)))
        start += n
    return out


def getitem(a: Tensor, idx) -> Tensor:
    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _node(a.data[idx], (a,), back, "getitem")


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; ``ids`` may be any integer array."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding: index out of range for table of shape {table.shape}")

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _node(table.data[ids], (table,), back, "embedding")


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), back, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(tsum(a, axis, keepdims), 1.0 / n)


# -- nonlinearities ------------------------------------------------------------------

def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _node(y, (a,), lambda g: (g * (1 - y * y),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1 + np.tanh(0.5 * a.data))
    return _node(y, (a,), lambda g: (g * y * (1 - y),), "sigmoid")


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return _node(np.where(pos, a.data, 0), (a,), lambda g: (g * pos,), "relu")


def elu(a: Tensor) -> Tensor:
    x = a.data
    neg = np.expm1(np.minimum(x, 0))
    y = np.where(x > 0, x, neg)
    return _node(y, (a,), lambda g: (g * np.where(x > 0, 1, neg + 1),), "elu")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _node(y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` (rows by default)."""
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (a,), back, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def back(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _node(y, (a,), back, "log_softmax")


def cross_entropy(logits: Tensor, targets, reduction: str = "sum") -> Tensor:
    """Negative log-likelihood of integer ``targets`` under row-softmax of ``logits``.

    ``logits`` is (m, C) or (C,); ``reduction`` is ``"sum"`` or ``"mean"``.
    """
    x = logits.data
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if targets.shape != (x.shape[0],):
        raise ValueError(f"cross_entropy: {targets.shape[0]} targets for logits of shape {logits.shape}")
    z = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(targets))
    losses = lse - z[rows, targets]
    div = len(targets) if reduction == "mean" else 1
    value = np.asarray(losses.sum() / div, dtype=x.dtype)

    def back(g):
        p = np.exp(z - lse[:, None])
        p[rows, targets] -= 1
        p *= g / div
        return (p[0] if squeeze else p,)

    return _node(value, (logits,), back, "cross_entropy")


def dropout(a: Tensor, keep: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/keep; identity when not training."""
    if not training or keep >= 1.0:
        return a
    if not 0.0 < keep <= 1.0:
        raise ValueError(f"dropout: keep probability {keep} outside (0, 1]")
    mask = (rng.random(a.shape) < keep).astype(a.dtype) / a.dtype.type(keep)
    return _node(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalise over the last axis, then apply elementwise gain and bias."""
    if gain.shape != (a.shape[-1],) or bias.shape != (a.shape[-1],):
        raise ValueError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs input {a.shape}")
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gain.data + bias.data

    def back(g):
        gx_hat = g * gain.data
        d = x.shape[-1]
        gx = inv / d * (d * gx_hat - gx_hat.sum(axis=-1, keepdims=True)
                        - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True))
        ggain = (g * xhat).reshape(-1, d).sum(axis=0)
        gbias = g.reshape(-1, d).sum(axis=0)
        return gx, ggain, gbias

    return _node(y, (a, gain, bias), back, "layer_norm")


# -- backward ------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf, then free the graph."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._freed:
        raise RuntimeError("backward called twice on the same graph; rebuild the forward pass")
    if not loss.requires_grad:
        raise RuntimeError("loss is detached from every parameter; nothing to differentiate")
    order = _topo_order(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    for node in order:
        if node._backward is not None:
            node._parents = ()
            node._backward = None
            node._freed = True


# -- parameters ------------------------------------------------------------------

class ParameterStore:
    """Named trainable tensors sharing one seeded generator.

    Weight matrices use Glorot-uniform initialisation, biases zeros and
    trainable embeddings N(0, 0.01).  The chosen scheme is kept in ``meta``.
    """

    def __init__(self, seed: int = 0, precision: str = "single"):
        self.seed = seed
        self.precision = precision
        self.dtype = PRECISIONS[precision]
        self.rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        self.meta: dict[str, str] = {}

    def _register(self, name: str, values: np.ndarray, init: str) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.asarray(values, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        self.meta[name] = init
        return t

    def weight(self, name: str, shape: Sequence[int]) -> Tensor:
        fan_in, fan_out = shape[-2] if len(shape) > 1 else shape[0], shape[-1]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return self._register(name, self.rng.uniform(-bound, bound, size=shape), "glorot_uniform")

    def bias(self, name: str, shape: Sequence[int]) -> Tensor:
        return self._register(name, np.zeros(shape), "zeros")

    def ones(self, name: str, shape: Sequence[int]) -> Tensor:
        return self._register(name, np.ones(shape), "ones")

    def embedding(self, name: str, shape: Sequence[int]) -> Tensor:
        return self._register(name, self.rng.normal(0.0, 0.01, size=shape), "normal(0,0.01)")

    def given(self, name: str, values) -> Tensor:
        return self._register(name, values, "given")

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def items(self):
        return self.params.items()

    def num_entries(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def cast(self, precision: str) -> "ParameterStore":
        """Convert every parameter to ``precision`` in place (grads are dropped)."""
        self.precision, self.dtype = precision, PRECISIONS[precision]
        for t in self.params.values():
            t.data = t.data.astype(self.dtype)
            t.grad = None
        return self

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        missing = set(self.params) - set(arrays)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
        for name, t in self.params.items():
            if arrays[name].shape != t.shape:
                raise ValueError(f"{name}: checkpoint shape {arrays[name].shape} != {t.shape}")
            t.data = np.asarray(arrays[name], dtype=self.dtype).copy()


def grad_check(f: Callable[[], Tensor], params: ParameterStore, eps: float = 1e-6,
               names: Iterable[str] | None = None) -> float:
    """Largest relative disagreement between backprop and central differences.

    ``f`` rebuilds the scalar loss from the current parameter values.  The
    error for one entry is ``|a - b| / max(1e-8, |a| + |b|)``.
    """
    if params.precision != "double":
        raise ValueError("grad_check requires double precision parameters")
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError(f"eps {eps} outside [1e-7, 1e-4]")
    params.zero_grad()
    backward(f())
    names = list(names) if names is not None else list(params)
    worst = 0.0
    with no_grad():
        for name in names:
            t = params[name]
            analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = f().item()
                flat[i] = orig - eps
                down = f().item()
                flat[i] = orig
                numeric = (up - down) / (2 * eps)
                a = analytic.reshape(-1)[i]
                worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
    params.zero_grad()
    return worst


# -- checkpoints -------------------------------------------------------------------

CHECKPOINT_MAGIC = b"XLPCKPT\0"
CHECKPOINT_VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def save_checkpoint(params: ParameterStore | dict[str, np.ndarray], path=None) -> bytes:
    """Serialise parameters; returns the bytes and writes them to ``path`` if given.

    Layout (little endian): magic, u32 version, u32 count, then per entry
    u32 name length, UTF-8 name, u32 ndim, u32 dims..., u8 dtype code
    (0 = float32, 1 = float64), raw values in C order.
    """
    arrays = params.snapshot() if isinstance(params, ParameterStore) else params
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(arrays)))
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw_name = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw_name)) + raw_name)
        buf.write(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(struct.pack("<B", _DTYPE_CODES[np.dtype(arr.dtype)]))
        buf.write(np.ascontiguousarray(arr).tobytes())
    data = buf.getvalue()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def load_checkpoint(source) -> dict[str, np.ndarray]:
    data = source if isinstance(source, (bytes, bytearray)) else open(source, "rb").read()
    view = memoryview(data)
    if bytes(view[:8]) != CHECKPOINT_MAGIC:
        raise ValueError("not a parameter checkpoint")
    version, count = struct.unpack_from("<II", view, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 16
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", view, pos)
        pos += 4
        name = bytes(view[pos:pos + nlen]).decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<I", view, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", view, pos)
        pos += 4 * ndim
        dtype = _CODE_DTYPES[view[pos]]
        pos += 1
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        out[name] = np.frombuffer(view[pos:pos + nbytes], dtype=dtype).reshape(shape).copy()
        pos += nbytes
    return out
