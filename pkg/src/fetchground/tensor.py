"""Dense float64 tensors with reverse-mode automatic differentiation.

Every forward op records a closure that scatters the output gradient
back into its parents; ``backward`` walks the graph in reverse
topological order.  Storage is row-major numpy float64 throughout.
"""

import numpy as np

from .errors import DimensionError, DomainError, UsageError

_grad_enabled = True
_node_counter = 0


class no_grad:
    """Context manager that suspends graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op", "_seq")

    def __init__(self, data, requires_grad=False):
        global _node_counter
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None
        self._op = "leaf"
        _node_counter += 1
        self._seq = _node_counter

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def zero_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, op, backward_fn):
    """Build a graph node; records the closure only while grads are on."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    out._op = op
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient g (broadcast shape) back down to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _accum(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


# -- elementwise arithmetic ---------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out_data = a.data + b.data

    def back():
        _accum(a, _unbroadcast(out.grad, a.shape))
        _accum(b, _unbroadcast(out.grad, b.shape))

    out = _node(out_data, (a, b), "add", back)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    out_data = a.data - b.data

    def back():
        _accum(a, _unbroadcast(out.grad, a.shape))
        _accum(b, _unbroadcast(-out.grad, b.shape))

    out = _node(out_data, (a, b), "sub", back)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    out_data = a.data * b.data

    def back():
        _accum(a, _unbroadcast(out.grad * b.data, a.shape))
        _accum(b, _unbroadcast(out.grad * a.data, b.shape))

    out = _node(out_data, (a, b), "mul", back)
    return out


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "div")
    out_data = a.data / b.data

    def back():
        _accum(a, _unbroadcast(out.grad / b.data, a.shape))
        _accum(b, _unbroadcast(-out.grad * a.data / (b.data * b.data), b.shape))

    out = _node(out_data, (a, b), "div", back)
    return out


# -- activations ---------------------------------------------------------

_SIG_LO = np.finfo(np.float64).tiny          # smallest positive normal
_SIG_HI = 1.0 - 2.0 ** -53                   # largest double below 1


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise logistic; outputs clamped into the open interval (0, 1)."""
    d = x.data
    out_data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                        np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out_data = np.clip(out_data, _SIG_LO, _SIG_HI)

    def back():
        _accum(x, out.grad * out_data * (1.0 - out_data))

    out = _node(out_data, (x,), "sigmoid", back)
    return out


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def back():
        _accum(x, out.grad * (x.data > 0.0))

    out = _node(out_data, (x,), "relu", back)
    return out


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def back():
        _accum(x, out.grad * (1.0 - out_data * out_data))

    out = _node(out_data, (x,), "tanh", back)
    return out


def log(x: Tensor) -> Tensor:
    out_data = np.log(x.data)

    def back():
        _accum(x, out.grad / x.data)

    out = _node(out_data, (x,), "log", back)
    return out


def sqrt(x: Tensor) -> Tensor:
    out_data = np.sqrt(x.data)

    def back():
        _accum(x, out.grad * 0.5 / out_data)

    out = _node(out_data, (x,), "sqrt", back)
    return out


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); gradient passes only where x > floor."""
    out_data = np.maximum(x.data, floor)

    def back():
        _accum(x, out.grad * (x.data > floor))

    out = _node(out_data, (x,), "clamp_min", back)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax along `axis` (max-subtraction before exponentiation)."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def back():
        g = out.grad
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accum(x, out_data * (g - dot))

    out = _node(out_data, (x,), "softmax", back)
    return out


# -- linear algebra -------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dims disagree, left has {a.shape[1]} columns, "
            f"right has {b.shape[0]} rows")
    out_data = a.data @ b.data

    def back():
        _accum(a, out.grad @ b.data.T)
        _accum(b, a.data.T @ out.grad)

    out = _node(out_data, (a, b), "matmul", back)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b for x:[B,I], w:[I,O], b:[O]."""
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1:
        raise DimensionError(
            f"linear expects x:[B,I], w:[I,O], b:[O]; got {x.shape}, {w.shape}, {b.shape}")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(
            f"linear: x feature axis {x.shape[1]} != w input axis {w.shape[0]}")
    if w.shape[1] != b.shape[0]:
        raise DimensionError(
            f"linear: w output axis {w.shape[1]} != b axis {b.shape[0]}")
    out_data = x.data @ w.data + b.data

    def back():
        _accum(x, out.grad @ w.data.T)
        _accum(w, x.data.T @ out.grad)
        _accum(b, out.grad.sum(axis=0))

    out = _node(out_data, (x, w, b), "linear", back)
    return out


# -- shape plumbing -------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def back():
        _accum(x, out.grad.reshape(x.shape))

    out = _node(out_data, (x,), "reshape", back)
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, out.grad[tuple(idx)])

    out = _node(out_data, tuple(tensors), "concat", back)
    return out


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along `axis`."""
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out_data = x.data[idx]

    def back():
        g = np.zeros_like(x.data)
        g[idx] = out.grad
        _accum(x, g)

    out = _node(out_data, (x,), "narrow", back)
    return out


def take_rows(x: Tensor, indices) -> Tensor:
    """Row gather: out[i] = x[indices[i]].  Backward scatter-adds."""
    idx = np.asarray(indices, dtype=np.int64)
    out_data = x.data[idx]

    def back():
        g = np.zeros_like(x.data)
        np.add.at(g, idx, out.grad)
        _accum(x, g)

    out = _node(out_data, (x,), "take_rows", back)
    return out


# -- reductions -----------------------------------------------------------

def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def back():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape).copy())

    out = _node(out_data, (x,), "sum", back)
    return out


def tmean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = x.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([x.shape[a] for a in axis]))
    else:
        count = x.shape[axis]
    out_data = x.data.mean(axis=axis, keepdims=keepdims)

    def back():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape).copy() / count)

    out = _node(out_data, (x,), "mean", back)
    return out


# -- attention masking ----------------------------------------------------

def hadamard(a: Tensor, f: Tensor) -> Tensor:
    """Elementwise mask application, output shaped like f.

    Accepted shapes: identical, or `a` with a single channel broadcast
    across f's channel axis (a:[...,1,H,W] against f:[...,C,H,W]).
    Anything else is rejected so shape bugs stay loud.
    """
    if a.shape == f.shape:
        pass
    elif (a.ndim == f.ndim and a.ndim >= 3
          and a.shape[-2:] == f.shape[-2:]
          and a.shape[-3] == 1
          and a.shape[:-3] == f.shape[:-3]):
        pass  # single-channel spatial mask
    else:
        raise DimensionError(
            f"hadamard: mask shape {a.shape} is neither equal to {f.shape} "
            f"nor a single-channel spatial mask for it")
    out_data = a.data * f.data

    def back():
        _accum(a, _unbroadcast(out.grad * f.data, a.shape))
        _accum(f, out.grad * a.data)

    out = _node(out_data, (a, f), "hadamard", back)
    return out


# -- similarity -----------------------------------------------------------

def cosine_similarity(u: Tensor, v: Tensor) -> Tensor:
    """cos(u, v) for 1-D vectors; zero-norm inputs are a domain error."""
    if u.ndim != 1 or v.ndim != 1 or u.shape != v.shape:
        raise DimensionError(f"cosine_similarity expects equal 1-D shapes, got {u.shape}, {v.shape}")
    return cosine_rows(reshape(u, (1, -1)), reshape(v, (1, -1))).reshape(())


def cosine_rows(u: Tensor, v: Tensor) -> Tensor:
    """Row-wise cosine similarity for u, v of shape [B, D] -> [B]."""
    if u.shape != v.shape or u.ndim != 2:
        raise DimensionError(f"cosine_rows expects matching [B,D] shapes, got {u.shape}, {v.shape}")
    nu = np.sqrt((u.data * u.data).sum(axis=1))
    nv = np.sqrt((v.data * v.data).sum(axis=1))
    if np.any(nu == 0.0):
        raise DomainError("cosine similarity of a zero-norm left vector")
    if np.any(nv == 0.0):
        raise DomainError("cosine similarity of a zero-norm right vector")
    dot = tsum(mul(u, v), axis=1)
    un = sqrt(tsum(mul(u, u), axis=1))
    vn = sqrt(tsum(mul(v, v), axis=1))
    return div(dot, mul(un, vn))


# -- backward engine ------------------------------------------------------

def _topo_order(root: Tensor):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate gradients of everything `loss` depends on.

    Repeated calls accumulate; call zero_grad on parameters between steps.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    loss.ensure_grad()
    loss.grad += np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn()


def find_first_nonfinite(root: Tensor):
    """Earliest-created tensor under `root` holding a non-finite value, or None."""
    bad = None
    for node in _topo_order(root):
        if not np.all(np.isfinite(node.data)):
            if bad is None or node._seq < bad._seq:
                bad = node
    return bad
