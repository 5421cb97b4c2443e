"""Dense float64 tensors with tape-based reverse-mode autodiff.

Every operation builds the graph dynamically; calling :func:`backward` on a
scalar-shaped node accumulates gradients into the leaves that were created
with ``requires_grad=True``.  Values are plain numpy arrays, so forward math
is vectorized while the tape stays small (one node per array op, not per
scalar).
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class DomainError(ValueError):
    """Input outside the mathematical domain of the operation (log/1/x at 0)."""


def _asarray(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    # sum away prepended axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


_GRAD_ENABLED = True


class no_grad:
    """Context manager that suppresses tape recording (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """Array value plus optional tape node.

    ``parents`` holds ``(tensor, vjp)`` pairs where ``vjp`` maps the output
    gradient to this parent's gradient contribution.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad: bool = False, parents=()):
        self.data = _asarray(data)
        self.grad = None
        if _GRAD_ENABLED:
            self.requires_grad = bool(requires_grad) or any(p.requires_grad for p, _ in parents)
        else:
            self.requires_grad = False
        self._parents = tuple(parents) if self.requires_grad else ()

    # -- basic introspection ------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def audit_finite(self):
        if not np.all(np.isfinite(self.data)):
            raise DomainError("tensor contains NaN or Inf")
        return self

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- graph traversal ----------------------------------------------------
    def backward(self):
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                stack.append((parent, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                # leaf: accumulate across repeated backward calls
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in node._parents:
                if not parent.requires_grad:
                    continue
                contrib = vjp(g)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib

    # -- operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(wrap(other), -1.0))

    def __rsub__(self, other):
        return add(wrap(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, reciprocal(wrap(other)))

    def __rtruediv__(self, other):
        return mul(wrap(other), reciprocal(self))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    @property
    def T(self):
        return transpose(self)


def wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- primitive ops ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = a.data + b.data
    return Tensor(out, parents=(
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ))


def mul(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = a.data * b.data
    return Tensor(out, parents=(
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ))


def matmul(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    if a.data.ndim < 1 or b.data.ndim < 1 or a.data.shape[-1] != b.data.shape[0 if b.data.ndim == 1 else -2]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} do not conform")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def grad_a(g):
        if bd.ndim == 1:
            return np.outer(g, bd) if ad.ndim == 2 else g * bd
        return _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)

    def grad_b(g):
        if ad.ndim == 1:
            return np.outer(ad, g) if bd.ndim == 2 else g * ad
        return _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)

    return Tensor(out, parents=((a, grad_a), (b, grad_b)))


def transpose(a) -> Tensor:
    a = wrap(a)
    return Tensor(a.data.T, parents=((a, lambda g: g.T),))


def reshape(a, shape) -> Tensor:
    a = wrap(a)
    old = a.data.shape
    return Tensor(a.data.reshape(shape), parents=((a, lambda g: g.reshape(old)),))


def exp(a) -> Tensor:
    a = wrap(a)
    out = np.exp(a.data)
    return Tensor(out, parents=((a, lambda g: g * out),))


def log(a) -> Tensor:
    a = wrap(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log of non-positive value")
    return Tensor(np.log(a.data), parents=((a, lambda g: g / a.data),))


def reciprocal(a) -> Tensor:
    a = wrap(a)
    if np.any(a.data == 0.0):
        raise DomainError("reciprocal of zero")
    out = 1.0 / a.data
    return Tensor(out, parents=((a, lambda g: -g * out * out),))


def sqrt(a) -> Tensor:
    a = wrap(a)
    out = np.sqrt(a.data)
    return Tensor(out, parents=((a, lambda g: g * 0.5 / out),))


def power(a, p: float) -> Tensor:
    a = wrap(a)
    out = a.data ** p
    return Tensor(out, parents=((a, lambda g: g * p * a.data ** (p - 1.0)),))


def tanh(a) -> Tensor:
    a = wrap(a)
    out = np.tanh(a.data)
    return Tensor(out, parents=((a, lambda g: g * (1.0 - out * out)),))


def sigmoid(a) -> Tensor:
    a = wrap(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, parents=((a, lambda g: g * out * (1.0 - out)),))


def silu(a) -> Tensor:
    return mul(a, sigmoid(a))


def softplus(a) -> Tensor:
    a = wrap(a)
    out = np.logaddexp(0.0, a.data)
    s = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, parents=((a, lambda g: g * s),))


_SELU_LAMBDA = 1.0507009873554805
_SELU_ALPHA = 1.6732632423543772


def selu(a) -> Tensor:
    a = wrap(a)
    pos = a.data > 0
    out = np.where(pos, _SELU_LAMBDA * a.data, _SELU_LAMBDA * _SELU_ALPHA * (np.exp(a.data) - 1.0))
    local = np.where(pos, _SELU_LAMBDA, _SELU_LAMBDA * _SELU_ALPHA * np.exp(a.data))
    return Tensor(out, parents=((a, lambda g: g * local),))


def maximum_const(a, c: float) -> Tensor:
    """Elementwise max(a, c); gradient passes only where a > c."""
    a = wrap(a)
    mask = (a.data > c).astype(np.float64)
    return Tensor(np.maximum(a.data, c), parents=((a, lambda g: g * mask),))


def minimum_const(a, c: float) -> Tensor:
    a = wrap(a)
    mask = (a.data < c).astype(np.float64)
    return Tensor(np.minimum(a.data, c), parents=((a, lambda g: g * mask),))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = wrap(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        g2 = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(g2, shape).copy()

    return Tensor(out, parents=((a, vjp),))


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = wrap(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def cumsum(a, axis: int = 0) -> Tensor:
    a = wrap(a)
    out = np.cumsum(a.data, axis=axis)

    def vjp(g):
        return np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)

    return Tensor(out, parents=((a, vjp),))


def take(a, idx) -> Tensor:
    """Numpy-style indexing with scatter-add gradient."""
    a = wrap(a)
    out = a.data[idx]
    shape = a.data.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return full

    return Tensor(out, parents=((a, vjp),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [wrap(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    parents = []
    for i, t in enumerate(tensors):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g, lo=lo, hi=hi):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        parents.append((t, vjp))
    return Tensor(out, parents=tuple(parents))


def stopgrad(a) -> Tensor:
    """Forward identity, no gradient flow (detach into the live graph)."""
    return Tensor(wrap(a).data)


def softmax_rows(a) -> Tensor:
    """Row-wise softmax of a 2-D tensor, shift-stabilized."""
    a = wrap(a)
    if a.ndim != 2:
        raise ShapeError(f"softmax-row expects 2-D input, got shape {a.shape}")
    shifted = a - Tensor(a.data.max(axis=1, keepdims=True))
    e = exp(shifted)
    return mul(e, reciprocal(tsum(e, axis=1, keepdims=True)))


def normalize_rows(a, eps: float = 1e-12) -> Tensor:
    """Scale each row of a 2-D tensor to unit L2 norm (eps-guarded)."""
    a = wrap(a)
    if a.ndim != 2:
        raise ShapeError(f"normalize-rows expects 2-D input, got shape {a.shape}")
    sq = tsum(mul(a, a), axis=1, keepdims=True)
    return mul(a, reciprocal(sqrt(add(sq, eps * eps))))


def mean_pool(a) -> Tensor:
    """Mean over the sequence axis of an L x D tensor -> 1 x D."""
    a = wrap(a)
    if a.ndim != 2:
        raise ShapeError(f"mean-pool expects 2-D input, got shape {a.shape}")
    return tmean(a, axis=0, keepdims=True)


def conv1d(x, w, b=None, pad: tuple[int, int] = (0, 0)) -> Tensor:
    """1-D convolution over an L x C_in sequence.

    ``w`` has shape (K, C_in, C_out); output is (L + pl + pr - K + 1) x C_out.
    Implemented as correlation (no kernel flip), matching common DL usage.
    """
    x, w = wrap(x), wrap(w)
    if x.ndim != 2 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: shapes {x.shape} and {w.shape} do not conform")
    K, Cin, Cout = w.shape
    pl, pr = pad
    xp = np.pad(x.data, ((pl, pr), (0, 0)))
    Lout = xp.shape[0] - K + 1
    if Lout < 1:
        raise ShapeError(f"conv1d: padded length {xp.shape[0]} shorter than kernel {K}")
    windows = np.lib.stride_tricks.sliding_window_view(xp, K, axis=0)  # Lout x Cin x K
    out = np.einsum("lck,kco->lo", windows, w.data)

    def grad_x(g):
        # full correlation of g with flipped kernel
        gp = np.pad(g, ((K - 1, K - 1), (0, 0)))
        gwin = np.lib.stride_tricks.sliding_window_view(gp, K, axis=0)  # (Lout+K-1) x Cout x K
        gx_full = np.einsum("lok,kco->lc", gwin[:, :, ::-1], w.data)
        return gx_full[pl:pl + x.data.shape[0]]

    def grad_w(g):
        return np.einsum("lck,lo->kco", windows, g)

    parents = [(x, grad_x), (w, grad_w)]
    out_t = Tensor(out, parents=tuple(parents))
    if b is not None:
        out_t = add(out_t, wrap(b))
    return out_t


def layernorm(x, eps: float = 1e-6) -> Tensor:
    """Per-row mean-0 / var-1 normalization of an L x D tensor."""
    x = wrap(x)
    mu = tmean(x, axis=1, keepdims=True)
    cen = x - mu
    var = tmean(mul(cen, cen), axis=1, keepdims=True)
    return mul(cen, reciprocal(sqrt(add(var, eps))))
