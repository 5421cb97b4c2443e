"""Small parameter-container layer on top of the autodiff tape.

Keeps just what the model needs: a module tree with named parameters,
linear / conv / MLP layers, and a decoupled-weight-decay adaptive-moment
optimizer.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, "Module"] = {}

    def param(self, name: str, array: np.ndarray) -> Tensor:
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for cname, child in self._children.items():
            yield from child.named_parameters(prefix + cname + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def count_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise T.ShapeError(f"{name}: shape {arr.shape} != expected {p.data.shape}")
            p.data = arr.copy()


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int,
                 zero_init: bool = False, bias: bool = True):
        super().__init__()
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            w = rng.normal(size=(d_in, d_out)) / np.sqrt(d_in)
        self.w = self.param("w", w)
        self.b = self.param("b", np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.w)
        return T.add(out, self.b) if self.b is not None else out


class Conv1d(Module):
    """Same-length 1-D convolution over an L x C sequence."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, kernel: int,
                 zero_init: bool = False):
        super().__init__()
        self.kernel = kernel
        self.pad = ((kernel - 1) // 2, kernel // 2)
        if zero_init:
            w = np.zeros((kernel, c_in, c_out))
        else:
            w = rng.normal(size=(kernel, c_in, c_out)) / np.sqrt(kernel * c_in)
        self.w = self.param("w", w)
        self.b = self.param("b", np.zeros(c_out))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.w, self.b, pad=self.pad)


class DepthwiseConv1d(Module):
    """Per-channel short convolution (local order sensitivity for the mixers)."""

    def __init__(self, rng: np.random.Generator, channels: int, kernel: int = 4):
        super().__init__()
        self.kernel = kernel
        self.pad = ((kernel - 1) // 2, kernel // 2)
        self.w = self.param("w", rng.normal(size=(kernel, channels)) / np.sqrt(kernel))
        self.b = self.param("b", np.zeros(channels))

    def __call__(self, x: Tensor) -> Tensor:
        K = self.kernel
        pl, pr = self.pad
        L, C = x.shape
        cols = []
        for k in range(K):
            # window offset k over the padded sequence, realized by slicing
            lo = k - pl
            idx = np.clip(np.arange(L) + lo, -1, L)
            valid = (idx >= 0) & (idx < L)
            gathered = T.take(x, np.clip(idx, 0, L - 1))
            gathered = T.mul(gathered, valid.astype(np.float64)[:, None])
            cols.append(T.mul(gathered, T.reshape(T.take(self.w, k), (1, C))))
        out = cols[0]
        for c in cols[1:]:
            out = T.add(out, c)
        return T.add(out, self.b)


class ConvMlp(Module):
    """conv(k) -> activation -> pointwise conv (the MLP half mixes channels only)."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_hidden: int, c_out: int,
                 kernel: int):
        super().__init__()
        self.c1 = self.child("c1", Conv1d(rng, c_in, c_hidden, kernel))
        self.c2 = self.child("c2", Conv1d(rng, c_hidden, c_out, 1))

    def __call__(self, x: Tensor) -> Tensor:
        return self.c2(T.selu(self.c1(x)))


class Mlp(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int,
                 zero_init_out: bool = False):
        super().__init__()
        self.fc1 = self.child("fc1", Linear(rng, d_in, d_hidden))
        self.fc2 = self.child("fc2", Linear(rng, d_hidden, d_out, zero_init=zero_init_out))

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.silu(self.fc1(x)))


class AdamW:
    """Adaptive moments with decoupled weight decay; deterministic given order."""

    def __init__(self, module: Module, lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.named = list(module.named_parameters())
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named}

    def zero_grad(self):
        for _, p in self.named:
            p.grad = None

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for name, p in self.named:
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = self.b1 * self.m[name] + (1.0 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            mh = self.m[name] / bc1
            vh = self.v[name] / bc2
            if self.wd:
                p.data = p.data * (1.0 - self.lr * self.wd)
            p.data = p.data - self.lr * mh / (np.sqrt(vh) + self.eps)
