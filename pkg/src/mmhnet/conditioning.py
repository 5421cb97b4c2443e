"""Condition-stream projections and global adaLN conditioning.

Each projector preserves sequence length exactly (same-padding contract).
The global conditioning vector is built from mean-pooled semantic and text
streams plus a sinusoidal embedding of the flow time, and is injected into
blocks through learned scale/shift that start at zero (so every modulated
layer begins life as a plain layernorm).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .nn import Module, Linear, Conv1d, ConvMlp, Mlp


@dataclass
class ConditionSet:
    semantic: Tensor   # T_v x D_model
    sync: Tensor       # T_s x D_model
    text: Tensor       # T_t x D_model
    c_g: Tensor        # 1 x D_model


def sinusoidal_embed(t: float, dim: int) -> np.ndarray:
    """Length-independent sinusoidal embedding of a scalar in [0, 1]."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t * 1000.0 * freqs
    emb = np.concatenate([np.sin(ang), np.cos(ang)])
    if emb.size < dim:
        emb = np.concatenate([emb, np.zeros(dim - emb.size)])
    return emb[None, :]


def positional_embed(length: int, dim: int) -> np.ndarray:
    """Classic fixed sin/cos positional table (only used behind a flag)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))[None, :]
    table = np.zeros((length, dim))
    table[:, :half] = np.sin(pos * freqs)
    table[:, half:2 * half] = np.cos(pos * freqs)
    return table


class SyncProjector(Module):
    """conv1d(k=7) -> SELU -> ConvMLP(k=3), length preserved."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_model: int):
        super().__init__()
        self.conv = self.child("conv", Conv1d(rng, d_in, d_model, 7))
        self.mlp = self.child("mlp", ConvMlp(rng, d_model, d_model, d_model, 3))

    def __call__(self, raw: Tensor) -> Tensor:
        return self.mlp(T.selu(self.conv(raw)))


class SemanticTextProjector(Module):
    """ConvMLP(k=3) only."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_model: int):
        super().__init__()
        self.mlp = self.child("mlp", ConvMlp(rng, d_in, d_model, d_model, 3))

    def __call__(self, raw: Tensor) -> Tensor:
        return self.mlp(raw)


class AudioLatentProjector(Module):
    """conv1d(k=7) -> SELU -> ConvMLP(k=7)."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_model: int):
        super().__init__()
        self.conv = self.child("conv", Conv1d(rng, d_in, d_model, 7))
        self.mlp = self.child("mlp", ConvMlp(rng, d_model, d_model, d_model, 7))

    def __call__(self, raw: Tensor) -> Tensor:
        return self.mlp(T.selu(self.conv(raw)))


class GlobalConditioner(Module):
    """c_g = MLP(pool(semantic) W_v + pool(text) W_t + time-embed)."""

    def __init__(self, rng: np.random.Generator, d_model: int):
        super().__init__()
        self.d_model = d_model
        self.vis = self.child("vis", Linear(rng, d_model, d_model))
        self.txt = self.child("txt", Linear(rng, d_model, d_model))
        self.time = self.child("time", Linear(rng, d_model, d_model))
        self.mlp = self.child("mlp", Mlp(rng, d_model, d_model, d_model))

    def __call__(self, semantic: Tensor, text: Tensor, t: float) -> Tensor:
        if semantic.shape[0] < 1 or text.shape[0] < 1:
            raise T.ShapeError("global conditioning requires non-empty streams")
        pooled = T.add(self.vis(T.mean_pool(semantic)), self.txt(T.mean_pool(text)))
        temb = self.time(Tensor(sinusoidal_embed(t, self.d_model)))
        return self.mlp(T.add(pooled, temb))


class AdaLN(Module):
    """(1 + scale(c_g)) * layernorm(h) + shift(c_g); zero-init => plain layernorm."""

    def __init__(self, d_model: int):
        super().__init__()
        self.w = self.param("w", np.zeros((d_model, 2 * d_model)))
        self.b = self.param("b", np.zeros(2 * d_model))
        self.d_model = d_model

    def __call__(self, h: Tensor, c_g: Tensor) -> Tensor:
        sb = T.add(T.matmul(c_g, self.w), self.b)
        scale = T.take(sb, (slice(None), slice(0, self.d_model)))
        shift = T.take(sb, (slice(None), slice(self.d_model, 2 * self.d_model)))
        return T.add(T.mul(T.layernorm(h), T.add(scale, 1.0)), shift)
