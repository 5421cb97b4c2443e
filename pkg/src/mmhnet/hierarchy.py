"""Chunking and dechunking between full-resolution and compressed token spaces.

Chunking keeps exactly the boundary-marked rows.  Dechunking copies each
compressed row back across its span and multiplies by a straight-through
factor whose forward value is 1, so the forward pass is an exact
piecewise-constant extension while gradients still reach the routing
probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .routing import RoutingDecision


@dataclass
class ChunkState:
    original_len: int
    boundaries: np.ndarray     # (L,) 0/1
    probs: Tensor              # (L,) traced
    index_map: np.ndarray      # (L,) 0-based compressed index per position
    compressed_len: int


def chunk(X: Tensor, decision: RoutingDecision) -> tuple[Tensor, ChunkState]:
    """Select boundary-marked rows of X, preserving order."""
    X = T.wrap(X)
    L = X.shape[0]
    b = decision.b
    if b.shape[0] != L:
        raise T.ShapeError(f"decision length {b.shape[0]} != sequence length {L}")
    if b[0] != 1:
        raise ValueError("first token must be a boundary")
    idx = np.flatnonzero(b)
    state = ChunkState(
        original_len=L,
        boundaries=b.copy(),
        probs=decision.p,
        index_map=np.cumsum(b) - 1,
        compressed_len=idx.size,
    )
    return T.take(X, idx), state


def confidence(p: Tensor, b: np.ndarray) -> Tensor:
    """a_l = p_l if b_l = 1 else 1 - p_l."""
    p = T.wrap(p)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != p.shape:
        raise T.ShapeError(f"p shape {p.shape} != b shape {b.shape}")
    return T.add(T.mul(p, 2.0 * b - 1.0), 1.0 - b)


def ste(a: Tensor) -> Tensor:
    """Straight-through factor: forward value 1, gradient d/da = 1."""
    a = T.wrap(a)
    return T.add(a, T.stopgrad(T.add(T.mul(a, -1.0), 1.0)))


def dechunk(X_compressed: Tensor, state: ChunkState) -> Tensor:
    """Copy each compressed row back across its span, STE-weighted."""
    X_compressed = T.wrap(X_compressed)
    if X_compressed.shape[0] != state.compressed_len:
        raise T.ShapeError(
            f"compressed length {X_compressed.shape[0]} != expected {state.compressed_len}")
    expanded = T.take(X_compressed, state.index_map)
    a = confidence(state.probs, state.boundaries)
    w = ste(a)
    return T.mul(expanded, T.reshape(w, (state.original_len, 1)))
