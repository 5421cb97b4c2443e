"""Causal and non-causal SSD token-mixing kernels.

Two independent routes are kept on purpose: the left-to-right recurrence
(:func:`scan_causal`) and the structured-mask matrix form
(:func:`ssd_matrix_form`) must agree to 1e-10, which is the main correctness
oracle for this module.  The non-causal mode additionally has an O(L) fast
path through a single shared hidden state.

Plain-numpy functions here are forward-only (used for oracles, diagnostics
and benchmarks); the ``traced_*`` variants build the same math on the
autodiff tape for use inside model blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import tensor as T
from .tensor import Tensor

# Floor on delta*A before exponentiation: bounds alpha in [e^-20, 1) and the
# non-causal mask entries 1/alpha by e^20.
DECAY_CLAMP = 20.0


class MixerMode(Enum):
    CAUSAL = "causal"
    NONCAUSAL = "noncausal"


def discretize(A: np.ndarray, delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization: alpha = exp(delta*A), gamma = delta."""
    A = np.asarray(A, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    bad = np.flatnonzero(A >= 0)
    if bad.size:
        raise ValueError(f"A must be negative; first violation at index {bad[0]}")
    bad = np.flatnonzero(delta <= 0)
    if bad.size:
        raise ValueError(f"delta must be positive; first violation at index {bad[0]}")
    alpha = np.exp(np.maximum(delta * A, -DECAY_CLAMP))
    return alpha, delta.copy()


@dataclass
class SsmParams:
    """Per-position discretized SSM parameters for one head."""

    A: np.ndarray        # (L,) negative
    delta: np.ndarray    # (L,) positive
    B: np.ndarray        # (L, N)
    C: np.ndarray        # (L, N)
    alpha: np.ndarray = field(init=False)
    gamma: np.ndarray = field(init=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.delta = np.asarray(self.delta, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64)
        self.C = np.asarray(self.C, dtype=np.float64)
        L = self.A.shape[0]
        if not (self.delta.shape == (L,) and self.B.shape[0] == L and self.C.shape == self.B.shape):
            raise T.ShapeError(
                f"inconsistent SSM parameter lengths: A {self.A.shape}, delta {self.delta.shape}, "
                f"B {self.B.shape}, C {self.C.shape}")
        self.alpha, self.gamma = discretize(self.A, self.delta)

    @property
    def L(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.B.shape[1]

    @staticmethod
    def random(rng: np.random.Generator, L: int, N: int) -> "SsmParams":
        return SsmParams(
            A=-np.exp(rng.normal(size=L) * 0.3),
            delta=np.exp(rng.normal(size=L) * 0.3),
            B=rng.normal(size=(L, N)),
            C=rng.normal(size=(L, N)),
        )


def scan_causal(params: SsmParams, X: np.ndarray) -> np.ndarray:
    """Recurrence h_l = alpha_l h_{l-1} + gamma_l B_l x_l; y_l = C_l^T h_l."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != params.L:
        raise T.ShapeError(f"X length {X.shape[0]} != parameter length {params.L}")
    N, D = params.N, X.shape[1]
    h = np.zeros((N, D))
    Y = np.empty_like(X)
    for ell in range(params.L):
        h = params.alpha[ell] * h + params.gamma[ell] * np.outer(params.B[ell], X[ell])
        Y[ell] = params.C[ell] @ h
    return Y


def build_mask(alpha: np.ndarray, mode: MixerMode) -> np.ndarray:
    """Structured mask M.

    Causal: lower triangular, M_ii = 1, M_ij = prod_{k=j+1..i} alpha_k.
    Non-causal: dense, M_ij = 1/alpha_j (all rows identical).
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha <= 0.0) or np.any(alpha >= 1.0):
        raise ValueError("alpha must lie strictly in (0, 1)")
    L = alpha.shape[0]
    if mode is MixerMode.NONCAUSAL:
        return np.broadcast_to(1.0 / alpha, (L, L)).copy()
    # cumulative log products keep long sequences from underflowing pairwise
    s = np.cumsum(np.log(alpha))
    E = s[:, None] - s[None, :]
    tril = np.tril(np.ones((L, L)))
    return np.exp(E * tril) * tril


def ssd_matrix_form(params: SsmParams, X: np.ndarray, mode: MixerMode) -> np.ndarray:
    """Y = (M o C B^T) X' with X'_l = gamma_l X_l (gamma folded into the input)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != params.L:
        raise T.ShapeError(f"X length {X.shape[0]} != parameter length {params.L}")
    M = build_mask(params.alpha, mode)
    G = M * (params.C @ params.B.T)
    return G @ (params.gamma[:, None] * X)


def noncausal_fast(params: SsmParams, X: np.ndarray, unit_mask: bool = False) -> np.ndarray:
    """O(L) non-causal path: one shared state H = sum_l (gamma_l/alpha_l) B_l x_l^T."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != params.L:
        raise T.ShapeError(f"X length {X.shape[0]} != parameter length {params.L}")
    w = params.gamma if unit_mask else params.gamma / params.alpha
    H = params.B.T @ (w[:, None] * X)
    return params.C @ H


def contribution_profile(params: SsmParams, mode: MixerMode) -> np.ndarray:
    """How strongly each source position reaches the last output position.

    Row L of (M o C B^T), scaled by gamma per source, absolute value,
    normalized by its max.
    """
    if params.L < 2:
        raise ValueError("need at least two positions")
    if mode is MixerMode.NONCAUSAL:
        row_mask = 1.0 / params.alpha
    else:
        s = np.cumsum(np.log(params.alpha))
        row_mask = np.exp(s[-1] - s)  # prod_{k=j+1..L} alpha_k; j = L gives 1
    row = np.abs(row_mask * (params.C[-1] @ params.B.T) * params.gamma)
    m = row.max()
    return row / m if m > 0 else row


# -- traced variants for model blocks ---------------------------------------

def traced_discretize(A: Tensor, delta: Tensor) -> tuple[Tensor, Tensor]:
    alpha = T.exp(T.maximum_const(T.mul(delta, A), -DECAY_CLAMP))
    return alpha, delta


def traced_causal_mix(alpha: Tensor, gamma: Tensor, B: Tensor, C: Tensor, X: Tensor) -> Tensor:
    """Tape-recorded causal SSD in matrix form (O(L^2), fine at desk scale)."""
    L = alpha.shape[0]
    s = T.cumsum(T.log(alpha))
    E = T.reshape(s, (L, 1)) - T.reshape(s, (1, L))
    tril = np.tril(np.ones((L, L)))
    M = T.mul(T.exp(T.mul(E, tril)), tril)
    G = T.mul(M, T.matmul(C, T.transpose(B)))
    return T.matmul(G, T.mul(X, T.reshape(gamma, (L, 1))))


def traced_noncausal_mix(alpha: Tensor, gamma: Tensor, B: Tensor, C: Tensor, X: Tensor,
                         unit_mask: bool = False) -> Tensor:
    """Tape-recorded non-causal SSD via the shared-state fast path."""
    L = alpha.shape[0]
    w = gamma if unit_mask else T.mul(gamma, T.reciprocal(alpha))
    H = T.matmul(T.transpose(B), T.mul(X, T.reshape(w, (L, 1))))
    return T.matmul(C, H)
