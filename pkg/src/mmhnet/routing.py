"""Similarity-based token routing.

Temporal routing marks boundaries where consecutive tokens become
dissimilar; multimodal routing keeps tokens that agree with a reference
modality at the temporally-aligned position.  Both produce a
:class:`RoutingDecision` whose probabilities stay on the autodiff tape
(gradients reach the q/k projections through the dechunk confidence), while
the boundary bits are plain integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import tensor as T
from .tensor import Tensor


class SimilarityMetric(Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"
    DOT_PRODUCT = "dot"


class RoutingKind(Enum):
    TEMPORAL = "temporal"
    MM = "mm"


@dataclass
class RoutingDecision:
    p: Tensor              # (L,) boundary probability, traced
    b: np.ndarray          # (L,) 0/1 ints, b[0] == 1 always
    kind: RoutingKind

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.int64)
        if self.b[0] != 1:
            raise ValueError("first token must be a boundary")
        if self.b.shape != self.p.shape:
            raise T.ShapeError(f"p shape {self.p.shape} != b shape {self.b.shape}")

    @property
    def selected_count(self) -> int:
        return int(self.b.sum())


def similarity(q: np.ndarray, k: np.ndarray, metric: SimilarityMetric = SimilarityMetric.COSINE) -> float:
    """Scalar similarity between two vectors."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape or q.ndim != 1:
        raise T.ShapeError(f"similarity expects equal-dim vectors, got {q.shape} and {k.shape}")
    if metric is SimilarityMetric.COSINE:
        nq, nk = np.linalg.norm(q), np.linalg.norm(k)
        if nq < 1e-12 or nk < 1e-12:
            return 0.0
        return float(q @ k / (nq * nk))
    if metric is SimilarityMetric.EUCLIDEAN:
        return float(1.0 / (1.0 + np.linalg.norm(q - k)))
    return float(q @ k)


def _pairwise_sim(Q: Tensor, K: Tensor, metric: SimilarityMetric) -> Tensor:
    """Row-aligned similarities between two L x D traced tensors -> (L,)."""
    if metric is SimilarityMetric.COSINE:
        return T.tsum(T.mul(T.normalize_rows(Q), T.normalize_rows(K)), axis=1)
    if metric is SimilarityMetric.EUCLIDEAN:
        d = Q - K
        dist = T.sqrt(T.add(T.tsum(T.mul(d, d), axis=1), 1e-24))
        return T.reciprocal(T.add(dist, 1.0))
    return T.tsum(T.mul(Q, K), axis=1)


def _clip01(p: Tensor) -> Tensor:
    return T.minimum_const(T.maximum_const(p, 0.0), 1.0)


def temporal_route(X: Tensor, Wq: Tensor, Wk: Tensor, tau: float,
                   metric: SimilarityMetric = SimilarityMetric.COSINE) -> RoutingDecision:
    """Boundary detection by consecutive dissimilarity: p_l = (1 - sim(q_l, k_{l-1})) / 2."""
    X = T.wrap(X)
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    L = X.shape[0]
    if L == 1:
        p = Tensor(np.ones(1))
        return RoutingDecision(p=p, b=np.ones(1, dtype=np.int64), kind=RoutingKind.TEMPORAL)
    Q = T.matmul(X, Wq)
    K = T.matmul(X, Wk)
    sim = _pairwise_sim(T.take(Q, slice(1, L)), T.take(K, slice(0, L - 1)), metric)
    p_rest = _clip01(T.mul(T.add(T.mul(sim, -1.0), 1.0), 0.5))
    p = T.concat([Tensor(np.ones(1)), p_rest])
    b = (p.data >= tau).astype(np.int64)
    b[0] = 1
    return RoutingDecision(p=p, b=b, kind=RoutingKind.TEMPORAL)


def cross_index(L: int, L2: int) -> np.ndarray:
    """Proportional temporal alignment: index into a length-L2 stream per position of L."""
    ell = np.arange(L, dtype=np.float64)
    idx = np.rint((ell + 0.5) * L2 / L - 0.5).astype(np.int64)
    return np.clip(idx, 0, L2 - 1)


def mm_route(Xm: Tensor, Xm2: Tensor, Wq: Tensor, Wk: Tensor, tau: float,
             metric: SimilarityMetric = SimilarityMetric.COSINE,
             threshold_on: str = "sim") -> RoutingDecision:
    """Cross-modal selection: p_l = (1 + sim(q_l, k_{l'})) / 2 against aligned positions.

    Default selection follows the literal indicator on the similarity
    (``sim >= tau``); ``threshold_on="p"`` switches to thresholding the
    probability instead.
    """
    Xm, Xm2 = T.wrap(Xm), T.wrap(Xm2)
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    L, L2 = Xm.shape[0], Xm2.shape[0]
    Q = T.matmul(Xm, Wq)
    K = T.matmul(T.take(Xm2, cross_index(L, L2)), Wk)
    sim = _pairwise_sim(Q, K, metric)
    p = _clip01(T.mul(T.add(sim, 1.0), 0.5))
    if threshold_on == "sim":
        b = (sim.data >= tau).astype(np.int64)
    elif threshold_on == "p":
        b = (p.data >= tau).astype(np.int64)
    else:
        raise ValueError(f"unknown threshold_on {threshold_on!r}")
    b[0] = 1
    return RoutingDecision(p=p, b=b, kind=RoutingKind.MM)


def selection_ratio(decision: RoutingDecision) -> float:
    return decision.selected_count / decision.b.shape[0]


def orthogonal_init(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    """Orthogonal columns scaled by 1/sqrt(d_in) so initial similarities stay small."""
    m = rng.normal(size=(d_in, max(d_in, d_out)))
    q, _ = np.linalg.qr(m)
    return q[:, :d_out] / np.sqrt(d_in)


def fit_routing_projection(X: np.ndarray, target_b: np.ndarray, tau: float = 0.5,
                           iters: int = 200, lr: float = 0.2,
                           seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Fit Wq, Wk so temporal-routing probabilities track target boundary bits.

    Minimizes a squared error between p and the 0/1 targets with plain
    gradient descent; small and deterministic, meant for calibrating the
    routing projections on synthetic streams.
    """
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    D = X.shape[1]
    Wq = np.eye(D) + 0.01 * rng.normal(size=(D, D))
    Wk = np.eye(D) + 0.01 * rng.normal(size=(D, D))
    target = np.asarray(target_b, dtype=np.float64)
    for _ in range(iters):
        wq = Tensor(Wq, requires_grad=True)
        wk = Tensor(Wk, requires_grad=True)
        dec = temporal_route(Tensor(X), wq, wk, tau)
        err = dec.p - Tensor(target)
        loss = T.tmean(T.mul(err, err))
        loss.backward()
        Wq -= lr * wq.grad
        Wk -= lr * wk.grad
    return Wq, Wk
