"""Conditional flow matching: loss, Euler sampling, classifier-free guidance.

Training regresses the network velocity toward x1 - x0 along linear
interpolants; sampling integrates the learned field from t = 0 to 1 with a
plain Euler scheme.  Guidance blends conditional and null-conditioned
velocities as v_u + s * (v_c - v_u); s = 1 takes the conditional-only code
path so the identity holds bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .data import Episode
from .model import Mmhnet, RawConditions


@dataclass
class FlowBatch:
    x0: list[np.ndarray]
    x1: list[np.ndarray]
    t: np.ndarray                  # per-sample time in [0, 1]
    conds: list[RawConditions]
    drop: np.ndarray               # per-sample condition-dropout bits


def interpolate(x0: np.ndarray, x1: np.ndarray, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise T.ShapeError(f"interpolate: shapes {x0.shape} and {x1.shape} differ")
    return t * x1 + (1.0 - t) * x0


def conditions_of(ep: Episode) -> RawConditions:
    return RawConditions(semantic=ep.semantic, sync=ep.sync, text=ep.text)


def make_batch(episodes: list[Episode], rng: np.random.Generator,
               cond_dropout: float = 0.0) -> FlowBatch:
    x1 = [ep.audio_latent for ep in episodes]
    x0 = [rng.standard_normal(x.shape) for x in x1]
    t = rng.uniform(0.0, 1.0, size=len(episodes))
    drop = (rng.uniform(size=len(episodes)) < cond_dropout).astype(np.int64)
    return FlowBatch(x0=x0, x1=x1, t=t, conds=[conditions_of(ep) for ep in episodes],
                     drop=drop)


def condition_dropout(conds: RawConditions, rate: float, rng: np.random.Generator) -> tuple[RawConditions, bool]:
    """Decide per sample whether conditions are replaced by null embeddings."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    return conds, bool(rng.uniform() < rate)


def fm_loss(model: Mmhnet, batch: FlowBatch) -> Tensor:
    """Mean squared velocity error over the batch (one trace, deterministic order)."""
    total = None
    count = 0
    for x0, x1, t, conds, drop in zip(batch.x0, batch.x1, batch.t, batch.conds, batch.drop):
        xt = interpolate(x0, x1, float(t))
        u = x1 - x0
        v = model(xt, float(t), conds, drop_cond=bool(drop))
        d = v - Tensor(u)
        total = T.tsum(T.mul(d, d)) if total is None else T.add(total, T.tsum(T.mul(d, d)))
        count += u.size
    return T.mul(total, 1.0 / count)


def sample_euler(model: Mmhnet, conds: RawConditions, length: int, steps: int,
                 cfg_scale: float, seed: int) -> np.ndarray:
    """Integrate dx/dt = v(t, c, x) from noise with uniform Euler steps."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if cfg_scale < 0:
        raise ValueError("cfg_scale must be >= 0")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((length, model.cfg.d_latent))
    dt = 1.0 / steps
    with T.no_grad():
        for k in range(steps):
            t = k / steps
            v_c = model(x, t, conds).data
            if cfg_scale == 1.0:
                v = v_c
            else:
                v_u = model(x, t, conds, drop_cond=True).data
                v = v_u + cfg_scale * (v_c - v_u)
            x = x + dt * v
    return x
