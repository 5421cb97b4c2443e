"""Deterministic flow-matching training on synthetic episodes."""

from __future__ import annotations

import os

import numpy as np

from .config import RunConfig
from .data import make_split
from .flow import fm_loss, make_batch
from .model import Mmhnet
from .nn import AdamW
from . import storage


class TrainingDiverged(RuntimeError):
    pass


def train(cfg: RunConfig, out_dir: str, quiet: bool = True) -> Mmhnet:
    """Train per config; writes checkpoint, loss CSV, and the verbatim config."""
    os.makedirs(out_dir, exist_ok=True)
    storage.save_text(os.path.join(out_dir, "config.txt"), cfg.serialize())

    seed = cfg["train.seed"]
    model = Mmhnet(cfg.model_config(), seed=seed)
    opt = AdamW(model, lr=cfg["train.lr"], weight_decay=cfg["train.weight_decay"])
    episodes = make_split(cfg["data.train_seed"], cfg["data.train_size"],
                          cfg["data.train_length"], cfg["data.n_events"],
                          cfg["data.redundancy"])
    rng = np.random.default_rng(seed)
    batch_size = cfg["train.batch"]
    iters = cfg["train.iters"]
    ckpt_every = cfg["train.ckpt_every"]

    rows = ["iter,loss"]
    for it in range(iters):
        idx = rng.integers(0, len(episodes), size=batch_size)
        batch = make_batch([episodes[i] for i in idx], rng,
                           cond_dropout=cfg["train.cond_dropout"])
        loss = fm_loss(model, batch)
        val = loss.item()
        if not np.isfinite(val):
            raise TrainingDiverged(
                f"non-finite loss at iter {it}; batch episode indices {idx.tolist()}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        rows.append(f"{it},{val:.10g}")
        if not quiet and it % 50 == 0:
            print(f"iter {it}: loss {val:.5f}")
        if ckpt_every and (it + 1) % ckpt_every == 0:
            storage.save_arrays(os.path.join(out_dir, f"ckpt-{it + 1:06d}"),
                                model.state_arrays())
    storage.save_text(os.path.join(out_dir, "loss.csv"), "\n".join(rows) + "\n")
    storage.save_arrays(os.path.join(out_dir, "checkpoint"), model.state_arrays())
    return model


def load_checkpoint(cfg: RunConfig, ckpt_dir: str) -> Mmhnet:
    model = Mmhnet(cfg.model_config(), seed=cfg["train.seed"])
    model.load_state(storage.load_arrays(ckpt_dir))
    return model


def validation_loss(model: Mmhnet, episodes, seed: int = 1234) -> float:
    """FM loss with frozen sampling randomness (fixed t and noise per episode)."""
    rng = np.random.default_rng(seed)
    batch = make_batch(list(episodes), rng, cond_dropout=0.0)
    from . import tensor as T
    with T.no_grad():
        return fm_loss(model, batch).item()
