"""Model assembly: condition projection, routing compression, non-causal SSD
blocks in compressed space, dechunking, full-resolution refinement, and the
velocity head.

The whole network is length-agnostic by construction: no parameter shape
depends on the sequence length, so a checkpoint trained at one length runs
unchanged at any other.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import tensor as T
from .tensor import Tensor
from . import kernels as K
from . import routing as R
from . import hierarchy as H
from .nn import Module, Linear, Mlp, DepthwiseConv1d
from .conditioning import (AdaLN, AudioLatentProjector, ConditionSet, GlobalConditioner,
                           SemanticTextProjector, SyncProjector, positional_embed)
from .routing import SimilarityMetric


class MixerKind(Enum):
    NONCAUSAL_MAMBA = "noncausal"
    CAUSAL_MAMBA = "causal"
    ATTENTION_NO_POSEMB = "attention"


@dataclass
class MmhnetConfig:
    n_mm: int = 2
    n_single: int = 2
    d_model: int = 64
    n_heads: int = 2
    d_state: int = 8
    d_latent: int = 8
    d_semantic: int = 16
    d_sync: int = 16
    d_text: int = 16
    mlp_ratio: int = 2
    tau_temporal: float = 0.5
    tau_mm: float = 0.5
    metric: SimilarityMetric = SimilarityMetric.COSINE
    mixer: MixerKind = MixerKind.NONCAUSAL_MAMBA
    hierarchical: bool = True
    mm_routing: bool = True
    local_conv: bool = True
    nc_unit_mask: bool = False
    sync_pos_emb: bool = False
    flow_steps: int = 25
    cfg_scale: float = 4.0

    def __post_init__(self):
        if self.n_mm < 1 or self.n_single < 1:
            raise ValueError("block counts must be >= 1")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")

    @staticmethod
    def tiny(**over) -> "MmhnetConfig":
        return replace(MmhnetConfig(n_mm=2, n_single=2, d_model=64), **over)

    @staticmethod
    def small(**over) -> "MmhnetConfig":
        return replace(MmhnetConfig(n_mm=5, n_single=4, d_model=128, n_heads=4, d_state=16), **over)

    @staticmethod
    def large(**over) -> "MmhnetConfig":
        return replace(MmhnetConfig(n_mm=10, n_single=7, d_model=256, n_heads=4, d_state=16), **over)


@dataclass
class RawConditions:
    """Unprojected condition streams (stand-ins for upstream encoders)."""
    semantic: np.ndarray   # T_v x d_semantic
    sync: np.ndarray       # T_s x d_sync
    text: np.ndarray       # T_t x d_text


def attention_no_posemb(X: Tensor, heads: int) -> Tensor:
    """Scaled-dot softmax attention over X (Q = K = V = X), no positional signal."""
    X = T.wrap(X)
    L, D = X.shape
    if D % heads:
        raise T.ShapeError(f"dim {D} not divisible by {heads} heads")
    dh = D // heads
    outs = []
    for h in range(heads):
        sl = (slice(None), slice(h * dh, (h + 1) * dh))
        Xh = T.take(X, sl)
        scores = T.mul(T.matmul(Xh, T.transpose(Xh)), 1.0 / np.sqrt(dh))
        outs.append(T.matmul(T.softmax_rows(scores), Xh))
    return T.concat(outs, axis=1)


class SsdMixer(Module):
    """Multi-head causal or non-causal SSD token mixing."""

    def __init__(self, rng: np.random.Generator, cfg: MmhnetConfig, causal: bool):
        super().__init__()
        self.cfg = cfg
        self.causal = causal
        d, h, n = cfg.d_model, cfg.n_heads, cfg.d_state
        self.a_log = self.param("a_log", np.log(np.linspace(0.5, 1.5, h)))
        self.w_dt = self.param("w_dt", rng.normal(size=(d, h)) * 0.01)
        # softplus(-0.43) ~ 0.5: moderate per-step decay at init
        self.b_dt = self.param("b_dt", np.full(h, -0.43))
        self.w_b = self.param("w_b", rng.normal(size=(d, h * n)) / np.sqrt(d))
        self.w_c = self.param("w_c", rng.normal(size=(d, h * n)) / np.sqrt(d))

    def __call__(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        d, heads, n = cfg.d_model, cfg.n_heads, cfg.d_state
        dh = x.shape[1] // heads
        delta = T.softplus(T.add(T.matmul(x, self.w_dt), self.b_dt))  # L x H
        Ball = T.matmul(x, self.w_b)
        Call = T.matmul(x, self.w_c)
        outs = []
        for h in range(heads):
            A = T.mul(T.exp(T.take(self.a_log, h)), -1.0)
            dlt = T.take(delta, (slice(None), h))
            alpha, gamma = K.traced_discretize(A, dlt)
            Bh = T.take(Ball, (slice(None), slice(h * n, (h + 1) * n)))
            Ch = T.take(Call, (slice(None), slice(h * n, (h + 1) * n)))
            Xh = T.take(x, (slice(None), slice(h * dh, (h + 1) * dh)))
            if self.causal:
                outs.append(K.traced_causal_mix(alpha, gamma, Bh, Ch, Xh))
            else:
                outs.append(K.traced_noncausal_mix(alpha, gamma, Bh, Ch, Xh,
                                                   unit_mask=cfg.nc_unit_mask))
        return T.concat(outs, axis=1)


class AttentionMixer(Module):
    """QKV-projected multi-head attention without any positional signal."""

    def __init__(self, rng: np.random.Generator, cfg: MmhnetConfig):
        super().__init__()
        self.heads = cfg.n_heads
        d = cfg.d_model
        self.qkv = self.child("qkv", Linear(rng, d, 3 * d))
        self.d = d

    def __call__(self, x: Tensor) -> Tensor:
        d, heads = self.d, self.heads
        dh = d // heads
        qkv = self.qkv(x)
        q = T.take(qkv, (slice(None), slice(0, d)))
        k = T.take(qkv, (slice(None), slice(d, 2 * d)))
        v = T.take(qkv, (slice(None), slice(2 * d, 3 * d)))
        outs = []
        for h in range(heads):
            sl = (slice(None), slice(h * dh, (h + 1) * dh))
            qh, kh, vh = T.take(q, sl), T.take(k, sl), T.take(v, sl)
            scores = T.mul(T.matmul(qh, T.transpose(kh)), 1.0 / np.sqrt(dh))
            outs.append(T.matmul(T.softmax_rows(scores), vh))
        return T.concat(outs, axis=1)


def _make_mixer(rng: np.random.Generator, cfg: MmhnetConfig) -> Module:
    if cfg.mixer is MixerKind.ATTENTION_NO_POSEMB:
        return AttentionMixer(rng, cfg)
    return SsdMixer(rng, cfg, causal=cfg.mixer is MixerKind.CAUSAL_MAMBA)


class StreamOps(Module):
    """Per-stream half of a block: adaLN, local conv, zero-init out proj, MLP."""

    def __init__(self, rng: np.random.Generator, cfg: MmhnetConfig):
        super().__init__()
        d = cfg.d_model
        self.cfg = cfg
        self.norm1 = self.child("norm1", AdaLN(d))
        if cfg.local_conv:
            self.conv = self.child("conv", DepthwiseConv1d(rng, d, 4))
        self.out = self.child("out", Linear(rng, d, d, zero_init=True))
        self.norm2 = self.child("norm2", AdaLN(d))
        self.mlp = self.child("mlp", Mlp(rng, d, cfg.mlp_ratio * d, d, zero_init_out=True))

    def pre(self, x: Tensor, c_g: Tensor) -> Tensor:
        h = self.norm1(x, c_g)
        if self.cfg.local_conv:
            h = self.conv(h)
        return h

    def post(self, x: Tensor, mixed: Tensor, c_g: Tensor) -> Tensor:
        # normalizing the mixer output keeps its per-token scale independent of
        # sequence length (the non-causal global sum grows with L otherwise)
        x = T.add(x, self.out(T.layernorm(mixed)))
        return T.add(x, self.mlp(self.norm2(x, c_g)))


class MmBlock(Module):
    """Multimodal block: three streams share one mixer over the concatenated sequence."""

    def __init__(self, rng: np.random.Generator, cfg: MmhnetConfig):
        super().__init__()
        self.mixer = self.child("mixer", _make_mixer(rng, cfg))
        self.audio = self.child("audio", StreamOps(rng, cfg))
        self.vis = self.child("vis", StreamOps(rng, cfg))
        self.txt = self.child("txt", StreamOps(rng, cfg))

    def __call__(self, a: Tensor, v: Tensor, x: Tensor, c_g: Tensor):
        ha, hv, hx = self.audio.pre(a, c_g), self.vis.pre(v, c_g), self.txt.pre(x, c_g)
        mixed = self.mixer(T.concat([ha, hv, hx], axis=0))
        la, lv = a.shape[0], v.shape[0]
        ma = T.take(mixed, slice(0, la))
        mv = T.take(mixed, slice(la, la + lv))
        mx = T.take(mixed, slice(la + lv, mixed.shape[0]))
        return (self.audio.post(a, ma, c_g), self.vis.post(v, mv, c_g),
                self.txt.post(x, mx, c_g))


class SingleBlock(Module):
    def __init__(self, rng: np.random.Generator, cfg: MmhnetConfig):
        super().__init__()
        self.mixer = self.child("mixer", _make_mixer(rng, cfg))
        self.ops = self.child("ops", StreamOps(rng, cfg))

    def __call__(self, x: Tensor, c_g: Tensor) -> Tensor:
        return self.ops.post(x, self.mixer(self.ops.pre(x, c_g)), c_g)


class Mmhnet(Module):
    def __init__(self, cfg: MmhnetConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d = cfg.d_model
        self.audio_proj = self.child("audio_proj", AudioLatentProjector(rng, cfg.d_latent, d))
        self.sync_proj = self.child("sync_proj", SyncProjector(rng, cfg.d_sync, d))
        self.sem_proj = self.child("sem_proj", SemanticTextProjector(rng, cfg.d_semantic, d))
        self.text_proj = self.child("text_proj", SemanticTextProjector(rng, cfg.d_text, d))
        self.conditioner = self.child("conditioner", GlobalConditioner(rng, d))
        self.null_semantic = self.param("null_semantic", rng.normal(size=(1, cfg.d_semantic)) * 0.02)
        self.null_sync = self.param("null_sync", rng.normal(size=(1, cfg.d_sync)) * 0.02)
        self.null_text = self.param("null_text", rng.normal(size=(1, cfg.d_text)) * 0.02)
        self.wq_t = self.param("wq_t", R.orthogonal_init(rng, d, d))
        self.wk_t = self.param("wk_t", R.orthogonal_init(rng, d, d))
        self.wq_mm = self.param("wq_mm", R.orthogonal_init(rng, d, d))
        self.wk_mm = self.param("wk_mm", R.orthogonal_init(rng, d, d))
        self.mm_blocks = [self.child(f"mm{i}", MmBlock(rng, cfg)) for i in range(cfg.n_mm)]
        self.single_blocks = [self.child(f"single{i}", SingleBlock(rng, cfg))
                              for i in range(cfg.n_single)]
        self.final_norm = self.child("final_norm", AdaLN(d))
        self.head = self.child("head", Linear(rng, d, cfg.d_latent, zero_init=True))

    # -- condition handling -------------------------------------------------
    def project_conditions(self, conds: RawConditions, t: float,
                           drop_cond: bool = False) -> ConditionSet:
        cfg = self.cfg
        if drop_cond:
            sem_raw: Tensor = self.null_semantic
            sync_raw: Tensor = self.null_sync
            text_raw: Tensor = self.null_text
        else:
            sem_raw = Tensor(conds.semantic)
            sync_raw = Tensor(conds.sync)
            text_raw = Tensor(conds.text)
        sync = self.sync_proj(sync_raw)
        if cfg.sync_pos_emb:
            sync = T.add(sync, positional_embed(sync.shape[0], cfg.d_model))
        semantic = self.sem_proj(sem_raw)
        text = self.text_proj(text_raw)
        c_g = self.conditioner(semantic, text, t)
        return ConditionSet(semantic=semantic, sync=sync, text=text, c_g=c_g)

    # -- main pipeline ------------------------------------------------------
    def __call__(self, latent_noisy, t: float, conds: RawConditions,
                 drop_cond: bool = False) -> Tensor:
        cfg = self.cfg
        latent = T.wrap(latent_noisy)
        if latent.ndim != 2 or latent.shape[0] < 1:
            raise T.ShapeError(f"latent must be L x {cfg.d_latent} with L >= 1, got {latent.shape}")
        La = latent.shape[0]
        cs = self.project_conditions(conds, t, drop_cond=drop_cond)

        audio = self.audio_proj(latent)
        # token-level sync conditioning, proportionally aligned to the audio length
        sync_aligned = T.take(cs.sync, R.cross_index(La, cs.sync.shape[0]))
        audio = T.add(audio, sync_aligned)

        vis, txt = cs.semantic, cs.text
        if cfg.hierarchical:
            if cfg.mm_routing:
                dec_v = R.mm_route(vis, cs.sync, self.wq_mm, self.wk_mm, cfg.tau_mm,
                                   metric=cfg.metric)
                vis, state_v = H.chunk(vis, dec_v)
                dec_x = R.mm_route(txt, cs.sync, self.wq_mm, self.wk_mm, cfg.tau_mm,
                                   metric=cfg.metric)
                txt, state_x = H.chunk(txt, dec_x)
            dec_a = R.temporal_route(audio, self.wq_t, self.wk_t, cfg.tau_temporal,
                                     metric=cfg.metric)
            audio_c, state_a = H.chunk(audio, dec_a)
        else:
            audio_c = audio

        a, v, x = audio_c, vis, txt
        for blk in self.mm_blocks:
            a, v, x = blk(a, v, x, cs.c_g)

        if cfg.hierarchical:
            # residual keeps per-position information for masked tokens
            a = T.add(H.dechunk(a, state_a), audio)

        for blk in self.single_blocks:
            a = blk(a, cs.c_g)

        return self.head(self.final_norm(a, cs.c_g))


def count_params(model: Mmhnet) -> int:
    return model.count_params()
