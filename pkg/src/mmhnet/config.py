"""Run configuration: flat ``section.key = value`` text files.

Every key has a default; unknown keys are a hard error so typos never
silently fall back.  The serialized form is written verbatim next to every
run for reproducibility.
"""

from __future__ import annotations

from .model import MmhnetConfig, MixerKind
from .routing import SimilarityMetric

DEFAULTS: dict[str, object] = {
    "model.preset": "tiny",
    "model.n_mm": 0,                 # 0 = take from preset
    "model.n_single": 0,
    "model.d_model": 0,
    "model.n_heads": 0,
    "model.d_state": 0,
    "model.mixer": "noncausal",      # noncausal | causal | attention
    "model.hierarchical": True,
    "model.mm_routing": True,
    "block.local_conv": True,
    "model.nc_unit_mask": False,
    "conditioning.sync_pos_emb": False,
    "routing.metric": "cosine",      # cosine | euclidean | dot
    "routing.tau_temporal": 0.5,
    "routing.tau_mm": 0.5,
    "hierarchy.stages": 1,
    "flow.steps": 25,
    "flow.cfg_scale": 4.0,
    "train.lr": 1e-4,
    "train.weight_decay": 0.01,
    "train.iters": 400,
    "train.batch": 2,
    "train.seed": 0,
    "train.cond_dropout": 0.1,
    "train.ckpt_every": 0,           # 0 = final only
    "data.train_seed": 1,
    "data.test_seed": 2,
    "data.train_size": 64,
    "data.test_size": 16,
    "data.train_length": 32,
    "data.test_lengths": "64,128,256",
    "data.n_events": 3,
    "data.redundancy": 0.9,
    "eval.chunk_len": 32,
    "eval.embedder_seed": 7,
    "eval.gen_per_episode": 1,
    "paths.out": "runs",
}


class ConfigError(ValueError):
    pass


class RunConfig:
    def __init__(self, values: dict[str, object] | None = None):
        self.values = dict(DEFAULTS)
        if values:
            for k, v in values.items():
                self.set(k, v)

    def set(self, key: str, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        default = DEFAULTS[key]
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "0", "1"):
                    raise ConfigError(f"{key}: expected boolean, got {value!r}")
                value = value.lower() in ("true", "1")
            value = bool(value)
        elif isinstance(default, int):
            value = int(value)
        elif isinstance(default, float):
            value = float(value)
        else:
            value = str(value)
        self.values[key] = value

    def __getitem__(self, key: str):
        if key not in self.values:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    # -- text round trip ----------------------------------------------------
    @staticmethod
    def parse(text: str) -> "RunConfig":
        cfg = RunConfig()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'section.key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.count(".") != 1:
                raise ConfigError(f"line {lineno}: key must be 'section.key', got {key!r}")
            cfg.set(key, value)
        return cfg

    @staticmethod
    def load(path: str) -> "RunConfig":
        with open(path) as f:
            return RunConfig.parse(f.read())

    def serialize(self) -> str:
        return "\n".join(f"{k} = {self.values[k]}" for k in sorted(self.values)) + "\n"

    # -- derived objects ----------------------------------------------------
    def model_config(self) -> MmhnetConfig:
        preset = {"tiny": MmhnetConfig.tiny, "small": MmhnetConfig.small,
                  "large": MmhnetConfig.large}.get(self["model.preset"])
        if preset is None:
            raise ConfigError(f"unknown preset {self['model.preset']!r}")
        over = {}
        for key, attr in (("model.n_mm", "n_mm"), ("model.n_single", "n_single"),
                          ("model.d_model", "d_model"), ("model.n_heads", "n_heads"),
                          ("model.d_state", "d_state")):
            if self[key]:
                over[attr] = self[key]
        mixers = {"noncausal": MixerKind.NONCAUSAL_MAMBA, "causal": MixerKind.CAUSAL_MAMBA,
                  "attention": MixerKind.ATTENTION_NO_POSEMB}
        if self["model.mixer"] not in mixers:
            raise ConfigError(f"unknown mixer {self['model.mixer']!r}")
        metrics = {"cosine": SimilarityMetric.COSINE, "euclidean": SimilarityMetric.EUCLIDEAN,
                   "dot": SimilarityMetric.DOT_PRODUCT}
        if self["routing.metric"] not in metrics:
            raise ConfigError(f"unknown metric {self['routing.metric']!r}")
        return preset(
            mixer=mixers[self["model.mixer"]],
            metric=metrics[self["routing.metric"]],
            hierarchical=self["model.hierarchical"],
            mm_routing=self["model.mm_routing"],
            local_conv=self["block.local_conv"],
            nc_unit_mask=self["model.nc_unit_mask"],
            sync_pos_emb=self["conditioning.sync_pos_emb"],
            tau_temporal=self["routing.tau_temporal"],
            tau_mm=self["routing.tau_mm"],
            flow_steps=self["flow.steps"],
            cfg_scale=self["flow.cfg_scale"],
            **over,
        )

    def test_lengths(self) -> list[int]:
        return [int(s) for s in str(self["data.test_lengths"]).split(",") if s.strip()]
