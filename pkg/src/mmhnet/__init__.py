"""Long-form multimodal-to-audio generation at desk scale.

Library layout:

- ``tensor`` / ``gradcheck``: float64 tape autodiff with an FD oracle
- ``kernels``: causal / non-causal SSD token mixing (recurrence + matrix form)
- ``routing`` / ``hierarchy``: similarity-based token selection, chunk/dechunk
- ``conditioning``: condition projections and adaLN global conditioning
- ``flow``: flow-matching loss, Euler sampling, classifier-free guidance
- ``model``: the assembled network plus baseline mixers
- ``data``: deterministic synthetic multimodal episodes
- ``evaluation``: Frechet / KL / inception-style / sync-offset / alignment metrics
- ``cli``: data gen, train, generate, eval, ablate, bench
"""

from .model import Mmhnet, MmhnetConfig, MixerKind, RawConditions, attention_no_posemb
from .config import RunConfig

__all__ = ["Mmhnet", "MmhnetConfig", "MixerKind", "RawConditions",
           "attention_no_posemb", "RunConfig"]
__version__ = "0.1.0"
