"""Deterministic synthetic multimodal episodes.

Each episode carries a handful of timed "events".  An event of class c
activates a class-specific oscillator pattern in the audio latent, stamps an
impulse in the sync stream at its onset, writes the class embedding into the
semantic stream for its duration, and contributes one row to the text
stream.  The 8 class embeddings are mutually orthogonal, which makes
cosine-routing behavior on these streams analytically predictable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_CLASSES = 8
D_SEMANTIC = 16
D_SYNC = 16
D_TEXT = 16
D_LATENT = 8
BACKGROUND_NOISE = 0.02

_BANK_SEED = 12345


def _bank():
    rng = np.random.default_rng(_BANK_SEED)
    q, _ = np.linalg.qr(rng.normal(size=(D_SEMANTIC, D_SEMANTIC)))
    class_emb = q[:, :N_CLASSES].T.copy()          # N_CLASSES x D_SEMANTIC, orthonormal
    freqs = 0.05 + 0.04 * np.arange(N_CLASSES)     # cycles per frame, below Nyquist
    amps = rng.uniform(0.3, 1.0, size=(N_CLASSES, D_LATENT))
    phases = rng.uniform(0.0, 2 * np.pi, size=(N_CLASSES, D_LATENT))
    return class_emb, freqs, amps, phases


CLASS_EMBEDDINGS, CLASS_FREQS, CLASS_AMPS, CLASS_PHASES = _bank()


@dataclass
class Episode:
    seed: int
    length: int
    redundancy: float
    events: list[tuple[int, int, int]]   # (class_id, onset_frame, duration_frames)
    semantic: np.ndarray                 # L x D_SEMANTIC
    sync: np.ndarray                     # L x D_SYNC
    text: np.ndarray                     # T_t x D_TEXT
    audio_latent: np.ndarray             # L x D_LATENT

    def event_envelope(self) -> np.ndarray:
        """Percussive ground-truth envelope: 1 at each onset, decaying over the event."""
        env = np.zeros(self.length)
        for c, onset, dur in self.events:
            frames = np.arange(onset, onset + dur)
            env[frames] = np.maximum(env[frames], np.exp(-2.0 * (frames - onset) / max(dur, 1)))
        return env


def _place_events(rng: np.random.Generator, length: int, n_events: int):
    if n_events == 0:
        return []
    min_dur = 2
    if n_events * min_dur > length:
        raise ValueError(f"cannot place {n_events} events of length >= {min_dur} in {length} frames")
    slot = length // n_events
    events = []
    for i in range(n_events):
        lo = i * slot
        dur = int(rng.integers(min_dur, max(min_dur + 1, (3 * slot) // 4 + 1)))
        dur = min(dur, slot)
        onset = int(rng.integers(lo, max(lo + 1, lo + slot - dur + 1)))
        cls = int(rng.integers(0, N_CLASSES))
        events.append((cls, onset, dur))
    return events


def class_audio_pattern(cls: int, frames: np.ndarray, onset: int) -> np.ndarray:
    """Per-class oscillator: amp[c, d] * sin(2*pi*f_c*(frame-onset) + phase[c, d])."""
    rel = (frames - onset)[:, None]
    return CLASS_AMPS[cls] * np.sin(2 * np.pi * CLASS_FREQS[cls] * rel + CLASS_PHASES[cls])


def generate_episode(seed: int, length: int, n_events: int,
                     redundancy: float = 0.9) -> Episode:
    if length < 1:
        raise ValueError("length must be >= 1")
    if n_events < 0:
        raise ValueError("n_events must be >= 0")
    if not 0.0 <= redundancy <= 1.0:
        raise ValueError("redundancy must lie in [0, 1]")
    rng = np.random.default_rng([seed, length, n_events])
    events = _place_events(rng, length, n_events)

    jitter = (1.0 - redundancy) * 0.3
    semantic = rng.normal(size=(length, D_SEMANTIC)) * 0.01
    sync = np.zeros((length, D_SYNC))
    audio = rng.normal(size=(length, D_LATENT)) * BACKGROUND_NOISE
    text_rows = []
    for cls, onset, dur in events:
        frames = np.arange(onset, onset + dur)
        env = np.exp(-2.0 * (frames - onset) / max(dur, 1))
        semantic[frames] = CLASS_EMBEDDINGS[cls]
        if jitter > 0:
            semantic[frames] += rng.normal(size=(dur, D_SEMANTIC)) * jitter
        sync[onset] = CLASS_EMBEDDINGS[cls]
        audio[frames] += env[:, None] * class_audio_pattern(cls, frames, onset)
        text_rows.append(CLASS_EMBEDDINGS[cls].copy())
    text = np.array(text_rows) if text_rows else np.zeros((1, D_TEXT))
    return Episode(seed=seed, length=length, redundancy=redundancy, events=events,
                   semantic=semantic, sync=sync, text=text, audio_latent=audio)


def make_split(seed: int, size: int, length: int, n_events: int = 4,
               redundancy: float = 0.9) -> list[Episode]:
    """Deterministic episode sequence; (seed, index) pairs identify episodes."""
    mix = np.random.default_rng(seed).integers(0, 2**31 - 1)
    return [generate_episode(int(mix) * 100003 + i, length, n_events, redundancy)
            for i in range(size)]


def episode_arrays(ep: Episode) -> dict[str, np.ndarray]:
    """Flatten an episode into named arrays for the manifest+raw persistence format."""
    return {
        "meta": np.array([ep.seed, ep.length, ep.redundancy], dtype=np.float64),
        "events": np.array(ep.events, dtype=np.float64).reshape(-1, 3)
                  if ep.events else np.zeros((0, 3)),
        "semantic": ep.semantic,
        "sync": ep.sync,
        "text": ep.text,
        "audio_latent": ep.audio_latent,
    }


def episode_from_arrays(arrays: dict[str, np.ndarray]) -> Episode:
    meta = arrays["meta"]
    events = [(int(c), int(o), int(d)) for c, o, d in arrays["events"]]
    return Episode(seed=int(meta[0]), length=int(meta[1]), redundancy=float(meta[2]),
                   events=events, semantic=arrays["semantic"], sync=arrays["sync"],
                   text=arrays["text"], audio_latent=arrays["audio_latent"])
