"""Desk-scale metric suite: Frechet distance, KL, inception-style score,
temporal-offset estimation, and cross-modal alignment.

The pretrained metric backbones are replaced by a fixed-seed
random-projection embedder over per-channel chunk statistics, validated once
for class separability, plus a frozen least-squares linear classifier over
the 8 synthetic classes.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .data import (CLASS_EMBEDDINGS, N_CLASSES, D_LATENT, Episode, class_audio_pattern)

EMBED_DIM = 32
DEFAULT_CHUNK_LEN = 32
DEFAULT_EMBEDDER_SEED = 7

CSV_COLUMNS = ("fd", "kl", "isc", "ib_analog", "desync_frames")


@dataclass
class MetricReport:
    fd: float
    kl: float
    isc: float
    ib_analog: float
    desync_frames: float

    def csv_row(self) -> str:
        return ",".join(f"{getattr(self, c):.10g}" for c in CSV_COLUMNS)


# -- Frechet distance -------------------------------------------------------

def _psd_sqrt(sigma: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(sigma)
    if np.min(w) < -1e-8:
        raise ValueError(f"covariance not PSD: min eigenvalue {np.min(w):.3e}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(mu1, sigma1, mu2, sigma2) -> float:
    """||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), via the symmetric form."""
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    s1, s2 = np.asarray(sigma1, float), np.asarray(sigma2, float)
    if mu1.shape != mu2.shape or s1.shape != s2.shape:
        raise ValueError("dimension mismatch between the two Gaussians")
    r1 = _psd_sqrt(s1)
    inner = r1 @ s2 @ r1
    w = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    if np.min(w) < -1e-8:
        raise ValueError(f"cross term not PSD: min eigenvalue {np.min(w):.3e}")
    w = np.clip(w, 0.0, None)
    diff = mu1 - mu2
    return float(diff @ diff + np.trace(s1) + np.trace(s2) - 2.0 * np.sqrt(w).sum())


def gaussian_moments(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    features = np.asarray(features, float)
    mu = features.mean(axis=0)
    cen = features - mu
    sigma = cen.T @ cen / max(features.shape[0] - 1, 1)
    return mu, sigma


# -- embedder ---------------------------------------------------------------

@functools.lru_cache(maxsize=8)
def _projection(seed: int, d_in: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(size=(d_in, EMBED_DIM)) / np.sqrt(d_in)


def _chunk_stats(chunk: np.ndarray) -> np.ndarray:
    """Per-channel mean and RMS; enough to separate the oscillator classes."""
    return np.concatenate([chunk.mean(axis=0), np.sqrt((chunk ** 2).mean(axis=0))])


def embed_chunks(audio_latent: np.ndarray, chunk_len: int = DEFAULT_CHUNK_LEN,
                 embedder_seed: int = DEFAULT_EMBEDDER_SEED) -> np.ndarray:
    """Non-overlapping chunks -> tanh(random projection of chunk statistics)."""
    if chunk_len < 1:
        raise ValueError("chunk_len must be >= 1")
    audio_latent = np.asarray(audio_latent, float)
    L = audio_latent.shape[0]
    if L < chunk_len:
        raise ValueError(f"sequence length {L} shorter than chunk length {chunk_len}")
    n = L // chunk_len
    P = _projection(embedder_seed, 2 * audio_latent.shape[1])
    feats = np.empty((n, EMBED_DIM))
    for i in range(n):
        stats = _chunk_stats(audio_latent[i * chunk_len:(i + 1) * chunk_len])
        feats[i] = np.tanh(stats @ P)
    return feats


def _clean_class_chunks(chunk_len: int, per_class: int = 24):
    """Single-class oscillator chunks used to calibrate classifier and IB map."""
    rng = np.random.default_rng(2024)
    X, y = [], []
    frames = np.arange(chunk_len)
    for cls in range(N_CLASSES):
        for _ in range(per_class):
            onset = -int(rng.integers(0, chunk_len))
            chunk = class_audio_pattern(cls, frames, onset)
            chunk = chunk + rng.normal(size=chunk.shape) * 0.02
            X.append(chunk)
            y.append(cls)
    return X, np.array(y)


@functools.lru_cache(maxsize=4)
def _classifier(chunk_len: int, embedder_seed: int):
    """Frozen linear classifier: least-squares one-hot regression on clean chunks."""
    chunks, labels = _clean_class_chunks(chunk_len)
    F = np.vstack([embed_chunks(c, chunk_len, embedder_seed) for c in chunks])
    Y = np.eye(N_CLASSES)[labels]
    reg = 1e-3 * np.eye(F.shape[1])
    W = np.linalg.solve(F.T @ F + reg, F.T @ Y)
    centroids = np.vstack([F[labels == c].mean(axis=0) for c in range(N_CLASSES)])
    return W, centroids


def class_posteriors(features: np.ndarray, chunk_len: int = DEFAULT_CHUNK_LEN,
                     embedder_seed: int = DEFAULT_EMBEDDER_SEED,
                     temperature: float = 8.0) -> np.ndarray:
    W, _ = _classifier(chunk_len, embedder_seed)
    logits = temperature * (features @ W)
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return np.clip(p, 1e-8, None) / np.clip(p, 1e-8, None).sum(axis=1, keepdims=True)


def classifier_accuracy(chunk_len: int = DEFAULT_CHUNK_LEN,
                        embedder_seed: int = DEFAULT_EMBEDDER_SEED) -> float:
    """Nearest-centroid accuracy on held-out clean chunks (embedder sanity gate)."""
    _, centroids = _classifier(chunk_len, embedder_seed)
    rng = np.random.default_rng(999)
    frames = np.arange(chunk_len)
    correct = total = 0
    for cls in range(N_CLASSES):
        for _ in range(16):
            onset = -int(rng.integers(0, chunk_len))
            chunk = class_audio_pattern(cls, frames, onset) + rng.normal(size=(chunk_len, D_LATENT)) * 0.02
            f = embed_chunks(chunk, chunk_len, embedder_seed)[0]
            pred = np.argmin(((centroids - f) ** 2).sum(axis=1))
            correct += int(pred == cls)
            total += 1
    return correct / total


# -- KL and inception-style score ------------------------------------------

def kl_and_isc(gen_features: np.ndarray, ref_features: np.ndarray,
               chunk_len: int = DEFAULT_CHUNK_LEN,
               embedder_seed: int = DEFAULT_EMBEDDER_SEED) -> tuple[float, float]:
    pg = class_posteriors(gen_features, chunk_len, embedder_seed)
    pr = class_posteriors(ref_features, chunk_len, embedder_seed)
    n = min(len(pg), len(pr))
    kl = float(np.mean(np.sum(pr[:n] * np.log(pr[:n] / pg[:n]), axis=1)))
    marginal = pg.mean(axis=0)
    isc = float(np.exp(np.mean(np.sum(pg * np.log(pg / marginal), axis=1))))
    return kl, isc


# -- temporal offset --------------------------------------------------------

def energy_envelope(latent: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(latent, float), axis=1)


def desync_analog(gen_latent: np.ndarray, episode: Episode) -> float:
    """|argmax-lag| of cross-correlation between generated energy and the event envelope."""
    e = energy_envelope(gen_latent)
    ref = episode.event_envelope()
    L = min(e.shape[0], ref.shape[0])
    e, ref = e[:L], ref[:L]
    if np.all(ref == 0.0) or np.all(e == 0.0):
        raise ValueError("all-zero envelope; cannot estimate offset")
    e = e - e.mean()
    ref = ref - ref.mean()
    max_lag = L // 4
    lags = np.arange(-max_lag, max_lag + 1)
    best, best_lag = -np.inf, 0
    for lag in lags:
        if lag >= 0:
            c = float(e[lag:] @ ref[:L - lag])
        else:
            c = float(e[:L + lag] @ ref[-lag:])
        if c > best:
            best, best_lag = c, int(lag)
    return float(abs(best_lag))


# -- cross-modal alignment --------------------------------------------------

def _pooled_audio_features(latent: np.ndarray, chunk_len: int, embedder_seed: int) -> np.ndarray:
    cl = min(chunk_len, np.asarray(latent).shape[0])
    return embed_chunks(latent, cl, embedder_seed).mean(axis=0)


@functools.lru_cache(maxsize=4)
def _cond_projection(chunk_len: int, embedder_seed: int):
    """Frozen ridge map from pooled semantic conditions to pooled audio features.

    Calibrated once on a fixed set of synthetic episodes (seeds disjoint from
    train/test usage); returns (semantic mean, audio-feature mean, map).
    """
    from .data import generate_episode
    X, Y = [], []
    for i in range(64):
        ep = generate_episode(5_000_000 + i, 64, 3)
        X.append(ep.semantic.mean(axis=0))
        Y.append(_pooled_audio_features(ep.audio_latent, chunk_len, embedder_seed))
    X, Y = np.array(X), np.array(Y)
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - xm, Y - ym
    reg = 1e-4 * np.eye(X.shape[1])
    M = np.linalg.solve(Xc.T @ Xc + reg, Xc.T @ Yc)
    return xm, ym, M


def ib_analog(gen_latent: np.ndarray, episode: Episode,
              chunk_len: int = DEFAULT_CHUNK_LEN,
              embedder_seed: int = DEFAULT_EMBEDDER_SEED) -> float:
    """Cosine similarity of pooled audio features vs. projected condition features."""
    xm, ym, M = _cond_projection(chunk_len, embedder_seed)
    audio_vec = _pooled_audio_features(gen_latent, chunk_len, embedder_seed) - ym
    cond_vec = (episode.semantic.mean(axis=0) - xm) @ M
    na, nc = np.linalg.norm(audio_vec), np.linalg.norm(cond_vec)
    if na < 1e-12 or nc < 1e-12:
        return 0.0
    return float(audio_vec @ cond_vec / (na * nc))


# -- aggregate --------------------------------------------------------------

def evaluate_pairs(gen_latents: list[np.ndarray], episodes: list[Episode],
                   chunk_len: int = DEFAULT_CHUNK_LEN,
                   embedder_seed: int = DEFAULT_EMBEDDER_SEED) -> MetricReport:
    gen_feats = np.vstack([embed_chunks(g, min(chunk_len, g.shape[0]), embedder_seed)
                           for g in gen_latents])
    ref_feats = np.vstack([embed_chunks(ep.audio_latent,
                                        min(chunk_len, ep.audio_latent.shape[0]), embedder_seed)
                           for ep in episodes])
    mu_g, s_g = gaussian_moments(gen_feats)
    mu_r, s_r = gaussian_moments(ref_feats)
    fd = frechet_distance(mu_g, s_g, mu_r, s_r)
    kl, isc = kl_and_isc(gen_feats, ref_feats, chunk_len, embedder_seed)
    ib = float(np.median([ib_analog(g, ep, chunk_len, embedder_seed)
                          for g, ep in zip(gen_latents, episodes)]))
    desync = float(np.median([desync_analog(g, ep) for g, ep in zip(gen_latents, episodes)]))
    return MetricReport(fd=fd, kl=kl, isc=isc, ib_analog=ib, desync_frames=desync)
