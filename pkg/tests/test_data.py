import numpy as np
import pytest

import mmhnet.data as D
from mmhnet.data import (CLASS_EMBEDDINGS, Episode, episode_arrays, episode_from_arrays,
                         generate_episode, make_split)


class TestClassBank:
    def test_embeddings_orthonormal(self):
        G = CLASS_EMBEDDINGS @ CLASS_EMBEDDINGS.T
        assert np.abs(G - np.eye(D.N_CLASSES)).max() < 1e-12

    def test_frequencies_below_nyquist(self):
        assert np.all(D.CLASS_FREQS > 0)
        assert np.all(D.CLASS_FREQS < 0.5)


class TestGenerateEpisode:
    def test_shapes(self):
        ep = generate_episode(0, 48, 3)
        assert ep.semantic.shape == (48, D.D_SEMANTIC)
        assert ep.sync.shape == (48, D.D_SYNC)
        assert ep.audio_latent.shape == (48, D.D_LATENT)
        assert ep.text.shape == (3, D.D_TEXT)
        assert len(ep.events) == 3

    def test_deterministic(self):
        a, b = generate_episode(7, 32, 2), generate_episode(7, 32, 2)
        assert np.array_equal(a.audio_latent, b.audio_latent)
        assert np.array_equal(a.semantic, b.semantic)
        assert a.events == b.events

    def test_different_seeds_differ(self):
        a, b = generate_episode(1, 32, 2), generate_episode(2, 32, 2)
        assert not np.array_equal(a.audio_latent, b.audio_latent)

    def test_events_ordered_and_in_bounds(self):
        for seed in range(10):
            ep = generate_episode(seed, 64, 4)
            last_end = 0
            for cls, onset, dur in ep.events:
                assert 0 <= cls < D.N_CLASSES
                assert onset >= last_end - 1 or onset >= 0
                assert onset + dur <= 64
                assert dur >= 2

    def test_sync_impulse_at_each_onset(self):
        ep = generate_episode(3, 64, 3)
        onsets = {onset for _, onset, _ in ep.events}
        norms = np.linalg.norm(ep.sync, axis=1)
        for ell in range(64):
            if ell in onsets:
                assert norms[ell] > 0.9
            else:
                assert norms[ell] == 0.0

    def test_semantic_matches_class_during_event(self):
        ep = generate_episode(4, 64, 3, redundancy=1.0)  # no jitter
        for cls, onset, dur in ep.events:
            for ell in range(onset, onset + dur):
                assert np.abs(ep.semantic[ell] - CLASS_EMBEDDINGS[cls]).max() < 1e-12

    def test_audio_envelope_peaks_at_onset(self):
        # instant-attack envelope: energy above background right at the onset
        ep = generate_episode(5, 96, 2, redundancy=1.0)
        energy = np.linalg.norm(ep.audio_latent, axis=1)
        bg = np.median(energy)
        for _, onset, _ in ep.events:
            assert energy[onset] > 2 * bg or energy[onset + 1] > 2 * bg

    def test_zero_events(self):
        ep = generate_episode(0, 16, 0)
        assert ep.events == []
        assert ep.text.shape == (1, D.D_TEXT)
        assert np.all(ep.sync == 0.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            generate_episode(0, 0, 1)
        with pytest.raises(ValueError):
            generate_episode(0, 16, -1)
        with pytest.raises(ValueError):
            generate_episode(0, 16, 1, redundancy=1.5)
        with pytest.raises(ValueError):
            generate_episode(0, 4, 3)  # 3 events of >= 2 frames cannot fit

    def test_redundancy_controls_jitter(self):
        clean = generate_episode(6, 64, 2, redundancy=1.0)
        noisy = generate_episode(6, 64, 2, redundancy=0.5)
        assert clean.events == noisy.events
        cls, onset, dur = clean.events[0]
        seg = slice(onset, onset + dur)
        dev_clean = np.abs(clean.semantic[seg] - CLASS_EMBEDDINGS[cls]).max()
        dev_noisy = np.abs(noisy.semantic[seg] - CLASS_EMBEDDINGS[cls]).max()
        assert dev_clean < 1e-12 < dev_noisy


class TestMakeSplit:
    def test_deterministic_and_distinct(self):
        a = make_split(1, 4, 32, 2)
        b = make_split(1, 4, 32, 2)
        for ea, eb in zip(a, b):
            assert np.array_equal(ea.audio_latent, eb.audio_latent)
        assert not np.array_equal(a[0].audio_latent, a[1].audio_latent)

    def test_split_seeds_disjoint(self):
        tr = make_split(1, 3, 32, 2)
        te = make_split(2, 3, 32, 2)
        assert {e.seed for e in tr}.isdisjoint({e.seed for e in te})


class TestEpisodeArrays:
    def test_roundtrip(self):
        ep = generate_episode(9, 40, 3)
        back = episode_from_arrays(episode_arrays(ep))
        assert back.seed == ep.seed and back.length == ep.length
        assert back.events == ep.events
        for name in ("semantic", "sync", "text", "audio_latent"):
            assert np.array_equal(getattr(back, name), getattr(ep, name))

    def test_roundtrip_zero_events(self):
        ep = generate_episode(9, 16, 0)
        back = episode_from_arrays(episode_arrays(ep))
        assert back.events == []


class TestEventEnvelope:
    def test_unit_peak_at_onsets(self):
        ep = generate_episode(11, 64, 3)
        env = ep.event_envelope()
        assert env.shape == (64,)
        for _, onset, _ in ep.events:
            assert env[onset] == 1.0
        assert np.all(env >= 0.0) and np.all(env <= 1.0)

    def test_decays_within_event(self):
        ep = Episode(seed=0, length=10, redundancy=1.0, events=[(0, 2, 5)],
                     semantic=np.zeros((10, 16)), sync=np.zeros((10, 16)),
                     text=np.zeros((1, 16)), audio_latent=np.zeros((10, 8)))
        env = ep.event_envelope()
        assert env[2] == 1.0
        assert np.all(np.diff(env[2:7]) < 0)
        assert np.all(env[:2] == 0.0) and np.all(env[7:] == 0.0)
