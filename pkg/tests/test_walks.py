import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relalign.errors import ConfigError
from relalign.graph import from_edges
from relalign.synthetic import stochastic_block_model
from relalign.walks import (
    WalkConfig,
    WalkCorpus,
    extract_pairs,
    generate_walks,
    load_corpus,
    pair_count,
    save_corpus,
    walk_pairs,
)


def brute_pairs(walk, window):
    out = []
    for t, c in enumerate(walk):
        for s in range(max(0, t - window), min(len(walk), t + window + 1)):
            if s != t:
                out.append((c, walk[s]))
    return out


class TestWalkConfig:
    def test_defaults(self):
        cfg = WalkConfig()
        assert (cfg.walks_per_object, cfg.walk_length, cfg.window) == (10, 80, 10)

    @pytest.mark.parametrize("kw", [dict(walks_per_object=0), dict(walk_length=1), dict(window=0), dict(walk_length=5, window=5)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            WalkConfig(**kw)


class TestGenerateWalks:
    def test_forced_walk(self):
        ds = from_edges("ab", [(0, 1)])
        corpus = generate_walks(ds, WalkConfig(walks_per_object=1, walk_length=4, window=1))
        assert corpus.walks[0].tolist() == [0, 1, 0, 1]

    def test_uniform_next_step(self):
        ds = from_edges("abc", [(0, 1), (1, 2), (0, 2)])
        corpus = generate_walks(ds, WalkConfig(walks_per_object=1, walk_length=10_001, window=1, seed=4))
        walk = corpus.walks[0]
        # from a, the next object is b or c with probability 1/2 each
        nxt = walk[1:][walk[:-1] == 0]
        freq = np.mean(nxt == 1)
        assert abs(freq - 0.5) < 0.02
        assert set(nxt.tolist()) == {1, 2}

    def test_structure(self):
        ds, _ = stochastic_block_model([15, 15], 0.3, 0.05, seed=2)
        cfg = WalkConfig(walks_per_object=3, walk_length=12, window=3, seed=9)
        corpus = generate_walks(ds, cfg)
        adj = ds.adjacency
        assert corpus.num_walks == 3 * int((~ds.isolated).sum())
        for walk in corpus.walks:
            assert walk.size == 12
            for a, b in zip(walk[:-1], walk[1:]):
                assert b in adj[a]
        starts = corpus.walks[:, 0]
        assert np.all(np.diff(starts) >= 0)

    def test_isolated_skipped(self):
        ds = from_edges("abc", [(0, 1)])
        corpus = generate_walks(ds, WalkConfig(walks_per_object=2, walk_length=5, window=1))
        assert corpus.num_walks == 4
        assert corpus.skipped_isolated == 1
        assert 2 not in corpus.walks

    def test_deterministic_and_thread_independent(self):
        ds, _ = stochastic_block_model([20, 20], 0.3, 0.05, seed=1)
        cfg = WalkConfig(walks_per_object=4, walk_length=20, window=2, seed=5)
        a = generate_walks(ds, cfg)
        b = generate_walks(ds, cfg)
        c = generate_walks(ds, cfg, threads=3)
        assert a.walks.tobytes() == b.walks.tobytes() == c.walks.tobytes()
        d = generate_walks(ds, WalkConfig(walks_per_object=4, walk_length=20, window=2, seed=6))
        assert not np.array_equal(a.walks, d.walks)


class TestExtractPairs:
    def corpus(self, walks, window):
        walks = np.asarray(walks)
        return WalkCorpus(1, walks, WalkConfig(1, walks.shape[1], window))

    def test_window_one(self):
        c, x = extract_pairs(self.corpus([[0, 1, 2]], 1))
        assert list(zip(c.tolist(), x.tolist())) == [(0, 1), (1, 0), (1, 2), (2, 1)]

    def test_window_two(self):
        c, x = extract_pairs(self.corpus([[0, 1, 2]], 2))
        got = set(zip(c.tolist(), x.tolist()))
        assert got == {(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)}
        assert len(c) == 6

    def test_interior_centers_emit_2w(self):
        L, w = 30, 4
        walk = np.arange(L)
        c, _ = walk_pairs(walk[None, :], w)
        counts = np.bincount(c, minlength=L)
        assert np.all(counts[w : L - w] == 2 * w)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 15), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**16))
    def test_matches_enumeration(self, length, window, nwalks, seed):
        walks = np.random.default_rng(seed).integers(0, 9, size=(nwalks, length))
        c, x = walk_pairs(walks, window)
        expected = [p for w in walks.tolist() for p in brute_pairs(w, window)]
        assert list(zip(c.tolist(), x.tolist())) == expected
        assert len(expected) == pair_count([length] * nwalks, window)

    def test_pairs_within_window_distance(self):
        ds, _ = stochastic_block_model([12, 12], 0.3, 0.1, seed=3)
        cfg = WalkConfig(walks_per_object=2, walk_length=10, window=3, seed=0)
        corpus = generate_walks(ds, cfg)
        c, x = extract_pairs(corpus)
        # hop distances by BFS
        A = np.zeros((ds.num_objects,) * 2, dtype=int)
        for a, b in ds.edges():
            A[a, b] = A[b, a] = 1
        reach = np.eye(ds.num_objects, dtype=int)
        step = np.eye(ds.num_objects, dtype=int)
        for _ in range(cfg.window):
            step = np.minimum(step @ A, 1)
            reach = np.maximum(reach, step)
        assert np.all(reach[c, x] == 1)


def test_corpus_roundtrip(tmp_path):
    ds, _ = stochastic_block_model([10, 10], 0.4, 0.1, seed=0)
    corpus = generate_walks(ds, WalkConfig(walks_per_object=2, walk_length=7, window=2, seed=3))
    save_corpus(corpus, tmp_path / "c.walks")
    back = load_corpus(tmp_path / "c.walks")
    assert np.array_equal(back.walks, corpus.walks)
    assert back.config == corpus.config
    assert back.dataset_id == corpus.dataset_id
