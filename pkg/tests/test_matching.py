import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relalign.align import random_orthogonal
from relalign.errors import DataError
from relalign.graph import from_edges
from relalign.matching import (
    GroundTruth,
    MatchRanking,
    accuracy_curve,
    default_r_grid,
    degree_rank,
    rank_matches,
    read_ground_truth,
    read_rankings,
    top_r_accuracy,
    write_accuracy,
    write_ground_truth,
    write_rankings,
)


def star_forest(hub_degrees, prefix="n"):
    """Hubs with the given leaf counts; hubs are kind 'hub', leaves 'leaf'."""
    labels, kinds, edges = [], [], []
    hubs = list(range(len(hub_degrees)))
    labels += [f"{prefix}h{i}" for i in hubs]
    kinds += ["hub"] * len(hubs)
    for h, deg in enumerate(hub_degrees):
        for j in range(deg):
            edges.append((h, len(labels)))
            labels.append(f"{prefix}l{h}_{j}")
            kinds.append("leaf")
    return from_edges(labels, edges, kinds=kinds)


class TestRankMatches:
    def test_exact_copy_first(self):
        rng = np.random.default_rng(0)
        C = rng.standard_normal((20, 4))
        Q = C[[7]].copy()
        (r,) = rank_matches(Q, C, 5)
        assert r.candidates[0] == 7 and r.distances[0] == 0.0

    def test_one_dimensional(self):
        (r,) = rank_matches([[0.0]], [[3.0], [-1.0], [2.0]], 3)
        assert r.candidates.tolist() == [1, 2, 0]
        assert r.distances.tolist() == [1.0, 2.0, 3.0]

    def test_ties_by_index(self):
        (r,) = rank_matches([[0.0]], [[1.0], [-1.0], [1.0], [0.5]], 4)
        assert r.candidates.tolist() == [3, 0, 1, 2]

    def test_brute_force(self):
        rng = np.random.default_rng(1)
        Q, C = rng.standard_normal((100, 50)), rng.standard_normal((1000, 50))
        rankings = rank_matches(Q, C, 1000, block=37)
        for q, r in zip(range(100), rankings):
            d = [math.sqrt(sum((a - b) ** 2 for a, b in zip(Q[q], C[c]))) for c in range(1000)]
            expected = sorted(range(1000), key=lambda c: (d[c], c))
            assert r.candidates.tolist() == expected
            assert np.allclose(r.distances, np.sort(d), rtol=1e-9)
            assert np.all(np.diff(r.distances) >= 0)

    def test_length_and_subset(self):
        rng = np.random.default_rng(2)
        rankings = rank_matches(rng.standard_normal((5, 2)), rng.standard_normal((4, 2)), 10, query_ids=[1, 3])
        assert [r.query for r in rankings] == [1, 3]
        assert all(len(r.candidates) == 4 and len(set(r.candidates.tolist())) == 4 for r in rankings)

    def test_kind_filter(self):
        ds = star_forest([2, 3])
        V = np.arange(ds.num_objects, dtype=float)[:, None]
        (r,) = rank_matches([[100.0]], V, 10, candidate_ds=ds, kind="hub")
        assert sorted(r.candidates.tolist()) == [0, 1]
        with pytest.raises(DataError):
            rank_matches([[0.0]], V, 1, candidate_ds=ds, kind="nope")

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rank_matches(np.ones((1, 2)), np.ones((3, 3)), 1)

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(3)
        Q, C = rng.standard_normal((30, 6)), rng.standard_normal((200, 6))
        W = random_orthogonal(6, rng)
        a = rank_matches(Q, C, 200)
        b = rank_matches(Q @ W.T, C @ W.T, 200)
        for x, y in zip(a, b):
            assert np.allclose(x.distances, y.distances, atol=1e-12)
            assert x.candidates.tolist() == y.candidates.tolist()


class TestDegreeRank:
    def test_enumerated_example(self):
        ds_a = star_forest([5], prefix="a")
        ds_b = star_forest([1, 5, 9, 6], prefix="b")
        r = degree_rank(ds_a, ds_b, 0, 4, kind="hub")
        assert r.candidates.tolist() == [1, 3, 0, 2]
        assert r.distances.tolist() == [0.0, 1.0, 4.0, 4.0]

    def test_identical_graphs(self):
        ds = star_forest([3, 1, 4])
        for q in range(3):
            r = degree_rank(ds, ds, q, ds.num_objects)
            assert r.distances[r.rank_of(q) - 1] == 0.0

    def test_oracle_sort(self):
        rng = np.random.default_rng(4)
        ds_b = star_forest(rng.integers(1, 12, 200).tolist(), prefix="b")
        ds_a = star_forest([6], prefix="a")
        r = degree_rank(ds_a, ds_b, 0, 200, kind="hub")
        deg = ds_b.degrees[:200]
        assert r.candidates.tolist() == sorted(range(200), key=lambda c: (abs(deg[c] - 6), c))


class TestAccuracy:
    def perfect(self, n=10):
        return [MatchRanking(1, q, 2, np.array([q] + [c for c in range(n) if c != q]), np.zeros(n)) for q in range(n)]

    @pytest.mark.parametrize("R", [1, 3, 10])
    def test_all_rank_one(self, R):
        truth = np.stack([np.arange(10)] * 2, axis=1)
        assert top_r_accuracy(self.perfect(), truth, R) == 1.0

    def test_exhaustive(self):
        rng = np.random.default_rng(5)
        rankings = [MatchRanking(1, q, 2, rng.permutation(8), np.zeros(8)) for q in range(8)]
        truth = np.stack([np.arange(8), rng.permutation(8)], axis=1)
        assert top_r_accuracy(rankings, truth, 8) == 1.0

    def test_chance_level(self):
        rng = np.random.default_rng(6)
        N, n_q, R = 200, 1000, 10
        rankings = [MatchRanking(1, q, 2, rng.permutation(N), np.zeros(N)) for q in range(n_q)]
        truth = np.stack([np.arange(n_q), rng.integers(0, N, n_q)], axis=1)
        p = R / N
        assert abs(top_r_accuracy(rankings, truth, R) - p) < 3 * math.sqrt(p * (1 - p) / n_q)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_monotone_in_r(self, seed):
        rng = np.random.default_rng(seed)
        rankings = rank_matches(rng.standard_normal((15, 3)), rng.standard_normal((15, 3)), 15)
        truth = np.stack([np.arange(15), rng.permutation(15)], axis=1)
        accs = [a for _, a, _ in accuracy_curve(rankings, truth, range(1, 16))]
        assert all(x <= y for x, y in zip(accs, accs[1:]))
        assert accs[-1] == 1.0

    def test_missing_ranking(self):
        with pytest.raises(DataError):
            top_r_accuracy(self.perfect(3), np.array([[5, 0]]), 1)

    def test_r_grid(self):
        assert default_r_grid(7) == list(range(1, 8))
        assert default_r_grid(5000)[-1] == 100


class TestGroundTruth:
    def test_resolve(self):
        a = from_edges(["x", "y"], [(0, 1)])
        b = from_edges(["y", "x", "z"], [(0, 1), (1, 2)])
        assert GroundTruth.shared_labels(a, b).resolve(a, b).tolist() == [[0, 1], [1, 0]]
        with pytest.raises(DataError):
            GroundTruth([("x", "q")]).resolve(a, b)

    def test_duplicates(self):
        with pytest.raises(DataError):
            GroundTruth([("a", "b"), ("a", "c")])

    def test_file_roundtrip(self, tmp_path):
        truth = GroundTruth([("a", "1"), ("b", "2")])
        write_ground_truth(truth, tmp_path / "t.tsv")
        with open(tmp_path / "t.tsv", "a") as fh:
            fh.write("# trailing comment\n")
        assert read_ground_truth(tmp_path / "t.tsv").pairs == truth.pairs


def test_rankings_and_accuracy_files(tmp_path):
    a = from_edges(["p", "q", "r"], [(0, 1), (1, 2)], dataset_id=1)
    b = from_edges(["P", "Q", "R"], [(0, 1), (1, 2)], dataset_id=2)
    rng = np.random.default_rng(7)
    rankings = rank_matches(rng.standard_normal((3, 2)), rng.standard_normal((3, 2)), 3)
    write_rankings(rankings, a.object_labels, b.object_labels, tmp_path / "r.tsv")
    lines = (tmp_path / "r.tsv").read_text().splitlines()
    assert lines[0] == "query\trank\tcandidate\tdistance" and len(lines) == 10
    back = read_rankings(tmp_path / "r.tsv", a, b)
    for x, y in zip(rankings, back):
        assert x.candidates.tolist() == y.candidates.tolist()
        assert x.distances.tolist() == y.distances.tolist()
    truth = np.array([[0, 0], [1, 1], [2, 2]])
    write_accuracy(accuracy_curve(rankings, truth, [1, 2, 3]), tmp_path / "a.csv")
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "R,accuracy,n_queries" and rows[-1] == "3,1.0,3"
