"""Ranked correspondences in the common space, top-R accuracy, Degree baseline."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from relalign.errors import DataError
from relalign.graph import RelationalDataset
from relalign.mmd import sq_distances


@dataclass
class MatchRanking:
    query_dataset: int
    query: int
    candidate_dataset: int
    candidates: np.ndarray
    distances: np.ndarray

    def rank_of(self, candidate: int) -> int | None:
        """1-based rank of ``candidate``, or None when it is not listed."""
        hit = np.flatnonzero(self.candidates == candidate)
        return int(hit[0]) + 1 if hit.size else None


@dataclass
class GroundTruth:
    """Known correspondences as (label in dataset A, label in dataset B)."""

    pairs: list[tuple[str, str]]

    def __post_init__(self) -> None:
        seen_a, seen_b = set(), set()
        for a, b in self.pairs:
            if a in seen_a or b in seen_b:
                raise DataError(f"label appears twice in ground truth: {a!r} / {b!r}")
            seen_a.add(a)
            seen_b.add(b)

    def __len__(self) -> int:
        return len(self.pairs)

    def reversed(self) -> "GroundTruth":
        return GroundTruth([(b, a) for a, b in self.pairs])

    def resolve(self, ds_a: RelationalDataset, ds_b: RelationalDataset) -> np.ndarray:
        """Index pairs, shape (n, 2). Raises DataError on unknown labels."""
        try:
            return np.array([(ds_a.index_of(a), ds_b.index_of(b)) for a, b in self.pairs], dtype=np.int64).reshape(-1, 2)
        except KeyError as exc:
            raise DataError(f"unresolvable ground-truth label: {exc.args[0]}") from None

    @classmethod
    def shared_labels(cls, ds_a: RelationalDataset, ds_b: RelationalDataset, kind: str | None = None) -> "GroundTruth":
        """Identity correspondence over labels present in both datasets."""
        in_b = set(ds_b.object_labels)
        pairs = []
        for i, lab in enumerate(ds_a.object_labels):
            if lab in in_b and (kind is None or ds_a.object_kinds is None or ds_a.object_kinds[i] == kind):
                pairs.append((lab, lab))
        return cls(pairs)


def read_ground_truth(path: str | Path) -> GroundTruth:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected two tab-separated labels")
            pairs.append((parts[0], parts[1]))
    return GroundTruth(pairs)


def write_ground_truth(truth: GroundTruth, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{a}\t{b}\n" for a, b in truth.pairs)


def _admissible(ds: RelationalDataset | None, kind: str | None, n: int) -> np.ndarray:
    if kind is None:
        return np.arange(n)
    if ds is None:
        raise DataError("a kind filter needs the candidate dataset")
    return ds.objects_of_kind(kind)


def rank_matches(
    queries,
    candidates,
    R: int,
    *,
    query_ids: Sequence[int] | np.ndarray | None = None,
    candidate_ds: RelationalDataset | None = None,
    kind: str | None = None,
    query_dataset: int = 1,
    candidate_dataset: int = 2,
    block: int = 1024,
) -> list[MatchRanking]:
    """Rank candidates by Euclidean distance to each query row.

    ``queries`` and ``candidates`` are projected vectors (one row per object).
    Only the rows in ``query_ids`` are ranked (all rows by default). Ties in
    distance go to the lower candidate index.
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    C = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if Q.shape[1] != C.shape[1]:
        raise ValueError(f"dimension mismatch: {Q.shape[1]} vs {C.shape[1]}")
    if R < 1:
        raise ValueError("R must be >= 1")
    allowed = _admissible(candidate_ds, kind, C.shape[0])
    ids = np.arange(Q.shape[0]) if query_ids is None else np.asarray(query_ids, dtype=np.int64)
    keep = min(R, allowed.size)
    Ca = C[allowed]
    out = []
    for start in range(0, ids.size, block):
        chunk = ids[start : start + block]
        dist = np.sqrt(sq_distances(Q[chunk], Ca))
        # stable sort on candidates laid out by ascending index: ties keep index order
        order = np.argsort(dist, axis=1, kind="stable")[:, :keep]
        for row, q in enumerate(chunk):
            sel = order[row]
            out.append(MatchRanking(query_dataset, int(q), candidate_dataset, allowed[sel], dist[row, sel]))
    return out


def degree_rank(
    ds_a: RelationalDataset,
    ds_b: RelationalDataset,
    query: int,
    R: int,
    *,
    kind: str | None = None,
) -> MatchRanking:
    """Rank objects of ``ds_b`` by how close their degree is to the query's."""
    allowed = _admissible(ds_b, kind, ds_b.num_objects)
    gap = np.abs(ds_b.degrees[allowed] - ds_a.degrees[query]).astype(np.float64)
    order = np.argsort(gap, kind="stable")[: min(R, allowed.size)]
    return MatchRanking(ds_a.dataset_id, int(query), ds_b.dataset_id, allowed[order], gap[order])


def top_r_accuracy(rankings: Iterable[MatchRanking], truth_pairs: np.ndarray, R: int) -> float:
    """Fraction of (query, true candidate) index pairs found within the first R entries."""
    by_query = {r.query: r for r in rankings}
    truth_pairs = np.asarray(truth_pairs, dtype=np.int64).reshape(-1, 2)
    if truth_pairs.shape[0] == 0:
        raise DataError("ground truth is empty")
    hits = 0
    for q, c in truth_pairs:
        ranking = by_query.get(int(q))
        if ranking is None:
            raise DataError(f"no ranking for query object {int(q)}")
        hits += bool(np.any(ranking.candidates[:R] == c))
    return hits / truth_pairs.shape[0]


def accuracy_curve(rankings: list[MatchRanking], truth_pairs: np.ndarray, r_grid: Sequence[int]) -> list[tuple[int, float, int]]:
    """(R, accuracy, n_queries) for each R in the grid."""
    n = int(np.asarray(truth_pairs).reshape(-1, 2).shape[0])
    return [(int(R), top_r_accuracy(rankings, truth_pairs, R), n) for R in r_grid]


def default_r_grid(num_candidates: int) -> list[int]:
    return list(range(1, min(100, num_candidates) + 1))


def write_rankings(
    rankings: Iterable[MatchRanking],
    query_labels: Sequence[str],
    candidate_labels: Sequence[str],
    path: str | Path,
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query\trank\tcandidate\tdistance\n")
        for r in rankings:
            q = query_labels[r.query]
            for rank, (c, d) in enumerate(zip(r.candidates, r.distances), 1):
                fh.write(f"{q}\t{rank}\t{candidate_labels[c]}\t{float(d)!r}\n")


def read_rankings(path: str | Path, ds_a: RelationalDataset, ds_b: RelationalDataset) -> list[MatchRanking]:
    rows: dict[int, list[tuple[int, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("query\trank"):
            raise DataError(f"{path}: missing rankings header")
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 columns")
            rows.setdefault(ds_a.index_of(parts[0]), []).append((ds_b.index_of(parts[2]), float(parts[3])))
    return [
        MatchRanking(ds_a.dataset_id, q, ds_b.dataset_id, np.array([c for c, _ in v]), np.array([d for _, d in v]))
        for q, v in rows.items()
    ]


def write_accuracy(curve: list[tuple[int, float, int]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["R", "accuracy", "n_queries"])
        for R, acc, n in curve:
            w.writerow([R, repr(acc), n])
