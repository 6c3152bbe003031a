"""Uniform random walks and the (center, context) pairs they induce."""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from relalign.errors import ConfigError, DataError
from relalign.graph import RelationalDataset

CORPUS_MAGIC = b"RLAWALK\0"
CORPUS_VERSION = 1
_HEADER = struct.Struct("<8sIqqqqqq")


@dataclass(frozen=True)
class WalkConfig:
    walks_per_object: int = 10
    walk_length: int = 80
    window: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.walks_per_object < 1:
            raise ConfigError("walks_per_object must be >= 1")
        if self.walk_length < 2:
            raise ConfigError("walk_length must be >= 2")
        if not 1 <= self.window < self.walk_length:
            raise ConfigError("window must satisfy 1 <= window < walk_length")


@dataclass
class WalkCorpus:
    """Walks stored row-wise; every walk has the full configured length."""

    dataset_id: int
    walks: np.ndarray
    config: WalkConfig
    skipped_isolated: int = 0

    @property
    def num_walks(self) -> int:
        return int(self.walks.shape[0])

    def occurrence_counts(self, num_objects: int) -> np.ndarray:
        return np.bincount(self.walks.ravel(), minlength=num_objects)


def _start_uniforms(seed: int, starts: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    out = np.empty((starts.size, *shape))
    for i, n in enumerate(starts):
        out[i] = np.random.default_rng([seed, int(n)]).random(shape)
    return out


def generate_walks(ds: RelationalDataset, cfg: WalkConfig, *, threads: int = 1) -> WalkCorpus:
    """Run ``walks_per_object`` uniform random walks from every non-isolated object.

    Each start object draws its steps from its own stream seeded by
    ``(cfg.seed, object index)``, so the corpus does not depend on
    ``threads``. Walks are ordered by start object, then repetition.
    """
    starts = np.flatnonzero(~ds.isolated)
    r, steps = cfg.walks_per_object, cfg.walk_length - 1
    if threads <= 1 or starts.size < 2 * threads:
        u = _start_uniforms(cfg.seed, starts, (r, steps))
    else:
        chunks = np.array_split(starts, threads)
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda c: _start_uniforms(cfg.seed, c, (r, steps)), chunks))
        u = np.concatenate(parts)
    u = u.reshape(starts.size * r, steps)

    indptr, indices, deg = ds.indptr, ds.indices, ds.degrees
    walks = np.empty((starts.size * r, cfg.walk_length), dtype=np.int64)
    walks[:, 0] = np.repeat(starts, r)
    cur = walks[:, 0]
    for t in range(steps):
        # u in [0, 1) keeps the offset strictly below the degree
        cur = indices[indptr[cur] + (u[:, t] * deg[cur]).astype(np.int64)]
        walks[:, t + 1] = cur
    return WalkCorpus(ds.dataset_id, walks, cfg, skipped_isolated=int(ds.isolated.sum()))


def _offsets(window: int) -> np.ndarray:
    return np.concatenate([np.arange(-window, 0), np.arange(1, window + 1)])


def walk_pairs(walks: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs for a block of equal-length walks, ordered by walk, position, context position."""
    if window < 1:
        raise ConfigError("window must be >= 1")
    walks = np.asarray(walks)
    nw, length = walks.shape
    offs = _offsets(window)
    pos = np.arange(length)[:, None] + offs[None, :]
    valid = (pos >= 0) & (pos < length)
    t_idx, o_idx = np.nonzero(valid)
    ctx_pos = pos[t_idx, o_idx]
    centers = walks[:, t_idx].ravel()
    contexts = walks[:, ctx_pos].ravel()
    return centers, contexts


def extract_pairs(corpus: WalkCorpus, window: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """All (center, context) pairs as two index arrays."""
    window = corpus.config.window if window is None else window
    if corpus.num_walks == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy()
    return walk_pairs(corpus.walks, window)


def iter_pair_chunks(
    corpus: WalkCorpus, window: int, order: np.ndarray, walks_per_chunk: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Stream pairs a few walks at a time, visiting walks in ``order``."""
    for start in range(0, order.size, walks_per_chunk):
        yield walk_pairs(corpus.walks[order[start : start + walks_per_chunk]], window)


def pair_count(walk_lengths: np.ndarray | list[int], window: int) -> int:
    """Closed-form number of pairs emitted for walks of the given lengths."""
    total = 0
    for length in walk_lengths:
        t = np.arange(length)
        total += int(np.minimum(window, t).sum() + np.minimum(window, length - 1 - t).sum())
    return total


def save_corpus(corpus: WalkCorpus, path: str | Path) -> None:
    cfg = corpus.config
    header = _HEADER.pack(
        CORPUS_MAGIC, CORPUS_VERSION, corpus.dataset_id,
        cfg.walks_per_object, cfg.walk_length, cfg.window, cfg.seed, corpus.num_walks,
    )
    body = np.empty((corpus.num_walks, corpus.walks.shape[1] + 1), dtype="<u4")
    body[:, 0] = corpus.walks.shape[1]
    body[:, 1:] = corpus.walks
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())


def load_corpus(path: str | Path) -> WalkCorpus:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated corpus file")
    magic, version, did, wpo, length, window, seed, count = _HEADER.unpack_from(raw)
    if magic != CORPUS_MAGIC or version != CORPUS_VERSION:
        raise DataError(f"{path}: not a relalign corpus file")
    data = np.frombuffer(raw, dtype="<u4", offset=_HEADER.size)
    walks, pos = [], 0
    for _ in range(count):
        n = int(data[pos])
        walks.append(data[pos + 1 : pos + 1 + n])
        pos += n + 1
    if pos != data.size or len({w.size for w in walks}) > 1:
        raise DataError(f"{path}: corrupt corpus body")
    arr = np.array(walks, dtype=np.int64).reshape(count, -1 if count else length)
    return WalkCorpus(did, arr, WalkConfig(wpo, length, window, seed))

