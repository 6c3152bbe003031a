"""Skip-gram embeddings of relational datasets trained with negative sampling."""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from relalign._kernels import alias_draw, sgns_grad
from relalign.errors import ConfigError, DataError, NumericError
from relalign.graph import RelationalDataset
from relalign.optim import AdamState, adam_step
from relalign.walks import WalkCorpus, iter_pair_chunks

logger = logging.getLogger(__name__)

EMB_MAGIC = b"RLAEMB\0\0"
EMB_VERSION = 1
_HEADER = struct.Struct("<8sIqqq")


@dataclass
class EmbeddingModel:
    """Context vectors ``U`` and center vectors ``H``, one row per object."""

    dataset_id: int
    U: np.ndarray
    H: np.ndarray

    def __post_init__(self) -> None:
        self.U = np.asarray(self.U, dtype=np.float64)
        self.H = np.asarray(self.H, dtype=np.float64)
        if self.U.ndim != 2 or self.U.shape != self.H.shape:
            raise ValueError(f"U and H must be equal-shaped matrices, got {self.U.shape} and {self.H.shape}")

    @property
    def num_objects(self) -> int:
        return self.U.shape[0]

    @property
    def dim(self) -> int:
        return self.U.shape[1]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.U).all() and np.isfinite(self.H).all())

    def vectors(self, role: str = "U") -> np.ndarray:
        if role == "U":
            return self.U
        if role == "H":
            return self.H
        if role == "U+H":
            return self.U + self.H
        raise ValueError(f"unknown vector role {role!r}")


@dataclass(frozen=True)
class SgnsConfig:
    dim: int = 50
    negatives_per_pair: int = 20
    batch_size: int = 4096
    learning_rate: float = 1e-2
    epochs: int = 1
    noise_exponent: float = 0.75
    init_scale: float | None = None  # half-width of the uniform init; None means 0.5 / dim
    seed: int = 0
    walks_per_chunk: int = 512

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.negatives_per_pair < 1:
            raise ConfigError("negatives_per_pair must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 0 <= self.noise_exponent <= 1:
            raise ConfigError("noise_exponent must lie in [0, 1]")
        if self.init_scale is not None and self.init_scale < 0:
            raise ConfigError("init_scale must be >= 0")

    @property
    def half_width(self) -> float:
        return 0.5 / self.dim if self.init_scale is None else self.init_scale


# -- exact softmax (test oracle) ---------------------------------------------


def neighbor_log_prob(model: EmbeddingModel, m: int, n: int) -> float:
    """Exact log-probability that object ``m`` is a neighbor of object ``n``."""
    logits = model.U @ model.H[n]
    top = logits.max()
    return float(logits[m] - top - np.log(np.exp(logits - top).sum()))


def exact_likelihood(
    model: EmbeddingModel,
    pairs: tuple[np.ndarray, np.ndarray] | Sequence[tuple[int, int]],
    *,
    max_objects: int = 10_000,
) -> float:
    """Sum of exact neighbor log-probabilities over (center, context) pairs."""
    if model.num_objects > max_objects:
        raise ValueError(f"{model.num_objects} objects exceeds the exact-likelihood guard of {max_objects}")
    centers, contexts = _as_pair_arrays(pairs)
    if centers.size == 0:
        return 0.0
    uniq, inv = np.unique(centers, return_inverse=True)
    logits = model.H[uniq] @ model.U.T
    top = logits.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
    return float((logits[inv, contexts] - lse[inv]).sum())


def _as_pair_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], np.ndarray):
        return np.asarray(pairs[0], dtype=np.int64), np.asarray(pairs[1], dtype=np.int64)
    arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


# -- negative sampling --------------------------------------------------------


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_sigmoid(z))


def _scatter_rows(idx: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    k = rows.shape[-1]
    flat = (idx[:, None] * k + np.arange(k)).ravel()
    return np.bincount(flat, weights=rows.ravel(), minlength=n * k).reshape(n, k)


def sgns_batch_grad(
    U: np.ndarray,
    H: np.ndarray,
    centers: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean negative-sampling objective of a batch and its gradient (ascent direction).

    ``negatives`` has shape ``(batch, negatives_per_pair)``.
    """
    b = centers.size
    negatives = negatives.reshape(b, -1)
    hc = H[centers]
    ux = U[contexts]
    un = U[negatives]
    pos = np.einsum("bd,bd->b", ux, hc)
    neg = np.einsum("bkd,bd->bk", un, hc)
    obj = (_log_sigmoid(pos).sum() + _log_sigmoid(-neg).sum()) / b
    gpos = _sigmoid(-pos) / b
    gneg = -_sigmoid(neg) / b
    n = U.shape[0]
    d_h = gpos[:, None] * ux + np.einsum("bk,bkd->bd", gneg, un)
    d_u = _scatter_rows(contexts, gpos[:, None] * hc, n)
    d_u += _scatter_rows(negatives.ravel(), (gneg[:, :, None] * hc[:, None, :]).reshape(-1, U.shape[1]), n)
    return float(obj), d_u, _scatter_rows(centers, d_h, n)


def sgns_batch_objective(
    model: EmbeddingModel,
    centers: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
) -> float:
    """Mean per-pair value of log s(u_x.h_c) + sum_j log s(-u_j.h_c)."""
    centers = np.asarray(centers, dtype=np.int64)
    contexts = np.asarray(contexts, dtype=np.int64)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(centers.size, -1)
    hc = model.H[centers]
    pos = np.einsum("bd,bd->b", model.U[contexts], hc)
    neg = np.einsum("bkd,bd->bk", model.U[negatives], hc)
    return float((_log_sigmoid(pos).sum() + _log_sigmoid(-neg).sum()) / centers.size)


class NoiseSampler:
    """Draws negatives with probability proportional to ``count ** exponent``.

    Sampling uses an alias table, so each draw costs one uniform. Objects are
    laid out in label order first, so draws follow the objects rather than
    their indices.
    """

    def __init__(self, counts: np.ndarray, exponent: float, labels: Sequence[str] | None = None):
        counts = np.asarray(counts, dtype=np.float64)
        if labels is None:
            self.order = np.arange(counts.size)
        else:
            self.order = np.argsort(np.asarray(labels, dtype=object), kind="stable")
        weights = np.zeros_like(counts)
        np.power(counts, exponent, where=counts > 0, out=weights)
        total = weights.sum()
        if total <= 0:
            raise DataError("noise distribution is empty")
        self.probs = weights / total
        self._prob, self._alias = _alias_table(self.probs[self.order])

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        shape = (size,) if isinstance(size, int) else tuple(size)
        u = rng.random(int(np.prod(shape)))
        return alias_draw(u, self._prob, self._alias, self.order).reshape(shape)


def _alias_table(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = p.size
    scaled = p * n
    prob = np.ones(n)
    alias = np.arange(n)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s, g = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] -= 1.0 - scaled[s]
        (small if scaled[g] < 1.0 else large).append(g)
    # leftovers are 1 up to rounding
    for i in small + large:
        prob[i] = 1.0
    return prob, alias


# -- training -----------------------------------------------------------------


def init_model(ds: RelationalDataset, cfg: SgnsConfig) -> EmbeddingModel:
    """Uniform init in ``[-half_width, half_width]``, rows assigned in label order."""
    rng = np.random.default_rng([cfg.seed, 0x1D17])
    order = np.argsort(np.asarray(ds.object_labels, dtype=object), kind="stable")
    a = cfg.half_width
    U = np.empty((ds.num_objects, cfg.dim))
    H = np.empty_like(U)
    U[order] = rng.uniform(-a, a, size=U.shape)
    H[order] = rng.uniform(-a, a, size=H.shape)
    return EmbeddingModel(ds.dataset_id, U, H)


def train_sgns(
    ds: RelationalDataset,
    corpus: WalkCorpus,
    cfg: SgnsConfig,
    *,
    threads: int = 1,
    init: EmbeddingModel | None = None,
) -> EmbeddingModel:
    """Fit U and H by Adam on the negative-sampling objective.

    With ``threads == 1`` the result is a deterministic function of the seed.
    With more threads, batches are processed concurrently, each worker with
    its own Adam state, writing to the shared matrices without locks.

    Raises:
        DataError: empty corpus or corpus from another dataset.
        NumericError: a parameter became non-finite.
    """
    if corpus.dataset_id != ds.dataset_id:
        raise DataError(f"corpus belongs to dataset {corpus.dataset_id}, not {ds.dataset_id}")
    if corpus.num_walks == 0:
        raise DataError("empty walk corpus")
    if corpus.walks.max() >= ds.num_objects:
        raise DataError("corpus references objects outside the dataset")

    model = init_model(ds, cfg) if init is None else EmbeddingModel(ds.dataset_id, init.U.copy(), init.H.copy())
    sampler = NoiseSampler(corpus.occurrence_counts(ds.num_objects), cfg.noise_exponent, ds.object_labels)
    rng = np.random.default_rng([cfg.seed, 0x5A9])
    U, H = model.U, model.H
    workers = max(1, threads)
    states = [(AdamState(U.shape, lr=cfg.learning_rate), AdamState(H.shape, lr=cfg.learning_rate)) for _ in range(workers)]
    window = corpus.config.window

    def run(worker: int, batches: list[tuple[np.ndarray, np.ndarray, np.ndarray]]) -> float:
        su, sh = states[worker]
        gu, gh = np.empty_like(U), np.empty_like(H)
        last = 0.0
        for i, (c, x, neg) in enumerate(batches):
            gu.fill(0.0)
            gh.fill(0.0)
            # the objective value is only logged, so compute it on one batch per call
            last = sgns_grad(U, H, c, x, neg, gu, gh, i == 0) or last
            # ascend the objective: Adam minimizes, so feed the negated gradient
            np.negative(gu, out=gu)
            np.negative(gh, out=gh)
            adam_step(su, U, gu)
            adam_step(sh, H, gh)
        return last / batches[0][0].size if batches else 0.0

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(corpus.num_walks)
            probes: list[float] = []
            for centers, contexts in iter_pair_chunks(corpus, window, order, cfg.walks_per_chunk):
                perm = rng.permutation(centers.size)
                centers, contexts = centers[perm], contexts[perm]
                negs = sampler.sample(rng, (centers.size, cfg.negatives_per_pair))
                batches = [
                    (centers[s : s + cfg.batch_size], contexts[s : s + cfg.batch_size], negs[s : s + cfg.batch_size])
                    for s in range(0, centers.size, cfg.batch_size)
                ]
                if pool is None:
                    probes.append(run(0, batches))
                else:
                    probes.extend(pool.map(run, range(workers), [batches[w::workers] for w in range(workers)]))
            if not model.is_finite():
                raise NumericError(f"non-finite embedding after epoch {epoch + 1}")
            logger.info("dataset %d epoch %d: sampled batch objective %.5f", ds.dataset_id, epoch + 1, float(np.mean(probes)))
    finally:
        if pool is not None:
            pool.shutdown()
    return model


# -- files ----------------------------------------------------------------------


def save_embedding(model: EmbeddingModel, path: str | Path) -> None:
    header = _HEADER.pack(EMB_MAGIC, EMB_VERSION, model.dataset_id, model.num_objects, model.dim)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(model.U, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.H, dtype="<f8").tobytes())


def load_embedding(path: str | Path) -> EmbeddingModel:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated embedding file")
    magic, version, did, n, k = _HEADER.unpack_from(raw)
    if magic != EMB_MAGIC or version != EMB_VERSION:
        raise DataError(f"{path}: not a relalign embedding file")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * n * k:
        raise DataError(f"{path}: expected {2 * n * k} values, found {body.size}")
    return EmbeddingModel(did, body[: n * k].reshape(n, k).copy(), body[n * k :].reshape(n, k).copy())


def export_tsv(model: EmbeddingModel, labels: Sequence[str], path: str | Path, *, role: str = "U", W: np.ndarray | None = None) -> None:
    """Write ``label<TAB>v1<TAB>...<TAB>vK`` rows, optionally after projecting by ``W``."""
    vecs = model.vectors(role)
    if W is not None:
        vecs = vecs @ W.T
    with open(path, "w", encoding="utf-8") as fh:
        for lab, row in zip(labels, vecs):
            fh.write(lab + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")
