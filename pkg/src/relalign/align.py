"""Projection matrices that bring per-dataset embeddings into a common space.

The objective for free matrices W_2..W_D (W_1 is the identity) is

    sum_d ||W_d^T W_d - I||_F^2
      + lam * sum_{d < d'} [MMD^2(U_d W_d^T, U_d' W_d'^T) + MMD^2(H_d W_d^T, H_d' W_d'^T)]
"""

from __future__ import annotations

import csv
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from relalign.embedding import EmbeddingModel
from relalign.errors import ConfigError, DataError, NumericError
from relalign.mmd import KernelConfig, mmd_sq, mmd_sq_with_grad, subsample_rows
from relalign.optim import AdamState, adam_step

logger = logging.getLogger(__name__)

PROJ_MAGIC = b"RLAPROJ\0"
PROJ_VERSION = 1
_HEADER = struct.Struct("<8sIqq")


@dataclass(frozen=True)
class AlignConfig:
    lam: float = 100.0
    steps: int = 3000
    learning_rate: float = 1e-2
    restarts: int = 10
    sample_size: int = 512
    kernel: KernelConfig = field(default_factory=KernelConfig)
    seed: int = 0
    exact_eval_max_rows: int = 5000
    eval_sample_size: int = 4096
    eval_seed: int = 12345
    checkpoint_every: int = 100

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.sample_size < 2:
            raise ConfigError("sample_size must be >= 2")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")


class ProjectionSet:
    """One K x K matrix per dataset; the first is a read-only identity."""

    def __init__(self, dim: int, free: Sequence[np.ndarray] = ()):
        identity = np.eye(dim)
        identity.setflags(write=False)
        self.dim = dim
        self.matrices: list[np.ndarray] = [identity]
        for W in free:
            W = np.array(W, dtype=np.float64)
            if W.shape != (dim, dim):
                raise ValueError(f"projection must be {dim}x{dim}, got {W.shape}")
            self.matrices.append(W)

    def __len__(self) -> int:
        return len(self.matrices)

    def __getitem__(self, d: int) -> np.ndarray:
        return self.matrices[d]

    @property
    def free(self) -> list[np.ndarray]:
        return self.matrices[1:]

    def copy(self) -> "ProjectionSet":
        return ProjectionSet(self.dim, [W.copy() for W in self.free])

    def is_finite(self) -> bool:
        return all(np.isfinite(W).all() for W in self.matrices)


def apply_projection(W: np.ndarray, V) -> np.ndarray:
    """Map every row v of V to W v."""
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    if W.shape != (V.shape[1], V.shape[1]):
        raise ValueError(f"projection {W.shape} does not act on {V.shape[1]}-dim vectors")
    return V @ W.T


def orthogonality_penalty(W: np.ndarray) -> float:
    """Squared Frobenius norm of W^T W - I."""
    R = W.T @ W - np.eye(W.shape[1])
    return float((R * R).sum())


def orthogonality_grad(W: np.ndarray) -> np.ndarray:
    return 4.0 * W @ (W.T @ W - np.eye(W.shape[1]))


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR of a Gaussian matrix."""
    Q, R = np.linalg.qr(rng.standard_normal((dim, dim)))
    return Q * np.sign(np.diag(R))


def _check_models(models: Sequence[EmbeddingModel], P: ProjectionSet | None = None) -> int:
    if len(models) < 2:
        raise DataError("alignment needs at least two embedding models")
    dims = {m.dim for m in models}
    if len(dims) != 1:
        raise DataError(f"embedding dimensions differ across datasets: {sorted(dims)}")
    if P is not None and (len(P) != len(models) or P.dim != models[0].dim):
        raise DataError("projection set does not match the models")
    return dims.pop()


def _sample_sets(models, sample_size, rng):
    Us, Hs = [], []
    for m in models:
        idx = subsample_rows(m.num_objects, sample_size, rng)
        Us.append(m.U if idx is None else m.U[idx])
        Hs.append(m.H if idx is None else m.H[idx])
    return Us, Hs


def _objective(Ws, Us, Hs, lam, kernel, need_grad):
    D = len(Ws)
    loss = sum(orthogonality_penalty(W) for W in Ws[1:])
    grads = [orthogonality_grad(W) for W in Ws] if need_grad else None
    if lam == 0:
        return loss, grads
    for sets in (Us, Hs):
        proj = [X @ W.T for X, W in zip(sets, Ws)]
        for d in range(D):
            for e in range(d + 1, D):
                if need_grad:
                    v, gd, ge = mmd_sq_with_grad(proj[d], proj[e], kernel)
                    # rows x~ = W x, so dL/dW = G^T X
                    grads[d] += lam * (gd.T @ sets[d])
                    grads[e] += lam * (ge.T @ sets[e])
                else:
                    v = mmd_sq(proj[d], proj[e], kernel)
                loss += lam * v
    return float(loss), grads


def _sets_for(models, cfg: AlignConfig, exact: bool, seed):
    if exact:
        return [m.U for m in models], [m.H for m in models]
    return _sample_sets(models, cfg.sample_size, np.random.default_rng(seed))


def alignment_loss(
    P: ProjectionSet,
    models: Sequence[EmbeddingModel],
    cfg: AlignConfig,
    exact: bool = True,
    seed: int | Sequence[int] | None = 0,
) -> float:
    """Orthogonality penalties plus lam-weighted pairwise MMD^2 of projected U and H.

    With ``exact=False`` each dataset is subsampled to ``cfg.sample_size`` rows
    using ``seed``; the same seed selects the same rows in :func:`alignment_grad`.
    """
    _check_models(models, P)
    Us, Hs = _sets_for(models, cfg, exact, seed)
    loss, _ = _objective(P.matrices, Us, Hs, cfg.lam, cfg.kernel, False)
    return loss


def alignment_grad(
    P: ProjectionSet,
    models: Sequence[EmbeddingModel],
    cfg: AlignConfig,
    seed: int | Sequence[int] | None = 0,
    exact: bool = False,
) -> list[np.ndarray]:
    """Gradient of the (subsampled) loss for W_2..W_D."""
    _check_models(models, P)
    Us, Hs = _sets_for(models, cfg, exact, seed)
    _, grads = _objective(P.matrices, Us, Hs, cfg.lam, cfg.kernel, True)
    return grads[1:]


def evaluation_loss(P: ProjectionSet, models: Sequence[EmbeddingModel], cfg: AlignConfig) -> float:
    """Loss used to pick among restarts: exact for small sets, else a fixed large subsample."""
    if max(m.num_objects for m in models) <= cfg.exact_eval_max_rows:
        return alignment_loss(P, models, cfg, exact=True)
    Us, Hs = _sample_sets(models, cfg.eval_sample_size, np.random.default_rng(cfg.eval_seed))
    return _objective(P.matrices, Us, Hs, cfg.lam, cfg.kernel, False)[0]


@dataclass
class RestartResult:
    restart: int
    init_loss: float
    final_loss: float
    loss: float
    best_step: int
    projections: ProjectionSet
    trace: list[float]

    @property
    def kept_init(self) -> bool:
        return self.best_step == 0


@dataclass
class AlignReport:
    restarts: list[RestartResult]
    best: int

    @property
    def init_losses(self) -> list[float]:
        return [r.init_loss for r in self.restarts]

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.restarts]

    def orthogonality(self) -> list[float]:
        """||W_d^T W_d - I||_F of the selected solution, per dataset."""
        return [float(np.sqrt(orthogonality_penalty(W))) for W in self.restarts[self.best].projections.matrices]


def _run_restart(models, cfg: AlignConfig, r: int, dim: int, init: Sequence[np.ndarray] | None) -> RestartResult:
    D = len(models)
    if init is None:
        free = [random_orthogonal(dim, np.random.default_rng([cfg.seed, r, d])) for d in range(1, D)]
    else:
        free = [np.array(W, dtype=np.float64) for W in init]
    P = ProjectionSet(dim, free)
    init_loss = evaluation_loss(P, models, cfg)
    # constant-rate Adam can drift away from a minimum it already reached,
    # so the restart keeps the best evaluated checkpoint (init included)
    best, best_loss, best_step = P.copy(), init_loss, 0
    states = [AdamState((dim, dim), lr=cfg.learning_rate) for _ in range(D - 1)]
    rng = np.random.default_rng([cfg.seed, r, 0xA11])
    trace: list[float] = []
    final_loss = init_loss
    for step in range(1, cfg.steps + 1):
        Us, Hs = _sample_sets(models, cfg.sample_size, rng)
        loss, grads = _objective(P.matrices, Us, Hs, cfg.lam, cfg.kernel, True)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite alignment loss in restart {r}")
        trace.append(loss)
        for W, g, st in zip(P.free, grads[1:], states):
            adam_step(st, W, g)
        if step == cfg.steps or (cfg.checkpoint_every and step % cfg.checkpoint_every == 0):
            current = evaluation_loss(P, models, cfg)
            if not np.isfinite(current):
                raise NumericError(f"non-finite alignment loss in restart {r}")
            if current < best_loss:
                best, best_loss, best_step = P.copy(), current, step
            final_loss = current
    return RestartResult(r, init_loss, final_loss, best_loss, best_step, best, trace)


def estimate_projections(
    models: Sequence[EmbeddingModel],
    cfg: AlignConfig,
    *,
    threads: int = 1,
    init: Sequence[np.ndarray] | None = None,
) -> tuple[ProjectionSet, AlignReport]:
    """Minimize the alignment loss from ``cfg.restarts`` random orthogonal starts.

    Each restart runs ``cfg.steps`` Adam steps on freshly subsampled losses and
    is scored with :func:`evaluation_loss` at its start, every
    ``cfg.checkpoint_every`` steps and at the end. Each restart keeps its best
    checkpoint and the lowest-scoring restart wins.
    ``init`` overrides the random start (same matrices for every restart).
    """
    dim = _check_models(models)
    if init is not None and len(init) != len(models) - 1:
        raise ValueError("init must hold one matrix per free dataset")
    restarts = range(cfg.restarts)
    if threads > 1 and cfg.restarts > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda r: _run_restart(models, cfg, r, dim, init), restarts))
    else:
        results = [_run_restart(models, cfg, r, dim, init) for r in restarts]
    best = min(range(len(results)), key=lambda i: (results[i].loss, i))
    for res in results:
        logger.info(
            "restart %d: init %.6g, final %.6g, best %.6g at step %d",
            res.restart, res.init_loss, res.final_loss, res.loss, res.best_step,
        )
    return results[best].projections.copy(), AlignReport(results, best)


# -- files ----------------------------------------------------------------------


def save_projections(P: ProjectionSet, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(PROJ_MAGIC, PROJ_VERSION, len(P), P.dim))
        for W in P.matrices:
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())


def load_projections(path: str | Path) -> ProjectionSet:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated projection file")
    magic, version, D, K = _HEADER.unpack_from(raw)
    if magic != PROJ_MAGIC or version != PROJ_VERSION:
        raise DataError(f"{path}: not a relalign projection file")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != D * K * K:
        raise DataError(f"{path}: expected {D * K * K} values, found {body.size}")
    mats = body.reshape(D, K, K)
    if not np.array_equal(mats[0], np.eye(K)):
        raise DataError(f"{path}: first projection is not the identity")
    return ProjectionSet(int(K), [m.copy() for m in mats[1:]])


def write_loss_trace(report: AlignReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["restart", "step", "loss"])
        for res in report.restarts:
            for step, loss in enumerate(res.trace, 1):
                w.writerow([res.restart, step, repr(loss)])
