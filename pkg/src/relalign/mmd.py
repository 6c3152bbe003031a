"""Gaussian-kernel maximum mean discrepancy between sets of vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from relalign.errors import ConfigError

# rounding slack tolerated below zero before clamping
_NEGATIVE_SLACK = 1e-12


@dataclass(frozen=True)
class KernelConfig:
    """k(x, y) = exp(-gamma * ||x - y||^2)."""

    gamma: float = 0.5
    kind: str = "gaussian"

    def __post_init__(self) -> None:
        if self.kind != "gaussian":
            raise ConfigError(f"unsupported kernel {self.kind!r}")
        if not self.gamma > 0:
            raise ConfigError("kernel gamma must be > 0")


@dataclass
class VectorSet:
    """Rows of a matrix plus where they came from, e.g. ``(2, "U")``."""

    data: np.ndarray
    tag: tuple[int, str] | None = None

    def __post_init__(self) -> None:
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if self.data.shape[0] < 1:
            raise ValueError("a vector set needs at least one row")

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __len__(self) -> int:
        return self.data.shape[0]


def _rows(X) -> np.ndarray:
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def _check(X: np.ndarray, Y: np.ndarray) -> None:
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")


def kernel_eval(k: KernelConfig, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return float(np.exp(-k.gamma * d.dot(d)))


def sq_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * (X @ Y.T)
    return np.maximum(d, 0.0, out=d)


def kernel_matrix(X, Y, k: KernelConfig) -> np.ndarray:
    X, Y = _rows(X), _rows(Y)
    _check(X, Y)
    return np.exp(-k.gamma * sq_distances(X, Y))


def mean_embedding_inner(X, Y, k: KernelConfig) -> float:
    """Inner product of the empirical kernel mean embeddings of X and Y."""
    return float(kernel_matrix(X, Y, k).mean())


def mmd_sq(X, Y, k: KernelConfig) -> float:
    """Squared MMD (V-statistic, self-pairs included)."""
    X, Y = _rows(X), _rows(Y)
    _check(X, Y)
    value = mean_embedding_inner(X, X, k) + mean_embedding_inner(Y, Y, k) - 2.0 * mean_embedding_inner(X, Y, k)
    if -_NEGATIVE_SLACK < value < 0.0:
        return 0.0
    return value


def subsample_rows(n: int, sample_size: int, rng: np.random.Generator) -> np.ndarray | None:
    """Row indices drawn without replacement, or None when all rows are kept."""
    if sample_size >= n:
        return None
    return np.sort(rng.choice(n, size=sample_size, replace=False))


def mmd_sq_subsampled(X, Y, k: KernelConfig, sample_size: int = 512, seed: int | np.random.Generator = 0) -> float:
    """Squared MMD on random row subsets of at most ``sample_size`` rows each."""
    if sample_size < 2:
        raise ValueError("sample_size must be >= 2")
    X, Y = _rows(X), _rows(Y)
    rng = np.random.default_rng(seed)
    ix = subsample_rows(X.shape[0], sample_size, rng)
    iy = subsample_rows(Y.shape[0], sample_size, rng)
    return mmd_sq(X if ix is None else X[ix], Y if iy is None else Y[iy], k)


def mmd_sq_with_grad(X: np.ndarray, Y: np.ndarray, k: KernelConfig) -> tuple[float, np.ndarray, np.ndarray]:
    """Squared MMD and its gradient with respect to every row of X and of Y.

    No clamping is applied, so the value is the smooth function being
    differentiated.
    """
    X, Y = _rows(X), _rows(Y)
    _check(X, Y)
    n, m = X.shape[0], Y.shape[0]
    g2 = -2.0 * k.gamma
    Kxx = kernel_matrix(X, X, k)
    Kyy = kernel_matrix(Y, Y, k)
    Kxy = kernel_matrix(X, Y, k)
    value = Kxx.mean() + Kyy.mean() - 2.0 * Kxy.mean()
    # d/dx_i exp(-g||x_i - z||^2) = -2g k (x_i - z)
    gX = (2.0 * g2 / n**2) * (X * Kxx.sum(1)[:, None] - Kxx @ X)
    gX -= (2.0 * g2 / (n * m)) * (X * Kxy.sum(1)[:, None] - Kxy @ Y)
    gY = (2.0 * g2 / m**2) * (Y * Kyy.sum(1)[:, None] - Kyy @ Y)
    gY -= (2.0 * g2 / (n * m)) * (Y * Kxy.sum(0)[:, None] - Kxy.T @ X)
    return float(value), gX, gY
