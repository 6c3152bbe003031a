"""Adam, shared by embedding training and projection estimation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Moment accumulators for one parameter array."""

    shape: tuple[int, ...]
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    skipped: int = 0
    m: np.ndarray = field(init=False, repr=False)
    v: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.shape = tuple(self.shape)
        self.m = np.zeros(self.shape)
        self.v = np.zeros(self.shape)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> None:
    """Apply one bias-corrected Adam update to ``params`` in place.

    A gradient containing NaN or inf is logged and skipped; the step counter
    is not advanced and ``state.skipped`` is incremented.
    """
    if params.shape != state.shape or grads.shape != state.shape:
        raise ValueError(f"shape mismatch: state {state.shape}, params {params.shape}, grads {grads.shape}")
    if not np.isfinite(grads).all():
        state.skipped += 1
        logger.warning("non-finite gradient at step %d; update skipped", state.t + 1)
        return
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * (grads * grads)
    step = state.lr / (1.0 - b1**state.t)
    denom = np.sqrt(state.v / (1.0 - b2**state.t))
    denom += state.eps
    params -= step * state.m / denom
