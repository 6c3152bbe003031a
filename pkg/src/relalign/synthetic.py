"""Synthetic graphs for tests and benchmarks."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from relalign.graph import RelationalDataset, from_edges


def stochastic_block_model(
    sizes: Sequence[int],
    p_in: float,
    p_out: float,
    seed: int,
    *,
    prefix: str = "v",
    dataset_id: int = 1,
) -> tuple[RelationalDataset, np.ndarray]:
    """Sample an undirected SBM; returns the dataset and each object's block."""
    rng = np.random.default_rng(seed)
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    n = blocks.size
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(blocks[iu] == blocks[ju], p_in, p_out)
    hit = rng.random(iu.size) < prob
    edges = np.stack([iu[hit], ju[hit]], axis=1)
    labels = [f"{prefix}{i}" for i in range(n)]
    return from_edges(labels, edges, dataset_id=dataset_id), blocks


def cliques_with_bridge(size: int = 10) -> RelationalDataset:
    """Two disjoint ``size``-cliques joined by a single edge."""
    edges = []
    for base in (0, size):
        edges += [(base + i, base + j) for i in range(size) for j in range(i + 1, size)]
    edges.append((size - 1, size))
    return from_edges([f"c{i}" for i in range(2 * size)], edges)
