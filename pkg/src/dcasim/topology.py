"""Random uniform deployments and the disk-model neighbor graph.

Node indices in this module are 0-based positions in the coordinate array.
The protocol layer maps index ``i`` to node ID ``i + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
from scipy.spatial import cKDTree

from .config import NetworkConfig

DEFAULT_MAX_RETRIES = 100


class TopologyError(RuntimeError):
    """No isolation-free deployment was drawn within the retry budget."""


@dataclass(frozen=True)
class AdjacencyGraph:
    neighbors: tuple[tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return len(self.neighbors)

    @property
    def degrees(self) -> np.ndarray:
        return np.fromiter((len(nb) for nb in self.neighbors), dtype=np.int64, count=self.n)

    @property
    def edge_count(self) -> int:
        return int(self.degrees.sum()) // 2

    def is_symmetric(self) -> bool:
        sets = [set(nb) for nb in self.neighbors]
        return all(i in sets[j] for i, nb in enumerate(self.neighbors) for j in nb)


def place_nodes(config: NetworkConfig, seed: int | np.random.Generator, n: int | None = None) -> np.ndarray:
    """Draw ``config.n`` (or ``n``) positions uniformly on [0, L] x [0, W].

    Returns an ``(n, 2)`` array of ``(x, y)`` rows. Passing an integer seed
    makes the draw reproducible; a Generator is consumed in place.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    count = config.n if n is None else n
    xs = rng.uniform(0.0, config.L, size=count)
    ys = rng.uniform(0.0, config.W, size=count)
    return np.column_stack([xs, ys])


def build_graph(positions: Sequence[Sequence[float]] | np.ndarray, r: float) -> AdjacencyGraph:
    """Disk graph: ``i`` and ``j`` are neighbors iff their distance is <= r."""
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("positions must be nonempty")
    if r <= 0:
        raise ValueError("r must be positive")
    # Inflated search radius gathers candidates; the exact test below decides.
    pairs = cKDTree(pts).query_pairs(r * (1 + 1e-9) + 1e-12, output_type="ndarray")
    lists: list[list[int]] = [[] for _ in range(len(pts))]
    if len(pairs):
        d = np.hypot(pts[pairs[:, 0], 0] - pts[pairs[:, 1], 0], pts[pairs[:, 0], 1] - pts[pairs[:, 1], 1])
        for i, j in pairs[d <= r]:
            lists[i].append(int(j))
            lists[j].append(int(i))
    return AdjacencyGraph(tuple(tuple(sorted(nb)) for nb in lists))


def mean_degree(graph: AdjacencyGraph) -> float:
    if graph.n == 0:
        raise ValueError("graph must be nonempty")
    return float(graph.degrees.sum()) / graph.n


def has_isolated_nodes(graph: AdjacencyGraph) -> bool:
    return any(len(nb) == 0 for nb in graph.neighbors)


def deploy(
    config: NetworkConfig,
    rng: np.random.Generator,
    *,
    allow_isolated: bool = False,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> tuple[np.ndarray, AdjacencyGraph]:
    """Place nodes and build their graph, resampling deployments with isolated nodes.

    With ``allow_isolated=False`` up to ``max_retries`` deployments are drawn
    from ``rng``; if all of them contain an isolated node a TopologyError is
    raised. Sparse fields (small n for the given r and area) practically
    never pass, so experiment drivers expose the switch.
    """
    attempts = 1 if allow_isolated else max(1, max_retries)
    for _ in range(attempts):
        positions = place_nodes(config, rng)
        graph = build_graph(positions, config.r)
        if allow_isolated or not has_isolated_nodes(graph):
            return positions, graph
    raise TopologyError(
        f"no deployment without isolated nodes in {attempts} attempts "
        f"(n={config.n}, r={config.r}, area={config.L}x{config.W})"
    )


def write_graph(positions: np.ndarray, graph: AdjacencyGraph, fh: TextIO) -> None:
    """Dump ``node_id,x,y,degree,neighbor_ids`` lines, neighbor IDs joined by ';'."""
    for i, nb in enumerate(graph.neighbors):
        ids = ";".join(str(j + 1) for j in nb)
        fh.write(f"{i + 1},{float(positions[i, 0])!r},{float(positions[i, 1])!r},{len(nb)},{ids}\n")
