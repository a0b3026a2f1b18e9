"""Base-station queries, recovery metrics and node-count estimation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import round_half_up


class InfeasibleQuery(ValueError):
    """The requested number of queried nodes cannot be served."""


@dataclass(frozen=True)
class QueryResult:
    queried_ids: tuple[int, ...]
    recovered_sources: frozenset[int]
    required_sources: frozenset[int]
    n_hat: int
    eta: float

    @property
    def full_recovery(self) -> bool:
        return self.required_sources <= self.recovered_sources


def query(state, n_hat: int, rng: np.random.Generator, *, require_dead_sources: bool = False) -> QueryResult:
    """Query ``n_hat`` alive nodes drawn uniformly without replacement.

    Each queried node reveals its buffered sources plus its own reading.
    Success is judged against the sources that sensed during the current
    period; with ``require_dead_sources`` every one of the ``n`` deployed
    sources is required instead.
    """
    alive = [node for node in state.nodes if node.alive]
    if n_hat < 1 or n_hat > len(alive):
        raise InfeasibleQuery(f"cannot query {n_hat} nodes with {len(alive)} alive")
    picks = rng.choice(len(alive), size=n_hat, replace=False)
    chosen = sorted(alive[i].id for i in picks)
    recovered: set[int] = set()
    for node_id in chosen:
        node = state.nodes[node_id - 1]
        recovered.update(node.buffer)
        if node.originated_round > 0:
            recovered.add(node_id)
    n = state.config.n
    if require_dead_sources:
        required = frozenset(range(1, n + 1))
    else:
        current = state.sensing_round
        required = frozenset(node.id for node in state.nodes if node.originated_round == current)
    return QueryResult(tuple(chosen), frozenset(recovered), required, n_hat, n_hat / n)


def coverage_fraction(result: QueryResult, n: int) -> float:
    return len(result.recovered_sources) / n


def estimate_n(result: QueryResult, previous: int | None = None) -> int:
    """Take the number of distinct recovered sources as the node count.

    An empty recovery keeps ``previous`` (callers log that as a degenerate
    network event).
    """
    found = len(result.recovered_sources)
    if found == 0:
        if previous is None:
            raise ValueError("nothing recovered and no previous estimate")
        return previous
    return found


def successful_decoding_probability(config, algorithm: str, eta: float, trials: int, seed: int,
                                    *, periods: int = 1, require_dead_sources: bool = False,
                                    **sim_options) -> float:
    """Fraction of independent simulated deployments fully recovered by one query.

    Every trial deploys a fresh network, runs ``periods`` periods, then
    queries ``round(eta * n)`` alive nodes (at least 1 and at most the alive
    count).
    """
    from .protocol import Simulation

    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    seeds = np.random.SeedSequence(seed).spawn(trials)
    hits = 0
    for ss in seeds:
        sim_seed, query_seed = ss.generate_state(2, dtype=np.uint64)
        sim = Simulation.create(config, algorithm, int(sim_seed), **sim_options)
        sim.run(periods)
        alive = sim.state.alive_count
        if alive == 0:
            continue
        n_hat = min(max(1, round_half_up(eta * config.n)), alive)
        result = query(sim.state, n_hat, np.random.default_rng(int(query_seed)),
                       require_dead_sources=require_dead_sources)
        hits += result.full_recovery
    return hits / trials
