"""Slotted-time PHDCA / RHDCA dissemination.

Time is split into periods of ``epsilon`` slots. Every period starts with a
sensing round in which each alive node broadcasts a fresh reading to its
neighbors. In every slot a set of head nodes swaps buffer contents with
adjacent heads. Heads rotate each slot:

* ``phdca`` walks consecutive ID slices, so the schedule repeats each period;
* ``rhdca`` draws ``k`` alive nodes uniformly at random every slot.

At the end of each period the base station estimates the node count from a
10% query and the estimate drives the next period's head arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, TextIO

import numpy as np

from . import collection
from .config import NetworkConfig, round_half_up
from .energy import EnergyLedger, charge, death_rate, rx_cost, tx_cost
from .topology import DEFAULT_MAX_RETRIES, AdjacencyGraph, build_graph, deploy, mean_degree

ALGORITHMS = ("phdca", "rhdca")

FLOOD = 0
DATA = 1


class Packet(NamedTuple):
    source_id: int
    datum: float
    flag: int = DATA


@dataclass(slots=True)
class NodeState:
    id: int
    energy: float
    alive: bool = True
    is_head: bool = False
    buffer: dict = field(default_factory=dict)
    neighbor_table: tuple[int, ...] = ()
    own_packet: Packet | None = None
    originated_round: int = 0


@dataclass
class Clock:
    slots_per_period: int
    slot: int = 1
    period_index: int = 0

    def tick(self) -> bool:
        """Advance one slot; True when the period wrapped."""
        if self.slot < self.slots_per_period:
            self.slot += 1
            return False
        self.slot = 1
        self.period_index += 1
        return True


@dataclass(frozen=True)
class HeadSet:
    ids: tuple[int, ...]
    degenerate: bool = False

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __contains__(self, node_id):
        return node_id in self.ids


class EventTrace:
    """Writes ``period,slot,event_type,node_id,peer_id,buffer_size,energy_j`` lines."""

    def __init__(self, fh: TextIO):
        self.fh = fh

    def __call__(self, period, slot, event, node_id, peer_id="", buffer_size="", energy=""):
        if energy != "":
            energy = repr(float(energy))
        self.fh.write(f"{period},{slot},{event},{node_id},{peer_id},{buffer_size},{energy}\n")


def _fraction(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10**6)


def phdca_slice(slot: int, n_est: int, head_fraction: float) -> range:
    """IDs ``u`` with ``f*n_est*(t-1) < u <= f*n_est*t`` for slot ``t``."""
    step = _fraction(head_fraction) * n_est
    lo = math.floor(step * (slot - 1)) + 1
    hi = math.floor(step * slot)
    return range(lo, hi + 1)


def select_heads_phdca(clock: Clock | int, n_est: int, head_fraction: float,
                       alive: Callable[[int], bool] | None = None, n_max: int | None = None) -> HeadSet:
    """Pre-known head slice for the clock's slot.

    Dead IDs inside the slice lose head duty but the slice itself never
    shifts. An empty result is flagged ``degenerate``.
    """
    slot = clock.slot if isinstance(clock, Clock) else clock
    ids = phdca_slice(slot, n_est, head_fraction)
    if n_max is not None:
        ids = range(ids.start, min(ids.stop, n_max + 1))
    chosen = tuple(u for u in ids if alive is None or alive(u))
    return HeadSet(chosen, degenerate=not chosen)


def select_heads_rhdca(alive_ids, k: int, rng: np.random.Generator) -> HeadSet:
    """Uniform sample of ``min(k, len(alive_ids))`` distinct alive IDs."""
    alive_ids = list(alive_ids)
    if not alive_ids:
        raise ValueError("alive_ids must be nonempty")
    size = min(k, len(alive_ids))
    picks = rng.choice(len(alive_ids), size=size, replace=False)
    return HeadSet(tuple(sorted(alive_ids[i] for i in picks)))


def buffer_insert(node: NodeState, packet: Packet, capacity: int) -> None:
    """Insert with same-source replacement and FIFO eviction.

    A packet from an already buffered source replaces the old one and counts
    as the newest entry. Otherwise a full buffer drops its oldest entry.
    """
    buf = node.buffer
    if packet.source_id in buf:
        del buf[packet.source_id]
    elif len(buf) >= capacity:
        del buf[next(iter(buf))]
    buf[packet.source_id] = packet


@dataclass
class PeriodStats:
    """Per-period measurements used for records and the E_h prediction."""

    period: int
    alive_at_start: int
    alive_mask: np.ndarray
    degrees: np.ndarray
    mean_degree: float
    head_counts: list = field(default_factory=list)
    alpha_sum: np.ndarray | None = None
    head_slots: np.ndarray | None = None
    head_neighbors_as_head: np.ndarray | None = None
    head_neighbors_all: np.ndarray | None = None
    sensing_energy: float = 0.0
    dissemination_energy: float = 0.0


@dataclass
class SimulationState:
    config: NetworkConfig
    algorithm: str
    positions: np.ndarray
    graph: AdjacencyGraph
    nodes: list[NodeState]
    clock: Clock
    ledger: EnergyLedger
    rng: np.random.Generator
    collection_rng: np.random.Generator
    n_est: int
    p_t: float
    p_r: float
    heads: HeadSet = HeadSet(())
    pushdown: bool = False
    estimate_n: bool = True
    estimate_fraction: float = 0.1
    estimate_basis: str = "previous"
    sensing_round: int = 0
    trace: Callable | None = None
    events: list = field(default_factory=list)
    estimate_history: list = field(default_factory=list)
    stats: PeriodStats | None = None

    @property
    def alive_count(self) -> int:
        return sum(1 for node in self.nodes if node.alive)

    def alive_ids(self) -> list[int]:
        return [node.id for node in self.nodes if node.alive]

    @property
    def k(self) -> int:
        return max(1, round_half_up(self.config.head_fraction * self.n_est))

    def node(self, node_id: int) -> NodeState:
        return self.nodes[node_id - 1]

    def _when(self) -> tuple[int, int]:
        return (self.clock.period_index + 1, self.clock.slot)

    def _log(self, event, node_id, peer_id="", node=None):
        if self.trace is not None:
            node = node if node is not None else self.nodes[node_id - 1]
            period, slot = self._when()
            self.trace(period, slot, event, node_id, peer_id, len(node.buffer), node.energy)


def _spend(state: SimulationState, node: NodeState, amount: float, phase: str, direction: str) -> None:
    was_alive = node.alive
    charge(node, amount, state.ledger, phase=phase, direction=direction, when=state._when())
    if was_alive and not node.alive:
        if node.is_head:
            node.is_head = False
            state.heads = HeadSet(tuple(h for h in state.heads if h != node.id), state.heads.degenerate)
        state._log("death", node.id, node=node)


def flood_ids(state: SimulationState, charge_energy: bool = True) -> SimulationState:
    """Every node broadcasts its ID once; receivers record the sender as a neighbor.

    Flooding packets (flag 0) only populate neighbor tables, never buffers.
    """
    for node in state.nodes:
        node.neighbor_table = tuple(j + 1 for j in state.graph.neighbors[node.id - 1])
    if charge_energy:
        for node in state.nodes:
            if not node.alive:
                continue
            _spend(state, node, state.p_t, "flood", "tx")
            state._log("flood_tx", node.id, node=node)
            for peer_id in node.neighbor_table:
                peer = state.nodes[peer_id - 1]
                if peer.alive:
                    _spend(state, peer, state.p_r, "flood", "rx")
    return state


def sense_and_broadcast(state: SimulationState, rng: np.random.Generator | None = None) -> SimulationState:
    """One sensing round: each alive node broadcasts a fresh reading to all alive neighbors."""
    rng = rng if rng is not None else state.rng
    state.sensing_round += 1
    cap = state.config.buffer_capacity
    readings = rng.random(len(state.nodes))
    for node in state.nodes:
        if not node.alive:
            continue
        packet = Packet(node.id, float(readings[node.id - 1]), DATA)
        node.own_packet = packet
        node.originated_round = state.sensing_round
        _spend(state, node, state.p_t, "sense", "tx")
        state._log("sense_tx", node.id, node=node)
        for peer_id in node.neighbor_table:
            peer = state.nodes[peer_id - 1]
            if peer.alive:
                _spend(state, peer, state.p_r, "sense", "rx")
                buffer_insert(peer, packet, cap)
    return state


def _broadcast_batches(state: SimulationState, heads: HeadSet, phase: str,
                       receivers: Callable[[NodeState], list[NodeState]], alpha: np.ndarray | None) -> None:
    cap = state.config.buffer_capacity
    batches = {h: list(state.nodes[h - 1].buffer.values()) for h in heads}
    for h in heads:
        sender = state.nodes[h - 1]
        if not sender.alive:
            continue
        peers = receivers(sender)
        batch = batches[h]
        if not peers or not batch:
            continue
        b = len(batch)
        _spend(state, sender, b * state.p_t, phase, "tx")
        if alpha is not None:
            alpha[h - 1] += b
        for peer in peers:
            if not peer.alive:
                continue
            _spend(state, peer, b * state.p_r, phase, "rx")
            # Inlined buffer_insert: this merge is the simulator's hot loop.
            buf, own = peer.buffer, peer.id
            for packet in batch:
                sid = packet.source_id
                if sid == own:
                    continue
                if sid in buf:
                    del buf[sid]
                elif len(buf) >= cap:
                    del buf[next(iter(buf))]
                buf[sid] = packet
            state._log(f"{phase}_rx", peer.id, h, node=peer)
        state._log(f"{phase}_tx", h, node=sender)


def _adjacent_heads(state: SimulationState, node: NodeState) -> list[NodeState]:
    return [p for p in (state.nodes[j - 1] for j in node.neighbor_table) if p.alive and p.is_head]


def _alive_neighbors(state: SimulationState, node: NodeState) -> list[NodeState]:
    return [p for p in (state.nodes[j - 1] for j in node.neighbor_table) if p.alive]


def head_exchange(state: SimulationState, heads: HeadSet | None = None) -> SimulationState:
    """Adjacent heads swap buffer snapshots taken at the start of the slot.

    Each head with an alive neighboring head sends its whole buffer once;
    cost is per packet for the sender and for every receiving head.
    """
    heads = heads if heads is not None else state.heads
    alpha = state.stats.alpha_sum if state.stats is not None else None
    _broadcast_batches(state, heads, "exchange", lambda n: _adjacent_heads(state, n), alpha)
    return state


def head_pushdown(state: SimulationState, heads: HeadSet | None = None) -> SimulationState:
    """Optional diffusion step: heads rebroadcast merged buffers to all neighbors."""
    heads = heads if heads is not None else state.heads
    _broadcast_batches(state, heads, "pushdown", lambda n: _alive_neighbors(state, n), None)
    return state


def _select_heads(state: SimulationState) -> HeadSet:
    if state.algorithm == "phdca":
        heads = select_heads_phdca(state.clock, state.n_est, state.config.head_fraction,
                                   alive=lambda u: state.nodes[u - 1].alive, n_max=state.config.n)
    else:
        alive = state.alive_ids()
        heads = select_heads_rhdca(alive, state.k, state.rng) if alive else HeadSet((), True)
    if heads.degenerate:
        state.events.append((*state._when(), "degenerate_slot"))
    return heads


def install_heads(state: SimulationState, heads: HeadSet) -> None:
    """Make ``heads`` the current head set and update the period tallies."""
    for h in state.heads:
        state.nodes[h - 1].is_head = False
    for h in heads:
        state.nodes[h - 1].is_head = True
    state.heads = heads
    stats = state.stats
    if stats is not None:
        stats.head_counts.append(len(heads))
        for h in heads:
            node = state.nodes[h - 1]
            stats.head_slots[h - 1] += 1
            stats.head_neighbors_as_head[h - 1] += len(_adjacent_heads(state, node))
        for node in state.nodes:
            if node.alive:
                stats.head_neighbors_all[node.id - 1] += sum(
                    1 for j in node.neighbor_table if state.nodes[j - 1].is_head)
    for h in heads:
        state._log("head", h)


def _update_estimate(state: SimulationState) -> None:
    alive = state.alive_count
    if alive == 0:
        return
    basis = state.n_est if state.estimate_basis == "previous" else state.config.n
    n_hat = min(max(1, round_half_up(state.estimate_fraction * basis)), alive)
    result = collection.query(state, n_hat, state.collection_rng)
    previous = state.n_est
    state.n_est = collection.estimate_n(result, previous)
    if not result.recovered_sources:
        state.events.append((*state._when(), "degenerate_network"))
    recipient = next((h for h in state.heads if state.nodes[h - 1].alive),
                     next((n.id for n in state.nodes if n.alive), None))
    state.estimate_history.append((state.clock.period_index, previous, state.n_est, recipient))
    if recipient is not None:
        state._log("estimate", recipient, state.n_est)


def advance_slot(state: SimulationState) -> SimulationState:
    """Move to the next slot, refreshing the node-count estimate at a period wrap."""
    last_slot = state.clock.slot == state.clock.slots_per_period
    if last_slot and state.estimate_n:
        _update_estimate(state)
    state.clock.tick()
    install_heads(state, _select_heads(state))
    return state


class Simulation:
    """Owns one deployment and steps it period by period.

    >>> from dcasim.config import NetworkConfig
    >>> sim = Simulation.create(NetworkConfig(n=50, L=20, W=20, r=5), "rhdca", seed=3)
    >>> _ = sim.run(2)
    >>> sim.state.clock.period_index
    2
    """

    def __init__(self, state: SimulationState):
        self.state = state
        self.history: list[PeriodStats] = []

    @classmethod
    def create(cls, config: NetworkConfig, algorithm: str, seed: int, *, pushdown: bool = False,
               allow_isolated: bool = False, max_retries: int = DEFAULT_MAX_RETRIES,
               charge_flooding: bool = True, estimate_n: bool = True,
               estimate_basis: str = "previous", trace: Callable | None = None) -> "Simulation":
        """Deploy, flood IDs and install the first slot's heads.

        ``estimate_basis`` picks how many nodes the period-end estimation
        query touches: 10% of the previous estimate (``"previous"``) or 10%
        of the deployed node count (``"deployed"``). The former can spiral
        downward in sparse fields, where a query recovers fewer sources
        than the estimate it was sized from.
        """
        if algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
        topo_ss, proto_ss, coll_ss = np.random.SeedSequence(seed).spawn(3)
        positions, graph = deploy(config, np.random.default_rng(topo_ss),
                                  allow_isolated=allow_isolated, max_retries=max_retries)
        return cls._assemble(config, algorithm, positions, graph, proto_ss, coll_ss, pushdown=pushdown,
                             charge_flooding=charge_flooding, estimate_n=estimate_n,
                             estimate_basis=estimate_basis, trace=trace)

    @classmethod
    def from_positions(cls, config: NetworkConfig, algorithm: str, positions, seed: int = 0,
                       **options) -> "Simulation":
        """Build a simulation over explicit coordinates (``config.n`` is ignored)."""
        pts = np.asarray(positions, dtype=float).reshape(-1, 2)
        if len(pts) < 2:
            raise ValueError("need at least two positions")
        config = config.with_(n=len(pts))
        _, proto_ss, coll_ss = np.random.SeedSequence(seed).spawn(3)
        return cls._assemble(config, algorithm, pts, build_graph(pts, config.r), proto_ss, coll_ss, **options)

    @classmethod
    def _assemble(cls, config, algorithm, positions, graph, proto_ss, coll_ss, *, pushdown=False,
                  charge_flooding=True, estimate_n=True, estimate_basis="previous", trace=None):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
        if estimate_basis not in ("previous", "deployed"):
            raise ValueError(f"estimate_basis must be 'previous' or 'deployed', got {estimate_basis!r}")
        nodes = [NodeState(id=i + 1, energy=config.initial_energy) for i in range(config.n)]
        state = SimulationState(
            config=config, algorithm=algorithm, positions=positions, graph=graph, nodes=nodes,
            clock=Clock(config.epsilon), ledger=EnergyLedger(config.n),
            rng=np.random.default_rng(proto_ss), collection_rng=np.random.default_rng(coll_ss),
            n_est=config.n, p_t=tx_cost(config.r, config.packet_bits), p_r=rx_cost(config.packet_bits),
            pushdown=pushdown, estimate_n=estimate_n, estimate_basis=estimate_basis, trace=trace,
        )
        flood_ids(state, charge_energy=charge_flooding)
        install_heads(state, _select_heads(state))
        return cls(state)

    def _begin_period(self) -> PeriodStats:
        s = self.state
        n = s.config.n
        alive = np.array([node.alive for node in s.nodes])
        degrees = np.array([sum(1 for j in node.neighbor_table if s.nodes[j - 1].alive) if node.alive else 0
                            for node in s.nodes])
        n_alive = int(alive.sum())
        stats = PeriodStats(
            period=s.clock.period_index + 1, alive_at_start=n_alive, alive_mask=alive, degrees=degrees,
            mean_degree=float(degrees[alive].mean()) if n_alive else 0.0,
            head_counts=[len(s.heads)], alpha_sum=np.zeros(n), head_slots=np.zeros(n, dtype=int),
            head_neighbors_as_head=np.zeros(n), head_neighbors_all=np.zeros(n),
        )
        for h in s.heads:
            stats.head_slots[h - 1] += 1
            stats.head_neighbors_as_head[h - 1] += len(_adjacent_heads(s, s.nodes[h - 1]))
        for node in s.nodes:
            if node.alive:
                stats.head_neighbors_all[node.id - 1] += sum(1 for j in node.neighbor_table if s.nodes[j - 1].is_head)
        s.stats = stats
        return stats

    def run_period(self) -> PeriodStats:
        s = self.state
        if s.clock.slot != 1:
            raise RuntimeError("run_period must start at slot 1")
        stats = self._begin_period()
        before = s.ledger.phase_total("sense")
        sense_and_broadcast(s)
        stats.sensing_energy = s.ledger.phase_total("sense") - before
        before = s.ledger.phase_total("exchange") + s.ledger.phase_total("pushdown")
        for _ in range(s.config.epsilon):
            head_exchange(s)
            if s.pushdown:
                head_pushdown(s)
            # The head tallies of the next slot belong to the next period once the clock wraps.
            if s.clock.slot == s.clock.slots_per_period:
                s.stats = None
            advance_slot(s)
        s.stats = stats
        stats.dissemination_energy = (s.ledger.phase_total("exchange") + s.ledger.phase_total("pushdown")) - before
        self.history.append(stats)
        return stats

    def run(self, periods: int, stop_when_dead: bool = True) -> list[PeriodStats]:
        out = []
        for _ in range(periods):
            if stop_when_dead and self.state.alive_count == 0:
                break
            out.append(self.run_period())
        return out

    @property
    def death_rate(self) -> float:
        return death_rate(self.state)

    def measured_mean_degree(self) -> float:
        return mean_degree(self.state.graph)
