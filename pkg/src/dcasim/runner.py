"""Experiment sweeps, seed management and CSV output."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .analytics import EnergyParams, head_energy
from .collection import coverage_fraction, query
from .config import NetworkConfig, round_half_up
from .protocol import ALGORITHMS, PeriodStats, Simulation
from .topology import DEFAULT_MAX_RETRIES, TopologyError

CSV_COLUMNS = (
    "algorithm", "n", "eta", "trial", "seed", "period", "full_recovery", "coverage",
    "death_rate", "mean_energy_j", "es_measured_j", "eh_measured_j", "eh_predicted_j", "status",
)
NODE_ENERGY_COLUMNS = ("algorithm", "n", "trial", "seed", "node_id", "degree", "consumed_j")
SUMMARY_METRICS = (
    ("ps", "full_recovery"),
    ("coverage", "coverage"),
    ("death_rate", "death_rate"),
    ("energy", "mean_energy_j"),
)


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep over node counts and decoding ratios for a single algorithm.

    ``allow_isolated`` defaults to True: at the reference density (r=5 m on
    a 100 m x 100 m field) virtually every deployment of a few hundred nodes
    has isolated nodes, so rejection sampling would leave nothing to run.
    """

    algorithm: str = "phdca"
    config: NetworkConfig = field(default_factory=NetworkConfig)
    eta_grid: Sequence[float] = (0.1,)
    n_grid: Sequence[int] = (300,)
    trials: int = 1
    base_seed: int = 0
    duration: int = 1
    pushdown_mode: bool = False
    output_path: str | None = None
    allow_isolated: bool = True
    max_retries: int = DEFAULT_MAX_RETRIES
    estimate_n: bool = True
    estimate_basis: str = "previous"
    charge_flooding: bool = True
    require_dead_sources: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if not self.eta_grid or not self.n_grid:
            raise ValueError("eta_grid and n_grid must be nonempty")
        if any(not 0 < eta <= 1 for eta in self.eta_grid):
            raise ValueError("every eta must lie in (0, 1]")
        if self.trials < 1 or self.duration < 1:
            raise ValueError("trials and duration must be >= 1")


@dataclass(frozen=True)
class MetricsRecord:
    algorithm: str
    n: int
    eta: float
    trial: int
    seed: int
    period: int
    full_recovery: int | None
    coverage: float | None
    death_rate: float | None
    mean_energy_j: float | None
    es_measured_j: float | None
    eh_measured_j: float | None
    eh_predicted_j: float | None
    status: str = "ok"

    def row(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in CSV_COLUMNS]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def derive_seed(base_seed: int, *indices: int) -> int:
    """Deterministic 63-bit seed for a grid cell."""
    ss = np.random.SeedSequence(base_seed, spawn_key=tuple(int(i) for i in indices))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def trial_seeds(spec: ExperimentSpec) -> dict[tuple[int, int], int]:
    """Simulation seed for every (n index, trial); raises on any collision."""
    seeds = {(i, t): derive_seed(spec.base_seed, i, t)
             for i in range(len(spec.n_grid)) for t in range(spec.trials)}
    if len(set(seeds.values())) != len(seeds):
        raise RuntimeError("seed derivation collided; choose another base_seed")
    return seeds


def predicted_head_energy(stats: PeriodStats, sim: Simulation) -> float:
    """E_h from the closed form, fed with this period's measured topology and traffic."""
    s = sim.state
    alive = stats.alive_mask
    if stats.alive_at_start == 0:
        return 0.0
    slots = stats.head_slots
    as_head = slots > 0
    alpha = np.where(as_head, stats.alpha_sum / np.maximum(slots, 1), 0.0)
    z = np.where(as_head, np.rint(stats.head_neighbors_as_head / np.maximum(slots, 1)),
                 np.rint(stats.head_neighbors_all / s.config.epsilon)).astype(int)
    z = np.minimum(z, stats.degrees)
    params = EnergyParams(
        n=stats.alive_at_start, k=round_half_up(float(np.mean(stats.head_counts))), epsilon=s.config.epsilon,
        mu=stats.mean_degree, p_t=s.p_t, p_r=s.p_r,
        alpha=alpha[alive].tolist(), z=z[alive].tolist(), d=stats.degrees[alive].tolist(),
    )
    return head_energy(params)


def _simulation_options(spec: ExperimentSpec) -> dict:
    return dict(pushdown=spec.pushdown_mode, allow_isolated=spec.allow_isolated,
                max_retries=spec.max_retries, charge_flooding=spec.charge_flooding,
                estimate_n=spec.estimate_n, estimate_basis=spec.estimate_basis)


def run_trial(spec: ExperimentSpec, n_index: int, trial: int, seed: int,
              trace: Callable | None = None) -> tuple[list[MetricsRecord], list[tuple]]:
    """Simulate one deployment and query it after every period for every eta."""
    n = spec.n_grid[n_index]
    config = replace(spec.config, n=n)
    algo = spec.algorithm

    def failed(status: str, period: int = 0, etas: Iterable[float] = spec.eta_grid):
        return [MetricsRecord(algo, n, eta, trial, seed, period, None, None, None, None, None, None, None, status)
                for eta in etas]

    try:
        sim = Simulation.create(config, algo, seed, trace=trace, **_simulation_options(spec))
    except TopologyError:
        return failed("topology_error"), []
    query_rngs = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j + 1,)))
                  for j in range(len(spec.eta_grid))]
    records = []
    for period in range(1, spec.duration + 1):
        if sim.state.alive_count == 0:
            records.extend(failed("network_dead", period))
            continue
        stats = sim.run_period()
        dr = sim.death_rate
        energy = float(sim.state.ledger.consumed.mean())
        eh_pred = predicted_head_energy(stats, sim)
        alive = sim.state.alive_count
        for eta, rng in zip(spec.eta_grid, query_rngs):
            n_hat = max(1, round_half_up(eta * n))
            if n_hat > alive:
                records.append(MetricsRecord(algo, n, eta, trial, seed, period, None, None, dr, energy,
                                             stats.sensing_energy, stats.dissemination_energy, eh_pred,
                                             "infeasible_query"))
                continue
            result = query(sim.state, n_hat, rng, require_dead_sources=spec.require_dead_sources)
            records.append(MetricsRecord(
                algo, n, eta, trial, seed, period, int(result.full_recovery), coverage_fraction(result, n),
                dr, energy, stats.sensing_energy, stats.dissemination_energy, eh_pred,
            ))
    degrees = sim.state.graph.degrees
    node_rows = [(algo, n, trial, seed, i + 1, int(degrees[i]), float(c))
                 for i, c in enumerate(sim.state.ledger.consumed)]
    return records, node_rows


def _run_item(args):
    spec, n_index, trial, seed = args
    return run_trial(spec, n_index, trial, seed)


def _sort_key(rec: MetricsRecord):
    return (rec.n, rec.eta, rec.trial, rec.period)


def run_experiment(spec: ExperimentSpec, *, jobs: int = 1, trace: Callable | None = None,
                   node_energy: list | None = None) -> list[MetricsRecord]:
    """Run every (n, trial) cell of ``spec`` and return records in canonical order.

    ``jobs > 1`` fans cells out to worker processes; tracing forces a single
    process so events stay in order. Per-node consumed energies are appended
    to ``node_energy`` when a list is passed.
    """
    seeds = trial_seeds(spec)
    items = [(spec, i, t, seeds[(i, t)]) for i in range(len(spec.n_grid)) for t in range(spec.trials)]
    if trace is not None or jobs <= 1:
        results = []
        for s, i, t, seed in items:
            if trace is not None:
                trace.fh.write(f"# algorithm={s.algorithm},n={s.n_grid[i]},trial={t},seed={seed}\n")
            results.append(run_trial(s, i, t, seed, trace=trace))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_item, items))
    records = sorted((r for recs, _ in results for r in recs), key=_sort_key)
    if node_energy is not None:
        node_energy.extend(row for _, rows in results for row in rows)
    if spec.output_path:
        with open(spec.output_path, "w", newline="", encoding="utf-8") as fh:
            write_csv(records, fh)
    return records


def write_csv(records: Iterable[MetricsRecord], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(rec.row())


def to_csv(records: Iterable[MetricsRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def write_node_energy(rows: Iterable[tuple], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(NODE_ENERGY_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])


def summarize(records: Sequence[MetricsRecord], by: Sequence[str] = ("algorithm", "n", "eta")) -> list[dict]:
    """Mean and standard error per group, over rows with status ``ok``.

    The standard error is the population standard deviation over the square
    root of the group size, so a Bernoulli column gives sqrt(p(1-p)/count).
    """
    if not records:
        raise ValueError("records must be nonempty")
    groups: dict[tuple, list[MetricsRecord]] = {}
    for rec in records:
        if rec.status != "ok":
            continue
        groups.setdefault(tuple(getattr(rec, b) for b in by), []).append(rec)
    table = []
    for key in sorted(groups):
        rows = groups[key]
        entry = dict(zip(by, key))
        entry["count"] = len(rows)
        for name, column in SUMMARY_METRICS:
            values = np.array([getattr(r, column) for r in rows], dtype=float)
            entry[f"{name}_mean"] = float(values.mean())
            entry[f"{name}_se"] = float(values.std() / math.sqrt(len(values)))
        table.append(entry)
    return table


def write_summary(table: Sequence[dict], fh) -> None:
    if not table:
        fh.write("")
        return
    writer = csv.writer(fh, lineterminator="\n")
    columns = list(table[0])
    writer.writerow(columns)
    for entry in table:
        writer.writerow([_fmt(entry[c]) for c in columns])
