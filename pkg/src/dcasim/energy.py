"""First-order radio cost model and battery accounting."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

E_ELEC = 50e-9  # J/bit, transceiver electronics
E_AMP = 100e-12  # J/bit/m^2, transmit amplifier


def tx_cost(r: float, psi: int) -> float:
    """Energy (J) to transmit one ``psi``-bit packet over range ``r`` meters."""
    if r <= 0 or psi <= 0:
        raise ValueError("tx_cost requires r > 0 and psi > 0")
    return (E_ELEC + E_AMP * r**2) * psi


def rx_cost(psi: int) -> float:
    """Energy (J) to receive one ``psi``-bit packet."""
    if psi <= 0:
        raise ValueError("rx_cost requires psi > 0")
    return E_ELEC * psi


@dataclass
class EnergyLedger:
    """Network-wide record of every joule drawn from node batteries.

    ``consumed`` is indexed by node ID - 1. ``by_phase`` splits totals by
    protocol phase (``flood``, ``sense``, ``exchange``, ``pushdown``) and
    direction (``tx`` / ``rx``).
    """

    n: int
    consumed: np.ndarray = field(init=False)
    transmit_total: float = 0.0
    receive_total: float = 0.0
    by_phase: dict = field(default_factory=lambda: defaultdict(float))
    death_times: dict = field(default_factory=dict)
    dead_charge_attempts: int = 0
    events: int = 0

    def __post_init__(self):
        self.consumed = np.zeros(self.n)

    @property
    def total(self) -> float:
        return self.transmit_total + self.receive_total

    def phase_total(self, phase: str) -> float:
        return self.by_phase[(phase, "tx")] + self.by_phase[(phase, "rx")]


def charge(node, amount: float, ledger: EnergyLedger, *, phase: str = "other",
           direction: str = "tx", when: tuple[int, int] = (0, 0)) -> float:
    """Draw ``amount`` joules from ``node``'s battery, returning what was drawn.

    The battery is floored at zero; a node reaching zero is marked dead and
    its death time recorded. Charging a dead node changes nothing except the
    ledger's diagnostic counter.
    """
    if amount < 0:
        raise ValueError("charge amount must be nonnegative")
    if not node.alive:
        ledger.dead_charge_attempts += 1
        return 0.0
    drawn = min(amount, node.energy)
    node.energy -= drawn
    if node.energy <= 0.0:
        node.energy = 0.0
        node.alive = False
        ledger.death_times[node.id] = when
    ledger.consumed[node.id - 1] += drawn
    ledger.by_phase[(phase, direction)] += drawn
    if direction == "tx":
        ledger.transmit_total += drawn
    else:
        ledger.receive_total += drawn
    ledger.events += 1
    return drawn


def death_rate(state) -> float:
    """Dead nodes over the configured node count."""
    n = state.config.n
    dead = sum(1 for node in state.nodes if not node.alive)
    return dead / n
