"""Deployment and protocol parameters shared by every module."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace


def round_half_up(x: float) -> int:
    """Nearest integer with halves rounded up (``round`` would give round(2.5) == 2)."""
    return math.floor(x + 0.5)


class ConfigError(ValueError):
    """Raised when a NetworkConfig violates its invariants."""


@dataclass(frozen=True)
class NetworkConfig:
    """Parameters of one sensor-field deployment.

    Defaults follow the experiment settings used throughout: a 100 m x 100 m
    field, radio range 5 m, 10 slots per period, 40-packet buffers,
    2000-bit packets and 5 J batteries.
    """

    n: int = 300
    L: float = 100.0
    W: float = 100.0
    r: float = 5.0
    epsilon: int = 10
    buffer_capacity: int = 40
    packet_bits: int = 2000
    initial_energy: float = 5.0
    head_fraction: float = 0.1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.n, int) or self.n < 2:
            raise ConfigError(f"n must be an integer >= 2, got {self.n!r}")
        if self.L <= 0 or self.W <= 0:
            raise ConfigError(f"field dimensions must be positive, got {self.L}x{self.W}")
        if self.r <= 0:
            raise ConfigError(f"radio range must be positive, got {self.r}")
        if not isinstance(self.epsilon, int) or self.epsilon < 1:
            raise ConfigError(f"epsilon must be an integer >= 1, got {self.epsilon!r}")
        if not isinstance(self.buffer_capacity, int) or self.buffer_capacity < 1:
            raise ConfigError(f"buffer_capacity must be >= 1, got {self.buffer_capacity!r}")
        if not isinstance(self.packet_bits, int) or self.packet_bits < 1:
            raise ConfigError(f"packet_bits must be >= 1, got {self.packet_bits!r}")
        if self.initial_energy <= 0:
            raise ConfigError(f"initial_energy must be positive, got {self.initial_energy}")
        if not 0 < self.head_fraction <= 1:
            raise ConfigError(f"head_fraction must lie in (0, 1], got {self.head_fraction}")
        if self.k < 1:
            raise ConfigError(f"head_fraction * n must round to at least one head, got {self.k}")

    @property
    def area(self) -> float:
        return self.L * self.W

    @property
    def k(self) -> int:
        """Nominal number of heads per slot."""
        return round_half_up(self.head_fraction * self.n)

    def with_(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)
