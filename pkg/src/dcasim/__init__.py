"""Cluster-head-rotation data dissemination and collection for sensor networks."""
from .config import ConfigError, NetworkConfig
from .protocol import Packet, Simulation

__all__ = ["ConfigError", "NetworkConfig", "Packet", "Simulation"]
__version__ = "0.1.0"
