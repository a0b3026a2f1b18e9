import numpy as np
import pytest

from dcasim.config import NetworkConfig
from dcasim.protocol import Simulation


def make_sim(positions, algorithm="phdca", r=5.0, **options):
    cfg = {"head_fraction": 0.5, **options.pop("config", {})}
    config = NetworkConfig(n=2, L=100.0, W=100.0, r=r, **cfg)
    return Simulation.from_positions(config, algorithm, np.asarray(positions, dtype=float), **options)


@pytest.fixture
def collinear():
    """Three nodes on a line, spaced exactly r apart."""
    return make_sim([(10.0, 10.0), (15.0, 10.0), (20.0, 10.0)])


@pytest.fixture
def pair():
    return make_sim([(10.0, 10.0), (12.0, 10.0)])


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    def _report(label, ok, detail=""):
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
