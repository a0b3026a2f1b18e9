"""Command-line entry point: ``dcasim --algorithm phdca --n 100,300 --eta 0.1,0.2 ...``."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, NetworkConfig
from .protocol import EventTrace
from .runner import ExperimentSpec, run_experiment, summarize, write_csv, write_node_energy, write_summary


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _area(text: str) -> tuple[float, float]:
    parts = text.lower().replace("*", "x").split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"area must look like LxW, got {text!r}")
    return float(parts[0]), float(parts[1])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcasim", description="Simulate PHDCA/RHDCA dissemination and collection.")
    p.add_argument("--algorithm", choices=("phdca", "rhdca"), default="phdca")
    p.add_argument("--n", type=_int_list, default=[300], help="comma-separated node counts")
    p.add_argument("--area", type=_area, default=(100.0, 100.0), help="field size LxW in meters")
    p.add_argument("--radius", type=float, default=5.0)
    p.add_argument("--epsilon", type=int, default=10, help="slots per period")
    p.add_argument("--buffer", type=int, default=40, help="buffer capacity in packets")
    p.add_argument("--packet-bits", type=int, default=2000)
    p.add_argument("--energy-j", type=float, default=5.0, help="initial battery per node")
    p.add_argument("--head-fraction", type=float, default=0.1)
    p.add_argument("--eta", type=_float_list, default=[0.1], help="comma-separated decoding ratios")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--periods", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pushdown", action="store_true", help="heads rebroadcast merged buffers to all neighbors")
    p.add_argument("--reject-isolated", action="store_true",
                   help="resample deployments that contain isolated nodes")
    p.add_argument("--estimate-basis", choices=("previous", "deployed"), default="previous")
    p.add_argument("--no-estimate", action="store_true", help="disable the period-end node-count estimation")
    p.add_argument("--no-flood-energy", action="store_true", help="do not charge the ID flooding phase")
    p.add_argument("--require-dead-sources", action="store_true",
                   help="full recovery requires every deployed source, dead or alive")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="per-trial CSV path (default: stdout)")
    p.add_argument("--trace", help="event trace path")
    p.add_argument("--node-energy", help="per-node consumed-energy CSV path")
    p.add_argument("--summary", action="store_true", help="print the aggregate table to stdout")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    L, W = args.area
    try:
        config = NetworkConfig(n=max(args.n), L=L, W=W, r=args.radius, epsilon=args.epsilon,
                               buffer_capacity=args.buffer, packet_bits=args.packet_bits,
                               initial_energy=args.energy_j, head_fraction=args.head_fraction)
        for n in args.n:
            config.with_(n=n)
        spec = ExperimentSpec(
            algorithm=args.algorithm, config=config, eta_grid=tuple(args.eta), n_grid=tuple(args.n),
            trials=args.trials, base_seed=args.seed, duration=args.periods, pushdown_mode=args.pushdown,
            output_path=None, allow_isolated=not args.reject_isolated, estimate_n=not args.no_estimate,
            estimate_basis=args.estimate_basis, charge_flooding=not args.no_flood_energy,
            require_dead_sources=args.require_dead_sources,
        )
    except (ConfigError, ValueError) as exc:
        print(f"dcasim: configuration error: {exc}", file=sys.stderr)
        return 2

    node_rows: list = []
    trace_fh = open(args.trace, "w", encoding="utf-8", newline="\n") if args.trace else None
    try:
        records = run_experiment(spec, jobs=args.jobs, trace=EventTrace(trace_fh) if trace_fh else None,
                                 node_energy=node_rows)
    finally:
        if trace_fh:
            trace_fh.close()

    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_csv(records, fh)
    elif not args.summary:
        write_csv(records, sys.stdout)
    if args.node_energy:
        with open(args.node_energy, "w", encoding="utf-8", newline="") as fh:
            write_node_energy(node_rows, fh)
    if args.summary:
        write_summary(summarize(records), sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
