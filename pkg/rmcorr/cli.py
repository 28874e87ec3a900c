#!/usr/bin/env python3
"""
rmcorr - CLI Entry Point

Simulates randomized-measurement protocols, estimates correlation quantities
from the resulting datasets and compares them with exact values.
"""

import argparse
import json
import logging
import sys
from typing import Any, Callable, Dict, List, NoReturn, Optional, Tuple

import pandas as pd

from .config import get_settings
from .ensembles import CLIFFORD_1Q, HAAR_1Q, IDENTITY, export_clifford_table
from .estimators import (
    CHAIN,
    ENUMERATE,
    GLOBAL,
    LOCAL,
    EstimateWithError,
    estimate_concurrence,
    estimate_correlation,
    estimate_mes_fidelity,
    estimate_purity,
    estimate_t2_witness,
    estimate_Tk,
    write_estimates,
)
from .experiments import EXPERIMENTS, SweepConfig, run_sweep, state_from_spec
from .oracle import (
    criterion_report,
    exact_collision_moment,
    exact_concurrence,
    exact_correlation,
    exact_genuine_correlation,
    exact_hs_distance,
    exact_mes_fidelity,
    exact_purity,
    exact_Tk,
)
from .qcore import Partition, QuantumState
from .sampler import (
    CONCURRENCE,
    GLOBAL_CRO,
    LOCAL_CRO,
    MES_FIDELITY,
    MeasurementDataset,
    run_protocol,
)
from .verify import run_identity_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY_FAILED = 2

PROTOCOL_FLAGS = {
    "local": LOCAL_CRO,
    "global": GLOBAL_CRO,
    "mes": MES_FIDELITY,
    "concurrence": CONCURRENCE,
}
ESTIMATORS = ("t_k", "purity", "correlation", "t2", "mes_fidelity", "concurrence")
QUANTITIES = (
    "t_k",
    "purity",
    "correlation",
    "genuine_correlation",
    "mes_fidelity",
    "concurrence",
    "collision_moment",
    "hs_distance",
    "criteria",
)


class UsageError(Exception):
    """Bad command-line arguments"""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(message)


def setup_logging(verbose: bool = False) -> None:
    """Setup logging configuration"""
    level = logging.DEBUG if verbose else getattr(logging, get_settings().log_level, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def _parse_subset(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    try:
        return [int(q) for q in text.split(",") if q.strip()]
    except ValueError as e:
        raise UsageError(f"Cannot parse qubit subset {text!r}: {e}") from e


def _seed(args: argparse.Namespace) -> int:
    return 0 if args.seed is None else int(args.seed)


def _partition_or_default(text: Optional[str], n: int) -> Partition:
    partition = Partition.parse(text) if text else Partition.singletons(range(n))
    partition.check_within(n)
    return partition


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    common.add_argument("--seed", type=int, help="Master seed (default: 0, or the config seed)")
    common.add_argument(
        "--threads", type=int, default=None, help="Worker threads (default: RMCORR_THREADS or 1)"
    )

    parser = _Parser(
        prog="rmcorr",
        description="Randomized-measurement estimation of multipartite correlations",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s simulate --state ghz3 --n-u 1000 --n-m 100 --out ghz3.jsonl
  %(prog)s estimate --dataset ghz3.jsonl --partition "1|1|1"
  %(prog)s oracle --state ghz3 --quantity t_k --partition "1|1|1"
  %(prog)s sweep --experiment var_vs_NU --out var_nu.csv
  %(prog)s verify
        """,
    )
    subparsers = parser.add_subparsers(dest="command")

    simulate = subparsers.add_parser("simulate", parents=[common], help="Run a protocol")
    simulate.add_argument("--protocol", choices=sorted(PROTOCOL_FLAGS), default="local")
    simulate.add_argument("--state", required=True, help="State spec, e.g. ghz3, bell, w6")
    simulate.add_argument("--noise", type=float, default=0.0, help="Depolarizing strength")
    simulate.add_argument("--partition", help='Party groups for the global protocol, e.g. "2|1"')
    simulate.add_argument("--n-u", type=int, default=100, help="Unitary settings (default: 100)")
    simulate.add_argument("--n-m", type=int, default=10, help="Shots per setting (default: 10)")
    simulate.add_argument(
        "--ensemble", choices=[CLIFFORD_1Q, HAAR_1Q, IDENTITY], default=CLIFFORD_1Q
    )
    simulate.add_argument("--out", "-o", required=True, help="Dataset file (.jsonl)")

    estimate = subparsers.add_parser("estimate", parents=[common], help="Estimate from a dataset")
    estimate.add_argument("--dataset", required=True, help="Dataset file written by simulate")
    estimate.add_argument("--estimator", choices=ESTIMATORS, default="t_k")
    estimate.add_argument(
        "--partition", help="Partition (default: recorded parties, else one per qubit)"
    )
    estimate.add_argument("--subset", help='Qubits for purity, e.g. "0,2"')
    estimate.add_argument("--method", choices=[CHAIN, ENUMERATE], default=CHAIN)
    estimate.add_argument("--symmetrize", action="store_true", help="Average over role assignments")
    estimate.add_argument("--kernel", choices=[LOCAL, GLOBAL], help="Override the kernel choice")
    estimate.add_argument("--out", "-o", help="Also write the record to this JSONL file")

    oracle = subparsers.add_parser("oracle", parents=[common], help="Exact value for a state")
    oracle.add_argument("--state", required=True, help="State spec, e.g. ghz3")
    oracle.add_argument("--noise", type=float, default=0.0, help="Depolarizing strength")
    oracle.add_argument("--quantity", choices=QUANTITIES, default="t_k")
    oracle.add_argument("--partition", help='Partition, e.g. "1|1|1" or "q:0,2|1"')
    oracle.add_argument("--subset", help='Qubits for purity, e.g. "0,2"')
    oracle.add_argument("--variant", choices=["gm", "max"], default="gm")

    sweep = subparsers.add_parser("sweep", parents=[common], help="Run an experiment sweep")
    source = sweep.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="Sweep configuration file (JSON)")
    source.add_argument("--experiment", choices=EXPERIMENTS, help="Use the built-in preset")
    sweep.add_argument("--out", "-o", help="Result table (CSV); summary goes next to it")
    sweep.add_argument("--replications", type=int, help="Override replications per grid point")
    sweep.add_argument("--n-u", type=int, help="Override unitary settings")
    sweep.add_argument("--n-m", type=int, help="Override shots per setting")

    subparsers.add_parser("verify", parents=[common], help="Run the exact identity suite")

    cliffords = subparsers.add_parser(
        "cliffords", parents=[common], help="Export the single-qubit Clifford table"
    )
    cliffords.add_argument("--out", "-o", required=True, help="Output file (.jsonl)")
    return parser


def cmd_simulate(args: argparse.Namespace) -> int:
    protocol = PROTOCOL_FLAGS[args.protocol]
    state = state_from_spec(args.state, args.noise, _seed(args))
    partition = None
    if protocol == GLOBAL_CRO:
        if not args.partition:
            logger.error("The global protocol needs --partition")
            return EXIT_USAGE
        partition = Partition.parse(args.partition)
    dataset = run_protocol(
        protocol,
        state,
        args.n_u,
        args.n_m,
        seed=_seed(args),
        partition=partition,
        ensemble_id=args.ensemble,
        threads=args.threads,
    )
    dataset.to_jsonl(args.out)
    return EXIT_OK


def _estimate(
    args: argparse.Namespace, dataset: MeasurementDataset
) -> Tuple[EstimateWithError, Optional[Partition]]:
    n = dataset.n_qubits
    if args.estimator == "mes_fidelity":
        return estimate_mes_fidelity(dataset), None
    if args.estimator == "concurrence":
        return estimate_concurrence(dataset), None
    if args.estimator == "purity":
        subset = _parse_subset(args.subset) or list(range(n))
        return estimate_purity(dataset, subset, threads=args.threads), None

    if args.partition:
        partition = Partition.parse(args.partition)
    elif dataset.partition_hint is not None:
        partition = dataset.partition_hint
    else:
        partition = Partition.singletons(range(n))
        if args.estimator == "t2":
            partition = Partition.equal(n, 2)
    if args.estimator == "t2":
        estimate = estimate_t2_witness(dataset, partition, args.method, threads=args.threads)
        return estimate, partition
    options: Dict[str, Any] = {
        "method": args.method,
        "symmetrize": args.symmetrize,
        "kernel": args.kernel,
        "threads": args.threads,
    }
    if args.estimator == "correlation":
        return estimate_correlation(dataset, partition, **options), partition
    return estimate_Tk(dataset, partition, **options), partition


def cmd_estimate(args: argparse.Namespace) -> int:
    dataset = MeasurementDataset.from_jsonl(args.dataset)
    estimate, partition = _estimate(args, dataset)
    record = estimate.to_record(partition, args.dataset)
    if args.out:
        write_estimates([record], args.out)
    print(json.dumps(record))
    return EXIT_OK


def _oracle_value(args: argparse.Namespace, state: QuantumState) -> Any:
    n = state.n_qubits
    quantity = args.quantity
    if quantity == "purity":
        return exact_purity(state, _parse_subset(args.subset))
    if quantity == "mes_fidelity":
        return exact_mes_fidelity(state)
    if quantity == "concurrence":
        return exact_concurrence(state)
    if quantity == "collision_moment":
        return exact_collision_moment(state)
    if quantity == "criteria":
        bipartition = Partition.parse(args.partition) if args.partition else None
        return criterion_report(state, bipartition)._asdict()

    partition = _partition_or_default(args.partition, n)
    if quantity == "t_k":
        return exact_Tk(state, partition)
    if quantity == "correlation":
        return exact_correlation(state, partition, args.variant)
    if quantity == "genuine_correlation":
        return exact_genuine_correlation(state, partition, args.variant)
    return exact_hs_distance(state, partition)


def cmd_oracle(args: argparse.Namespace) -> int:
    state = state_from_spec(args.state, args.noise, _seed(args))
    value = _oracle_value(args, state)
    if isinstance(value, dict):
        print(json.dumps(value, sort_keys=True))
    else:
        print(f"{value:.12g}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.config:
        config = SweepConfig.from_file(args.config)
    else:
        config = SweepConfig.preset(args.experiment)
    overrides = {
        "seed": args.seed,
        "output": args.out,
        "threads": args.threads,
        "replications": args.replications,
        "n_u": args.n_u,
        "n_m": args.n_m,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    config.validate()
    result = run_sweep(config)
    print(json.dumps(result.summary, sort_keys=True))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    results = run_identity_suite()
    table = pd.DataFrame([r._asdict() for r in results])
    print(table.to_markdown(index=False))
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"Verification failed: {', '.join(failed)}")
        return EXIT_VERIFY_FAILED
    logger.info(f"All {len(results)} checks passed")
    return EXIT_OK


def cmd_cliffords(args: argparse.Namespace) -> int:
    export_clifford_table(args.out)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "oracle": cmd_oracle,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "cliffords": cmd_cliffords,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main function"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        logging.getLogger(__name__).error(f"Usage error: {e}")
        return EXIT_USAGE

    setup_logging(args.verbose if args.command else False)
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](args)

    except KeyboardInterrupt:
        logger.info(f"{args.command} interrupted by user")
        return EXIT_USAGE

    except UsageError as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE

    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        if args.verbose:
            logger.exception("Full traceback:")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
