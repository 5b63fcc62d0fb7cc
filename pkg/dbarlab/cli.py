"""
Command-line entry point.

Usage:
    dbarlab dirichlet --shape square --N 256
    dbarlab hartogs --mask W.txt --stages 6 --grid 256
    dbarlab reinhardt --model bidisc --q 1
    dbarlab suite --out reports
    dbarlab trace traces/run_abc.jsonl
"""
import argparse
import logging
import sys
from typing import Dict, List, Optional

from pydantic import ValidationError

from . import __version__
from .config import ExperimentConfig
from .experiments import DbarExperiments, ExperimentKit, report_bundle, run_suite, write_result
from .models import ExperimentResult
from .observability import TracingKit, format_trace, load_trace

EXIT_INPUT = 2
EXIT_CONSISTENCY = 3
EXIT_INTERNAL = 1
_EXIT_CODES = {"input": EXIT_INPUT, "consistency": EXIT_CONSISTENCY, "internal": EXIT_INTERNAL}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="Output directory for reports (default: $DBARLAB_OUT or reports)")
    common.add_argument("--seed", type=int, help="Seed for every random draw (default: $DBARLAB_SEED or 0)")
    common.add_argument("--trace", help="JSONL trace path; {run_id} and {timestamp} are substituted")
    common.add_argument("--plots", action="store_true", default=None, help="Also write SVG plots")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(prog="dbarlab", description="dbar-Neumann compactness experiments")
    parser.add_argument("--version", action="version", version=f"dbarlab {__version__}")
    subparsers = parser.add_subparsers(dest="command", help="Experiment to run")

    subparsers.add_parser("lemma5", parents=[common], help="Frame sums vs q-eigensums on random matrices")

    p = subparsers.add_parser("pq-check", parents=[common], help="Verify a (P_q) certificate")
    p.add_argument("--cert", required=True, help="Certificate JSON file")

    p = subparsers.add_parser("dirichlet", parents=[common], help="Smallest Dirichlet eigenvalue")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--shape", help="square, rectangle, disc, annulus or swiss-cheese")
    source.add_argument("--mask", help="Mask file (rows of 0/1) with a JSON sidecar")
    p.add_argument("--N", dest="grid", type=int, help="Nodes per unit length")

    p = subparsers.add_parser("hartogs", parents=[common], help="Hartogs witness pipeline")
    p.add_argument("--mask", help="Mask file of W (default: built-in Swiss cheese)")
    p.add_argument("--stages", type=int, help="Number of stages K")
    p.add_argument("--grid", type=int, help="Nodes per unit length")
    p.add_argument("--epsilons", type=float, nargs="+", help="Epsilon sweep")

    p = subparsers.add_parser("wedge", parents=[common], help="Wedge Bergman-restriction witness")
    p.add_argument("--m", type=int, help="Family size")

    p = subparsers.add_parser("reinhardt", parents=[common], help="Compactness verdict on a Reinhardt domain")
    p.add_argument("--model", required=True, help="Model JSON file or built-in name")
    p.add_argument("--q", type=int, help="Form degree")

    p = subparsers.add_parser("commutator", parents=[common], help="Singular values of [P, zbar_j]")
    p.add_argument("--model", required=True, help="Model JSON file or built-in name")
    p.add_argument("--j", type=int, help="Coordinate of the multiplier (1-based)")
    p.add_argument("--cutoff", type=int, help="Degree cutoff")

    subparsers.add_parser("eq3-sanity", parents=[common], help="Diameter bound on product-example forms")

    p = subparsers.add_parser("suite", parents=[common], help="Default suite and bundle.json")
    p.add_argument("--stages", type=int, help="Hartogs stages")
    p.add_argument("--grid", type=int, help="Hartogs grid resolution")
    p.add_argument("--cutoff", type=int, help="Commutator degree cutoff")

    p = subparsers.add_parser("trace", help="Summarise a JSONL trace")
    p.add_argument("input", help="Trace file (.jsonl)")
    return parser


def _overrides(args: argparse.Namespace) -> Dict:
    keys = ("out", "seed", "trace", "plots", "cert", "shape", "mask", "grid", "stages", "epsilons", "m", "model",
            "q", "j", "cutoff")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _experiment_args(config: ExperimentConfig) -> Dict:
    name = config.experiment
    if name == "pq-check":
        return {"cert": str(config.cert)}
    if name == "dirichlet":
        return {"shape": config.shape, "mask": str(config.mask) if config.mask else None, "N": config.grid}
    if name == "hartogs":
        args = {"stages": config.stages, "grid": config.grid, "epsilons": config.epsilons}
        if config.mask is not None:
            args["mask"] = str(config.mask)
        elif config.shape is not None:
            args["shape"] = config.shape
        return args
    if name == "wedge":
        return {"m": config.m}
    if name == "reinhardt":
        return {"model": config.model, "q": config.q}
    if name == "commutator":
        return {"model": config.model, "j": config.j, "cutoff": config.cutoff}
    return {}


def _print_result(result: ExperimentResult):
    if result.success:
        print(f"{result.experiment_name} [{result.tag}]: {result.verdict}")
        if result.notices:
            print(f"  {len(result.notices)} notice(s)")
        for b in result.breaches:
            stage = f" at {b['stage']}" if b.get("stage") else ""
            print(f"  breach{stage}: {b['quantity']} = {b['value']} (tolerance {b['tolerance']})")
    else:
        print(f"dbarlab {result.experiment_name}: error ({result.error_kind}): {result.error}", file=sys.stderr)


def run(config: ExperimentConfig) -> int:
    """
    Run the configured experiment, write its reports and return the exit status.

    Every computed verdict exits 0. Input errors exit 2, failed internal
    consistency checks exit 3 and anything else exits 1.
    """
    tracing = None
    if config.trace:
        tracing = TracingKit(config.trace)
        tracing.start_run()
    kit = ExperimentKit(DbarExperiments(seed=config.seed, out=config.out, plots=config.plots), tracing=tracing)

    if config.experiment == "suite":
        results: List[ExperimentResult] = run_suite(kit, stages=config.stages, grid=config.grid, m=config.m,
                                                    cutoff=config.cutoff)
    else:
        results = [kit.execute(config.experiment, **_experiment_args(config))]

    for result in results:
        _print_result(result)
        if result.success:
            write_result(result, config.out)
    report_bundle(results, config.out / "bundle.json")
    if tracing:
        tracing.end_run()
        print(f"trace: {tracing.output_file}")

    for result in results:
        if not result.success:
            return _EXIT_CODES.get(result.error_kind, EXIT_INTERNAL)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_INPUT

    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "trace":
        try:
            print(format_trace(load_trace(args.input)))
        except (OSError, ValueError) as e:
            print(f"dbarlab trace: error: {e}", file=sys.stderr)
            return EXIT_INPUT
        return 0

    try:
        config = ExperimentConfig.from_env(args.command, **_overrides(args))
    except (ValidationError, ValueError) as e:
        print(f"dbarlab {args.command}: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
