"""Command-line front end.

Example:
    rankspec ptr --input graph.csv --ties midrank --output ranks.csv
    rankspec cluster --input graph.csv --ptr -k 2 --seed 1 --output labels.json
    rankspec experiment contaminated-normal --out results/cn --replicates 20
"""

import argparse
import inspect
import logging
import pathlib
import sys

import numpy as np

from . import matrix_io
from .blockmodel import load_spec, population_matrices, sample_matrix
from .clustering import (
    DIMENSION_RULES,
    adjusted_rand_index,
    embed,
    relative_errors,
    select_dimension,
    spectral_cluster,
)
from .errors import ArgumentError, ModelError, NumericalError, VerificationError
from .experiments import EXPERIMENTS, ExperimentReport, verify_moments
from .linalg import eigs_topk
from .ranks import TIE_MODES, pass_to_ranks
from .utils import find_full_path, memoized_result
from .version import __version__

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _dimension(value: str):
    if value == "auto":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer or 'auto', got {value!r}")


def _matrix_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--input", help="matrix file (.csv dense, otherwise tab-separated edge list)")
    parent.add_argument("--format", choices=matrix_io.MATRIX_FORMATS, help="override the format inferred from the suffix")
    parent.add_argument("--header", action="store_true", help="dense CSV starts with a header row")
    parent.add_argument(
        "--missing",
        choices=("error", "zero"),
        default="error",
        help="policy for node pairs absent from an edge list",
    )
    parent.add_argument(
        "--largest-component",
        action="store_true",
        help="restrict to the largest connected component of the nonzero pattern",
    )
    return parent


def _selection_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--ties", choices=TIE_MODES, default="strict")
    parent.add_argument("--rule", choices=DIMENSION_RULES, default="practical")
    parent.add_argument("--eps-p", type=float, default=0.1, help="exponent slack of the lemma rule")
    parent.add_argument("--max-d", type=int, default=50, help="magnitudes the profile rule considers")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankspec",
        description="Robust spectral clustering of weighted graphs with pass-to-ranks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging"
    )
    commands = parser.add_subparsers(dest="command", required=True)
    matrix, selection = _matrix_parent(), _selection_parent()

    ptr = commands.add_parser("ptr", parents=[matrix], help="pass-to-ranks transform")
    ptr.add_argument("--ties", choices=TIE_MODES, default="strict")
    ptr.add_argument("--output", required=True)

    embedding = commands.add_parser(
        "embed", parents=[matrix, selection], help="truncated eigendecomposition"
    )
    embedding.add_argument("--ptr", action="store_true", help="embed the pass-to-ranks matrix")
    embedding.add_argument("-d", type=_dimension, default="auto")
    embedding.add_argument("--output", required=True)

    cluster = commands.add_parser(
        "cluster", parents=[matrix, selection], help="spectral clustering"
    )
    cluster.add_argument("--ptr", action="store_true", help="cluster the pass-to-ranks matrix")
    cluster.add_argument("-k", type=int, required=True, help="number of blocks")
    cluster.add_argument("-d", type=_dimension, default="auto")
    cluster.add_argument("--eps-k", type=float, default=0.05)
    cluster.add_argument("--restarts", type=int, default=10)
    cluster.add_argument("--seed", type=int, default=None)
    cluster.add_argument("--truth", help="labels JSON to score the clustering against")
    cluster.add_argument("--output", required=True)

    select = commands.add_parser(
        "select-dim", parents=[matrix, selection], help="print the selected embedding dimension"
    )
    select.add_argument("--ptr", action="store_true", help="use the pass-to-ranks spectrum")

    simulate = commands.add_parser("simulate", help="sample a matrix from a JSON model spec")
    simulate.add_argument("--spec", required=True)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--output", required=True)
    simulate.add_argument("--labels", help="also write the block labels JSON here")

    moments = commands.add_parser("moments", help="population and exact rank moments")
    moments.add_argument("--spec", required=True)
    moments.add_argument("--output", required=True, help="output directory")

    verify = commands.add_parser(
        "verify-moments", help="Monte Carlo check of the exact rank moments"
    )
    verify.add_argument("--spec", required=True)
    verify.add_argument("--replicates", type=int, default=20000)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out", help="also write the report to this directory")

    experiment = commands.add_parser(
        "experiment", parents=[matrix], help="run a named Monte Carlo study"
    )
    experiment.add_argument("name", choices=sorted(EXPERIMENTS))
    experiment.add_argument("--out", required=True, help="report directory")
    experiment.add_argument("--seed", type=int, default=None)
    experiment.add_argument("--replicates", type=int, default=None)
    experiment.add_argument("--n", type=int, default=None)
    experiment.add_argument("--epsilon", type=float, default=None)
    experiment.add_argument("--which", choices=("gamma", "exponential"), default=None)
    experiment.add_argument("--labels", help="reference labels JSON (graph-comparison)")
    experiment.add_argument("--reuse", action="store_true", help="reuse an identical earlier run")
    experiment.add_argument("--strict", action="store_true", help="exit 3 when a pass flag fails")
    return parser


def _load_matrix(args) -> tuple:
    if not args.input:
        raise ArgumentError("--input is required")
    loaded = matrix_io.MatrixFile(
        find_full_path(None, args.input), args.format, args.header, args.missing
    )
    a = loaded.matrix
    kept = np.arange(a.shape[0])
    if args.largest_component:
        a, kept = matrix_io.largest_connected_component(a)
    return a, kept


def _ptr(args):
    a, _ = _load_matrix(args)
    matrix_io.write_matrix_csv(args.output, pass_to_ranks(a, args.ties))


def _embed(args):
    a, _ = _load_matrix(args)
    result = embed(a, args.d, args.ptr, args.ties, args.rule, args.eps_p, args.max_d)
    logger.info(f"Embedding dimension {result.d}")
    matrix_io.write_embedding_csv(args.output, result)


def _cluster(args):
    a, kept = _load_matrix(args)
    result = spectral_cluster(
        a,
        args.k,
        d=args.d,
        ptr=args.ptr,
        epsilon_k=args.eps_k,
        seed=args.seed,
        restarts=args.restarts,
        tie_mode=args.ties,
        rule=args.rule,
        eps_p=args.eps_p,
        max_d=args.max_d,
    )
    payload = result.to_dict()
    labels = payload.pop("labels")
    if args.largest_component:
        payload["nodes"] = kept.tolist()
    if args.truth:
        truth = matrix_io.read_labels_json(find_full_path(None, args.truth))[kept]
        payload["L"] = relative_errors(result.membership_hat, truth).L
        payload["ari"] = adjusted_rand_index(result.labels, truth)
    matrix_io.write_labels_json(args.output, labels, **payload)


def _select_dim(args):
    a, _ = _load_matrix(args)
    m = pass_to_ranks(a, args.ties) if args.ptr else a
    spectrum = eigs_topk(m, m.shape[0]).eigenvalues
    print(select_dimension(spectrum, m.shape[0], args.rule, args.eps_p, args.max_d))


def _simulate(args):
    spec = load_spec(find_full_path(None, args.spec))
    matrix_io.write_matrix_csv(args.output, sample_matrix(spec, args.seed))
    if args.labels:
        matrix_io.write_labels_json(args.labels, spec.membership.labels)


def _moments(args):
    spec = load_spec(find_full_path(None, args.spec))
    matrices = population_matrices(spec)
    out = pathlib.Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    matrix_io.write_matrix_csv(out / "median.csv", matrices.median)
    matrix_io.write_masked_csv(out / "mean.csv", matrices.mean)
    matrix_io.write_masked_csv(out / "variance.csv", matrices.variance)
    matrix_io.write_matrix_csv(out / "rank_mean.csv", matrices.rank_mean)
    matrix_io.write_matrix_csv(out / "rank_variance.csv", matrices.rank_variance)
    logger.info(f"Wrote population matrices to {out}")


def _verify_moments(args):
    spec = load_spec(find_full_path(None, args.spec))
    report = verify_moments(spec, args.replicates, args.seed)
    if args.out:
        report.write(args.out)
    print(report.summary())
    if not report.passed:
        failed = [name for name, flag in report.pass_flags.items() if not flag.passed]
        raise VerificationError(f"Monte Carlo bands violated: {', '.join(failed)}")


def _experiment_kwargs(args, runner) -> dict:
    accepted = inspect.signature(runner).parameters
    kwargs = {}
    for flag in ("seed", "replicates", "n", "epsilon", "which"):
        value = getattr(args, flag)
        if value is None:
            continue
        if flag not in accepted:
            raise ArgumentError(f"experiment {args.name!r} does not take --{flag}")
        kwargs[flag] = value
    if args.name == "graph-comparison":
        if not args.labels:
            raise ArgumentError("graph-comparison needs --input and --labels")
        a, kept = _load_matrix(args)
        kwargs["a"] = a
        kwargs["labels"] = matrix_io.read_labels_json(find_full_path(None, args.labels))[kept]
    elif args.input or args.labels:
        raise ArgumentError(f"experiment {args.name!r} does not take --input or --labels")
    return kwargs


def _experiment(args):
    runner = EXPERIMENTS[args.name]
    kwargs = _experiment_kwargs(args, runner)

    def run():
        report = runner(**kwargs)
        report.write(args.out)
        return report

    if args.reuse:
        run = memoized_result(
            {"experiment": args.name, "version": __version__, **kwargs},
            args.out,
            load=ExperimentReport.read,
        )(run)
    report = run()
    print(report.summary())
    if args.strict and not report.passed:
        failed = [name for name, flag in report.pass_flags.items() if not flag.passed]
        raise VerificationError(f"experiment {args.name!r} failed: {', '.join(failed)}")


COMMANDS = {
    "ptr": _ptr,
    "embed": _embed,
    "cluster": _cluster,
    "select-dim": _select_dim,
    "simulate": _simulate,
    "moments": _moments,
    "verify-moments": _verify_moments,
    "experiment": _experiment,
}


def main(argv=None) -> int:
    """Run one subcommand and return its exit code.

    0 on success, 1 for argument and model errors, 2 for tie and numerical errors,
    3 for failed Monte Carlo verification.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format=LOG_FORMAT)
    try:
        COMMANDS[args.command](args)
    except (ArgumentError, ModelError, NumericalError, VerificationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0
