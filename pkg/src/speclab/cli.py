"""Command-line interface.

Four subcommands mirror the library layers: ``sample`` draws latent
positions and a graph, ``spectrum`` extracts extreme adjacency eigenvalues
from an edge list, ``limits`` evaluates the closed-form laws for a model,
and ``experiment`` runs the Monte Carlo comparison end to end.

Exit codes: 0 success, 1 usage error, 2 invalid input (validation), 3
runtime failure (no convergence, unreadable files), 4 experiment ran but
its statistical acceptance failed. All stdout and file output is a pure
function of the arguments; timing goes to stderr only.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .errors import NotSimpleSpectrum, SpeclabError, ValidationError
from .experiment import (
    ExperimentConfig,
    run_experiment,
    save_histograms,
    save_replicates_csv,
    save_report_json,
)
from .limits import (
    conditional_law,
    limit_law,
    save_conditional_law,
    save_limit_law,
)
from .model import as_mixture, load_model
from .sampling import (
    StreamPurpose,
    load_edges,
    load_latents,
    replicate_seed,
    sample_adjacency,
    sample_latents,
    save_edges,
    save_latents,
)
from .spectral import (
    DEFAULT_TOL,
    dense_eigen_oracle,
    probability_eigenpairs,
    top_eigenpairs_sparse,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _weights_arg(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.split(",")])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"weights must be comma-separated numbers, got {text!r}"
        ) from exc


def _default_threads() -> int:
    raw = os.environ.get("SPECLAB_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="speclab",
        description="Sample low-rank Bernoulli graphs and test eigenvalue "
        "fluctuations against their limiting normal laws.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[], help="draw latent positions and a graph")
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--n", type=int, required=True, help="number of vertices")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument(
        "--replicate", type=int, default=0, help="replicate index for stream derivation"
    )
    p.add_argument("--hollow", action="store_true", help="zero the diagonal")
    p.add_argument("--out-latents", help="write latent positions CSV here")
    p.add_argument("--out-edges", help="write the edge list here")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("spectrum", help="extreme adjacency eigenvalues of an edge list")
    p.add_argument("--edges", required=True, help="edge-list file")
    p.add_argument("--d", type=int, required=True, help="number of extreme eigenvalues")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="residual tolerance")
    p.add_argument("--max-iter", type=int, default=None, help="iteration cap")
    p.add_argument(
        "--oracle",
        action="store_true",
        help="cross-check against a dense eigendecomposition (small graphs)",
    )
    p.add_argument("--out", help="write value,residual CSV here")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("limits", help="closed-form limit laws for a model")
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument(
        "--latents",
        help="latent CSV; evaluates the conditional law for this draw instead "
        "of the population law",
    )
    p.add_argument("--out", help="write the law as JSON here")
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("experiment", help="Monte Carlo check of a limit law")
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument(
        "--mode", choices=["population", "conditional"], default="population"
    )
    p.add_argument("--n", type=int, required=True, help="vertices per graph")
    p.add_argument("--replicates", type=int, required=True, help="number of graphs")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--d", type=int, default=None, help="top-d override")
    p.add_argument(
        "--weights",
        type=_weights_arg,
        default=None,
        help="comma-separated linear combination to test as an extra coordinate",
    )
    p.add_argument("--alpha", type=float, default=0.01, help="family-wise test level")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="solver tolerance")
    p.add_argument("--max-iter", type=int, default=None, help="solver iteration cap")
    p.add_argument("--hollow", action="store_true", help="zero graph diagonals")
    p.add_argument(
        "--diagnostics",
        action="store_true",
        help="record the expansion terms of each centered eigenvalue",
    )
    p.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help="worker processes (default: SPECLAB_THREADS or 1; results do not "
        "depend on this)",
    )
    p.add_argument("--out-report", help="write the JSON summary here")
    p.add_argument("--out-replicates", help="write the per-replicate CSV here")
    p.add_argument("--out-histograms", help="write per-coordinate histogram CSVs here")
    p.set_defaults(func=cmd_experiment)

    return parser


def cmd_sample(args) -> int:
    mixture = as_mixture(load_model(args.model))
    latents = sample_latents(
        mixture, args.n, replicate_seed(args.seed, args.replicate, StreamPurpose.LATENTS)
    )
    graph = sample_adjacency(
        latents,
        replicate_seed(args.seed, args.replicate, StreamPurpose.ADJACENCY),
        hollow=args.hollow,
    )
    print(
        f"sampled n={graph.n} d={mixture.dim} edges={graph.edge_count} "
        f"hollow={1 if args.hollow else 0}"
    )
    if args.out_latents:
        save_latents(latents, args.out_latents)
        print(f"wrote latents to {args.out_latents}")
    if args.out_edges:
        save_edges(graph, args.out_edges)
        print(f"wrote edges to {args.out_edges}")
    return 0


def cmd_spectrum(args) -> int:
    graph = load_edges(args.edges)
    result = top_eigenpairs_sparse(graph, args.d, tol=args.tol, max_iter=args.max_iter)
    for k in range(result.d):
        print(
            f"value_{k + 1} {result.values[k]:.17g} residual {result.residuals[k]:.3e}"
        )
    if result.iterations is not None:
        print(f"iterations {result.iterations}")
    if args.oracle:
        oracle = dense_eigen_oracle(graph, args.d)
        diff = float(np.max(np.abs(result.values - oracle.values)))
        print(f"oracle max |difference| {diff:.3e}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("value,residual\n")
            for k in range(result.d):
                fh.write(f"{result.values[k]:.17g},{result.residuals[k]:.17g}\n")
        print(f"wrote spectrum to {args.out}")
    return 0


def cmd_limits(args) -> int:
    mixture = as_mixture(load_model(args.model))
    if args.latents is None:
        try:
            law = limit_law(mixture)
        except NotSimpleSpectrum as exc:
            print(f"error: {exc}", file=sys.stderr)
            print(
                "hint: the joint population law needs all reference eigenvalues "
                "simple; pass --latents to evaluate the conditional law for a "
                "concrete draw instead",
                file=sys.stderr,
            )
            return 2
        print("population law")
        print("eta " + " ".join(_fmt(v) for v in law.mean_offset))
        for i in range(law.dim):
            print(f"Gamma_{i + 1} " + " ".join(_fmt(v) for v in law.covariance[i]))
        if args.out:
            save_limit_law(law, args.out)
            print(f"wrote law to {args.out}")
        return 0
    sample = load_latents(args.latents, mixture.signature)
    p_eigs = probability_eigenpairs(sample)
    law = conditional_law(sample, p_eigs)
    print("conditional law")
    print("reference " + " ".join(_fmt(v) for v in p_eigs.values))
    print("eta_tilde " + " ".join(_fmt(v) for v in law.mean_offset))
    print("sigma2 " + " ".join(_fmt(v) for v in law.variances))
    print(
        "sigma2_matrix_form "
        + " ".join(_fmt(v) for v in law.variances_matrix_form)
    )
    if args.out:
        save_conditional_law(law, args.out)
        print(f"wrote law to {args.out}")
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig(
        model=load_model(args.model),
        n=args.n,
        replicates=args.replicates,
        master_seed=args.seed,
        mode=args.mode,
        d=args.d,
        weights=args.weights,
        alpha=args.alpha,
        solver_tol=args.tol,
        max_iter=args.max_iter,
        hollow=args.hollow,
        diagnostics=args.diagnostics,
        threads=args.threads,
    )
    start = time.monotonic()
    report = run_experiment(cfg)
    elapsed = time.monotonic() - start
    print(f"elapsed {elapsed:.1f}s", file=sys.stderr)
    print(
        f"experiment mode={report.mode} n={report.n} replicates={report.replicates} "
        f"d={report.d} seed={report.master_seed}"
    )
    print(f"law {report.law_applicability}")
    for entry in report.ks:
        if entry.degenerate:
            print(f"ks {entry.coordinate}: degenerate (not tested)")
        else:
            flag = "pass" if entry.passed else "FAIL"
            suffix = "" if entry.reference == "theory" else f" [{entry.reference}]"
            print(
                f"ks {entry.coordinate}: D={_fmt(entry.statistic)} "
                f"p={_fmt(entry.p_value)} {flag}{suffix}"
            )
    if report.failures or report.retries or report.ambiguous_matches:
        print(
            f"solver failures={report.failures} retries={report.retries} "
            f"ambiguous_matches={report.ambiguous_matches}"
        )
    print(
        f"overall {'pass' if report.overall_pass else 'FAIL'} "
        f"(alpha={_fmt(report.alpha)}, bonferroni={_fmt(report.bonferroni_alpha)})"
    )
    if args.out_report:
        save_report_json(report, args.out_report)
        print(f"wrote report to {args.out_report}")
    if args.out_replicates:
        save_replicates_csv(report, args.out_replicates)
        print(f"wrote replicates to {args.out_replicates}")
    if args.out_histograms:
        save_histograms(report, args.out_histograms)
        print(f"wrote histograms to {args.out_histograms}")
    return 0 if report.overall_pass else 4


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpeclabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
