"""Monte Carlo verification of the limit laws.

``run_experiment`` samples many graphs, extracts extreme adjacency
eigenvalues, pairs them with the eigenvalues of the per-replicate (or fixed)
probability matrix, and compares the centered fluctuations against the
predicted normal law with Kolmogorov-Smirnov tests. Reports are pure
functions of (model, config, master seed): replicate streams are derived
with ``replicate_seed`` and aggregation is order-fixed, so the same report
comes out byte for byte regardless of worker count.

Two modes:

* ``population``: latent positions are redrawn every replicate, and centered
  eigenvalues are tested against the joint population law. If that law does
  not apply (repeated reference eigenvalues) the test degrades to a flagged
  shape check against a normal fitted to the empirical moments.
* ``conditional``: one latent draw is fixed for all replicates, centered
  eigenvalues are standardized by the conditional law, and each coordinate
  is tested against the standard normal.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.optimize
import scipy.special
from numpy.typing import NDArray

from .errors import DegenerateVariance, NoConvergence, ValidationError
from .limits import (
    ConditionalLaw,
    LimitLaw,
    conditional_law,
    conditional_law_to_dict,
    decomposition_diagnostic,
    limit_covariance,
    limit_law_to_dict,
    limit_mean_offsets,
    population_moments,
)
from .model import BlockModelParams, LatentMixture, as_mixture
from .sampling import (
    LatentSample,
    ProbabilityMatrix,
    StreamPurpose,
    probability_matrix,
    replicate_seed,
    sample_adjacency,
    sample_latents,
)
from .spectral import DEFAULT_TOL, SpectralResult, probability_eigenpairs, top_eigenpairs_sparse

logger = logging.getLogger("speclab")

MATCH_AMBIGUITY_TOL = 1e-9
_MATCH_PENALTY = 1e30
_BRUTE_FORCE_MAX_D = 8
_FAILURE_FRACTION = 0.01
_DENSE_PROB_CACHE_MAX_N = 4500


class MatchResult(NamedTuple):
    permutation: NDArray[np.intp]
    ambiguous: bool


def match_eigenvalues(
    values: NDArray,
    reference: NDArray,
    sign_floor: float = 0.0,
    return_details: bool = False,
):
    """Pair candidate eigenvalues with reference eigenvalues.

    Returns the permutation ``perm`` minimizing total absolute difference,
    so ``values[perm][i]`` matches ``reference[i]``. Pairings that flip the
    sign are forbidden unless the magnitudes involved are at most
    ``sign_floor``. Up to 8 coordinates every permutation is scored; if the
    best two assignments differ by less than MATCH_AMBIGUITY_TOL the match
    is ambiguous, a warning is logged, and the identity is returned. Beyond
    8 coordinates the assignment is solved exactly but without the
    ambiguity audit.
    """
    values = np.asarray(values, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if values.shape != reference.shape or values.ndim != 1:
        raise ValidationError(
            f"need equal-length vectors, got {values.shape} and {reference.shape}"
        )
    d = values.shape[0]
    cost = np.abs(values[None, :] - reference[:, None])
    sign_clash = (
        (np.sign(values[None, :]) * np.sign(reference[:, None]) < 0)
        & (np.abs(values[None, :]) > sign_floor)
        & (np.abs(reference[:, None]) > sign_floor)
    )
    cost = cost + sign_clash * _MATCH_PENALTY
    ambiguous = False
    if d <= _BRUTE_FORCE_MAX_D:
        perms = np.array(list(itertools.permutations(range(d))))
        totals = cost[np.arange(d)[None, :], perms].sum(axis=1)
        order = np.argsort(totals, kind="stable")
        best = perms[order[0]]
        if totals[order[0]] >= _MATCH_PENALTY:
            logger.warning(
                "no sign-consistent eigenvalue assignment exists; "
                "using the unsigned optimum"
            )
        if d > 1 and totals[order[1]] - totals[order[0]] < MATCH_AMBIGUITY_TOL:
            logger.warning(
                "eigenvalue matching ambiguous (best assignments differ by "
                "%.3g); falling back to identity",
                float(totals[order[1]] - totals[order[0]]),
            )
            ambiguous = True
            best = np.arange(d)
        perm = np.asarray(best, dtype=np.intp)
    else:
        rows, cols = scipy.optimize.linear_sum_assignment(cost)
        perm = cols[np.argsort(rows)].astype(np.intp)
    result = MatchResult(permutation=perm, ambiguous=ambiguous)
    return result if return_details else result.permutation


def kolmogorov_sf(t: float) -> float:
    """Survival function of the Kolmogorov distribution.

    Two complementary series are used: the alternating tail series for
    t >= 1 and the theta-function form for small t, each truncated once
    terms drop below 1e-16.
    """
    if t <= 0.0:
        return 1.0
    if t < 1.0:
        total = 0.0
        k = 1
        while k < 200:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * t * t))
            total += term
            if term < 1e-16:
                break
            k += 1
        cdf = math.sqrt(2.0 * math.pi) / t * total
        return float(min(1.0, max(0.0, 1.0 - cdf)))
    total = 0.0
    sign = 1.0
    k = 1
    while k < 200:
        term = math.exp(-2.0 * k * k * t * t)
        total += sign * term
        if term < 1e-16:
            break
        sign = -sign
        k += 1
    return float(min(1.0, max(0.0, 2.0 * total)))


class KsResult(NamedTuple):
    statistic: float
    p_value: float


def ks_test(samples: NDArray, mean: float, variance: float) -> KsResult:
    """One-sample Kolmogorov-Smirnov test against N(mean, variance).

    The p-value uses the asymptotic law of sqrt(m) D, which is accurate for
    sample counts in the dozens and beyond; the statistic itself is exact
    for any m >= 1.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    m = samples.shape[0]
    if m < 1:
        raise ValidationError("need at least one sample")
    if not np.all(np.isfinite(samples)):
        raise ValidationError("samples must be finite")
    if not variance > 0.0:
        raise DegenerateVariance(f"variance must be positive, got {variance}")
    z = np.sort((samples - mean) / math.sqrt(variance))
    cdf = scipy.special.ndtr(z)
    grid = np.arange(m, dtype=np.float64)
    d_plus = float(np.max((grid + 1.0) / m - cdf))
    d_minus = float(np.max(cdf - grid / m))
    stat = max(d_plus, d_minus)
    return KsResult(statistic=stat, p_value=kolmogorov_sf(math.sqrt(m) * stat))


def empirical_moments(values: NDArray) -> tuple[NDArray, NDArray]:
    """Sample mean vector and unbiased covariance matrix of row vectors.

    A flat input vector is treated as m observations of one coordinate.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise ValidationError(f"need a vector or matrix, got shape {values.shape}")
    m = values.shape[0]
    if m < 2:
        raise ValidationError(f"need at least 2 observations, got {m}")
    mean = values.mean(axis=0)
    cov = np.atleast_2d(np.cov(values, rowvar=False, ddof=1))
    return mean, cov


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Declarative description of one Monte Carlo experiment."""

    model: BlockModelParams | LatentMixture
    n: int
    replicates: int
    master_seed: int
    mode: str = "population"
    d: int | None = None
    weights: NDArray | None = None
    alpha: float = 0.01
    solver_tol: float = DEFAULT_TOL
    max_iter: int | None = None
    hollow: bool = False
    gap_tolerance: float = 1e-6
    diagnostics: bool = False
    threads: int = 1
    retry_on_no_convergence: bool = True

    def __post_init__(self) -> None:
        if self.mode not in ("population", "conditional"):
            raise ValidationError(
                f'mode must be "population" or "conditional", got {self.mode!r}'
            )
        if self.replicates < 2:
            raise ValidationError(f"need at least 2 replicates, got {self.replicates}")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.threads < 1:
            raise ValidationError(f"threads must be positive, got {self.threads}")
        if self.weights is not None:
            if self.mode != "population":
                raise ValidationError("weights apply to population mode only")
            w = np.asarray(self.weights, dtype=np.float64)
            if w.ndim != 1 or not np.all(np.isfinite(w)) or not np.any(w != 0):
                raise ValidationError("weights must be a finite nonzero vector")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True, eq=False)
class ReplicateRecord:
    """Matched eigenvalues and derived statistics of one replicate."""

    index: int
    values: NDArray[np.float64]
    reference: NDArray[np.float64]
    centered: NDArray[np.float64]
    standardized: NDArray[np.float64] | None
    weighted: float | None
    ambiguous: bool
    retried: bool
    linear_term: NDArray[np.float64] | None = None
    quadratic_term: NDArray[np.float64] | None = None
    residual: NDArray[np.float64] | None = None


@dataclass(frozen=True, eq=False)
class KsEntry:
    """One Kolmogorov-Smirnov comparison in a report."""

    coordinate: str
    mean: float | None
    variance: float | None
    statistic: float | None
    p_value: float | None
    passed: bool | None
    reference: str = "theory"
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """Everything an experiment produced, JSON-serializable via to_dict."""

    mode: str
    n: int
    replicates: int
    master_seed: int
    d: int
    alpha: float
    bonferroni_alpha: float
    signature: tuple[int, int]
    law_applicability: str
    population_law: LimitLaw | None
    conditional_ref: ConditionalLaw | None
    reference_simple_flags: list[bool]
    empirical_mean: NDArray[np.float64]
    empirical_cov: NDArray[np.float64]
    ks: list[KsEntry]
    overall_pass: bool
    records: list[ReplicateRecord]
    failures: int
    retries: int
    ambiguous_matches: int
    weights: NDArray[np.float64] | None
    hollow: bool
    solver_tol: float

    def to_dict(self) -> dict:
        doc = {
            "mode": self.mode,
            "n": self.n,
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "d": self.d,
            "alpha": self.alpha,
            "bonferroni_alpha": self.bonferroni_alpha,
            "signature": {"p": self.signature[0], "q": self.signature[1]},
            "hollow": self.hollow,
            "solver_tol": self.solver_tol,
            "law_applicability": self.law_applicability,
            "reference_simple_flags": list(self.reference_simple_flags),
            "empirical": {
                "mean": self.empirical_mean.tolist(),
                "covariance": self.empirical_cov.tolist(),
                "count": self.replicates - self.failures,
            },
            "ks": [
                {
                    "coordinate": e.coordinate,
                    "mean": e.mean,
                    "variance": e.variance,
                    "statistic": e.statistic,
                    "p_value": e.p_value,
                    "passed": e.passed,
                    "reference": e.reference,
                    "degenerate": e.degenerate,
                }
                for e in self.ks
            ],
            "overall_pass": self.overall_pass,
            "runtime": {
                "failures": self.failures,
                "retries": self.retries,
                "ambiguous_matches": self.ambiguous_matches,
            },
        }
        if self.weights is not None:
            doc["weights"] = self.weights.tolist()
        if self.population_law is not None:
            doc["population_law"] = limit_law_to_dict(self.population_law)
        if self.conditional_ref is not None:
            doc["conditional_law"] = conditional_law_to_dict(self.conditional_ref)
        return doc


@dataclass(frozen=True, eq=False)
class _Plan:
    """Everything a worker needs to run one replicate."""

    mixture: LatentMixture
    n: int
    d: int
    master_seed: int
    mode: str
    solver_tol: float
    max_iter: int | None
    hollow: bool
    diagnostics: bool
    retry: bool
    fixed_sample: LatentSample | None
    fixed_eigs: SpectralResult | None
    fixed_probabilities: ProbabilityMatrix | None
    cond_offsets: NDArray | None
    cond_sigmas: NDArray | None


_WORKER_PLAN: _Plan | None = None


def _worker_init(plan: _Plan) -> None:
    global _WORKER_PLAN
    _WORKER_PLAN = plan


def _worker_run(index: int):
    return _run_replicate(_WORKER_PLAN, index)


def _slice_eigs(eigs: SpectralResult, d: int) -> SpectralResult:
    if eigs.d == d:
        return eigs
    return SpectralResult(
        values=eigs.values[:d],
        vectors=eigs.vectors[:, :d],
        residuals=eigs.residuals[:d],
        converged=eigs.converged,
        iterations=eigs.iterations,
        reduced_vectors=None
        if eigs.reduced_vectors is None
        else eigs.reduced_vectors[:, :d],
    )


def _run_replicate(plan: _Plan, index: int):
    """One replicate; returns (index, ReplicateRecord | None on failure)."""
    if plan.mode == "population":
        latents = sample_latents(
            plan.mixture, plan.n, replicate_seed(plan.master_seed, index, StreamPurpose.LATENTS)
        )
        ref_eigs = _slice_eigs(probability_eigenpairs(latents), plan.d)
        probabilities = None
    else:
        latents = plan.fixed_sample
        ref_eigs = plan.fixed_eigs
        probabilities = plan.fixed_probabilities
    graph = sample_adjacency(
        latents,
        replicate_seed(plan.master_seed, index, StreamPurpose.ADJACENCY),
        hollow=plan.hollow,
        probabilities=probabilities,
    )
    retried = False
    try:
        adj_eigs = top_eigenpairs_sparse(
            graph, plan.d, tol=plan.solver_tol, max_iter=plan.max_iter
        )
    except NoConvergence:
        if not plan.retry:
            return index, None
        retried = True
        base_iter = plan.max_iter if plan.max_iter is not None else 10 * plan.d + 200
        try:
            adj_eigs = top_eigenpairs_sparse(
                graph, plan.d, tol=plan.solver_tol, max_iter=2 * base_iter
            )
        except NoConvergence:
            return index, None
    sign_floor = 2.0 * plan.solver_tol * max(float(graph.degrees().max()), 1.0)
    match = match_eigenvalues(
        adj_eigs.values, ref_eigs.values, sign_floor=sign_floor, return_details=True
    )
    matched = adj_eigs.values[match.permutation]
    centered = matched - ref_eigs.values
    standardized = None
    if plan.mode == "conditional":
        standardized = np.empty(plan.d)
        for i in range(plan.d):
            if plan.cond_sigmas[i] > 0.0:
                standardized[i] = (centered[i] - plan.cond_offsets[i]) / plan.cond_sigmas[i]
            else:
                standardized[i] = 0.0 if centered[i] == plan.cond_offsets[i] else np.inf
    linear = quadratic = residual = None
    if plan.diagnostics:
        diag = decomposition_diagnostic(graph, latents, ref_eigs, matched)
        linear, quadratic, residual = diag.linear_term, diag.quadratic_term, diag.residual
    record = ReplicateRecord(
        index=index,
        values=matched,
        reference=ref_eigs.values.copy(),
        centered=centered,
        standardized=standardized,
        weighted=None,
        ambiguous=match.ambiguous,
        retried=retried,
        linear_term=linear,
        quadratic_term=quadratic,
        residual=residual,
    )
    return index, record


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run the Monte Carlo experiment described by ``cfg``."""
    mixture = as_mixture(cfg.model)
    d_full = mixture.dim
    d = cfg.d if cfg.d is not None else d_full
    if not 1 <= d <= d_full:
        raise ValidationError(f"need 1 <= d <= {d_full}, got d={d}")
    if cfg.n < 10 * d:
        raise ValidationError(
            f"need n >= 10 d for a meaningful spectrum, got n={cfg.n}, d={d}"
        )
    if cfg.weights is not None and cfg.weights.shape[0] != d:
        raise ValidationError(
            f"weights have length {cfg.weights.shape[0]}, need {d}"
        )
    mom = population_moments(mixture, cfg.gap_tolerance)
    simple_flags = mom.simple_flags[:d]
    population_law: LimitLaw | None = None
    applicability = "joint"
    if cfg.mode == "population":
        if mom.all_simple:
            population_law = LimitLaw(
                mean_offset=limit_mean_offsets(mom, mixture)[:d],
                covariance=limit_covariance(mom, mixture)[:d, :d],
            )
        else:
            applicability = "inapplicable"
            logger.warning(
                "population law inapplicable (non-simple reference spectrum); "
                "KS tests degrade to flagged shape checks"
            )
    cond_ref: ConditionalLaw | None = None
    fixed_sample = fixed_eigs = fixed_probabilities = None
    cond_offsets = cond_sigmas = None
    if cfg.mode == "conditional":
        applicability = "conditional"
        fixed_sample = sample_latents(
            mixture, cfg.n, replicate_seed(cfg.master_seed, 0, StreamPurpose.LATENTS)
        )
        fixed_eigs = _slice_eigs(probability_eigenpairs(fixed_sample), d)
        cond_ref = conditional_law(fixed_sample, fixed_eigs)
        cond_offsets = cond_ref.mean_offset
        cond_sigmas = np.sqrt(cond_ref.variances)
        if cfg.threads == 1 and cfg.n <= _DENSE_PROB_CACHE_MAX_N:
            fixed_probabilities = probability_matrix(fixed_sample)
    plan = _Plan(
        mixture=mixture,
        n=cfg.n,
        d=d,
        master_seed=cfg.master_seed,
        mode=cfg.mode,
        solver_tol=cfg.solver_tol,
        max_iter=cfg.max_iter,
        hollow=cfg.hollow,
        diagnostics=cfg.diagnostics,
        retry=cfg.retry_on_no_convergence,
        fixed_sample=fixed_sample,
        fixed_eigs=fixed_eigs,
        fixed_probabilities=fixed_probabilities,
        cond_offsets=cond_offsets,
        cond_sigmas=cond_sigmas,
    )
    indices = range(cfg.replicates)
    results: list[tuple[int, ReplicateRecord | None]] = []
    if cfg.threads == 1:
        for r in indices:
            results.append(_run_replicate(plan, r))
    else:
        with ProcessPoolExecutor(
            max_workers=cfg.threads, initializer=_worker_init, initargs=(plan,)
        ) as pool:
            chunk = max(1, cfg.replicates // (cfg.threads * 8))
            results = list(pool.map(_worker_run, indices, chunksize=chunk))
    results.sort(key=lambda pair: pair[0])
    records = [rec for _, rec in results if rec is not None]
    failures = cfg.replicates - len(records)
    if failures > _FAILURE_FRACTION * cfg.replicates:
        raise NoConvergence(
            f"{failures} of {cfg.replicates} replicates failed to converge"
        )
    if cfg.weights is not None:
        records = [
            ReplicateRecord(
                index=rec.index,
                values=rec.values,
                reference=rec.reference,
                centered=rec.centered,
                standardized=rec.standardized,
                weighted=float(cfg.weights @ rec.centered),
                ambiguous=rec.ambiguous,
                retried=rec.retried,
                linear_term=rec.linear_term,
                quadratic_term=rec.quadratic_term,
                residual=rec.residual,
            )
            for rec in records
        ]
    centered = np.array([rec.centered for rec in records])
    emp_mean, emp_cov = empirical_moments(centered)
    ks_entries: list[KsEntry] = []
    if cfg.mode == "population":
        if applicability == "joint":
            for i in range(d):
                mean_i = float(population_law.mean_offset[i])
                var_i = float(population_law.covariance[i, i])
                res = ks_test(centered[:, i], mean_i, var_i)
                ks_entries.append(
                    KsEntry(
                        coordinate=f"value_{i + 1}",
                        mean=mean_i,
                        variance=var_i,
                        statistic=res.statistic,
                        p_value=res.p_value,
                        passed=None,
                    )
                )
            if cfg.weights is not None:
                w = cfg.weights
                mean_w = float(w @ population_law.mean_offset)
                var_w = float(w @ population_law.covariance @ w)
                series = np.array([rec.weighted for rec in records])
                res = ks_test(series, mean_w, var_w)
                ks_entries.append(
                    KsEntry(
                        coordinate="weighted",
                        mean=mean_w,
                        variance=var_w,
                        statistic=res.statistic,
                        p_value=res.p_value,
                        passed=None,
                    )
                )
        else:
            for i in range(d):
                var_i = float(emp_cov[i, i])
                if var_i > 0.0:
                    res = ks_test(centered[:, i], float(emp_mean[i]), var_i)
                    ks_entries.append(
                        KsEntry(
                            coordinate=f"value_{i + 1}",
                            mean=float(emp_mean[i]),
                            variance=var_i,
                            statistic=res.statistic,
                            p_value=res.p_value,
                            passed=None,
                            reference="empirical",
                        )
                    )
                else:
                    ks_entries.append(
                        KsEntry(
                            coordinate=f"value_{i + 1}",
                            mean=float(emp_mean[i]),
                            variance=var_i,
                            statistic=None,
                            p_value=None,
                            passed=None,
                            reference="empirical",
                            degenerate=True,
                        )
                    )
    else:
        standardized = np.array([rec.standardized for rec in records])
        for i in range(d):
            if cond_sigmas[i] > 0.0 and np.all(np.isfinite(standardized[:, i])):
                res = ks_test(standardized[:, i], 0.0, 1.0)
                ks_entries.append(
                    KsEntry(
                        coordinate=f"value_{i + 1}",
                        mean=0.0,
                        variance=1.0,
                        statistic=res.statistic,
                        p_value=res.p_value,
                        passed=None,
                    )
                )
            else:
                ks_entries.append(
                    KsEntry(
                        coordinate=f"value_{i + 1}",
                        mean=None,
                        variance=None,
                        statistic=None,
                        p_value=None,
                        passed=None,
                        degenerate=True,
                    )
                )
    tested = [e for e in ks_entries if not e.degenerate]
    bonferroni = cfg.alpha / max(1, len(tested))
    finished: list[KsEntry] = []
    for e in ks_entries:
        if e.degenerate:
            finished.append(e)
        else:
            finished.append(
                KsEntry(
                    coordinate=e.coordinate,
                    mean=e.mean,
                    variance=e.variance,
                    statistic=e.statistic,
                    p_value=e.p_value,
                    passed=bool(e.p_value > bonferroni),
                    reference=e.reference,
                    degenerate=False,
                )
            )
    overall = all(e.passed for e in finished if not e.degenerate)
    return ExperimentReport(
        mode=cfg.mode,
        n=cfg.n,
        replicates=cfg.replicates,
        master_seed=cfg.master_seed,
        d=d,
        alpha=cfg.alpha,
        bonferroni_alpha=bonferroni,
        signature=(mixture.signature.plus, mixture.signature.minus),
        law_applicability=applicability,
        population_law=population_law,
        conditional_ref=cond_ref,
        reference_simple_flags=[bool(f) for f in simple_flags],
        empirical_mean=emp_mean,
        empirical_cov=emp_cov,
        ks=finished,
        overall_pass=bool(overall),
        records=records,
        failures=failures,
        retries=sum(1 for rec in records if rec.retried),
        ambiguous_matches=sum(1 for rec in records if rec.ambiguous),
        weights=cfg.weights,
        hollow=cfg.hollow,
        solver_tol=cfg.solver_tol,
    )


def _format_float(x: float) -> str:
    return f"{x:.17g}"


def save_replicates_csv(report: ExperimentReport, path: str | Path) -> None:
    """Per-replicate table: matched values, references, centered statistics,
    plus standardized values, the weighted coordinate, and expansion terms
    when the experiment produced them."""
    d = report.d
    cols = ["replicate"]
    cols += [f"value_{i + 1}" for i in range(d)]
    cols += [f"reference_{i + 1}" for i in range(d)]
    cols += [f"centered_{i + 1}" for i in range(d)]
    has_std = report.mode == "conditional"
    if has_std:
        cols += [f"standardized_{i + 1}" for i in range(d)]
    has_weighted = report.weights is not None
    if has_weighted:
        cols.append("weighted")
    has_diag = any(rec.linear_term is not None for rec in report.records)
    if has_diag:
        cols += [f"linear_term_{i + 1}" for i in range(d)]
        cols += [f"quadratic_term_{i + 1}" for i in range(d)]
        cols += [f"residual_{i + 1}" for i in range(d)]
    cols += ["ambiguous", "retried"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for rec in report.records:
            row = [str(rec.index)]
            row += [_format_float(v) for v in rec.values]
            row += [_format_float(v) for v in rec.reference]
            row += [_format_float(v) for v in rec.centered]
            if has_std:
                row += [_format_float(v) for v in rec.standardized]
            if has_weighted:
                row.append(_format_float(rec.weighted))
            if has_diag:
                row += [_format_float(v) for v in rec.linear_term]
                row += [_format_float(v) for v in rec.quadratic_term]
                row += [_format_float(v) for v in rec.residual]
            row += ["1" if rec.ambiguous else "0", "1" if rec.retried else "0"]
            fh.write(",".join(row) + "\n")


def save_report_json(report: ExperimentReport, path: str | Path) -> None:
    """Canonical JSON summary (sorted keys, so bytes are reproducible)."""
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_histograms(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    """One CSV per tested coordinate: bin_left, bin_right, count.

    Population mode bins the centered values, conditional mode the
    standardized ones; the weighted coordinate gets its own file.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    m = len(report.records)
    bins = min(50, max(10, int(math.isqrt(m))))
    written: list[Path] = []

    def _dump(name: str, series: NDArray) -> None:
        counts, edges = np.histogram(series, bins=bins)
        path = out_dir / f"hist_{name}.csv"
        with open(path, "w") as fh:
            fh.write("bin_left,bin_right,count\n")
            for b in range(counts.shape[0]):
                fh.write(
                    f"{_format_float(edges[b])},{_format_float(edges[b + 1])},{counts[b]}\n"
                )
        written.append(path)

    if report.mode == "conditional":
        series = np.array([rec.standardized for rec in report.records])
        finite = np.all(np.isfinite(series), axis=0)
        for i in range(report.d):
            if finite[i]:
                _dump(f"value_{i + 1}", series[:, i])
    else:
        series = np.array([rec.centered for rec in report.records])
        for i in range(report.d):
            _dump(f"value_{i + 1}", series[:, i])
        if report.weights is not None:
            _dump("weighted", np.array([rec.weighted for rec in report.records]))
    return written
