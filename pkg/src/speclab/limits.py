"""Closed-form limit laws for extreme eigenvalue fluctuations.

For a latent mixture with second-moment matrix D = E[X X^T], mean m = E[X],
and signature matrix J, the centered extreme adjacency eigenvalues converge
jointly to a normal law whose mean offset and covariance are expectations of
polynomials in the latent position, evaluated here as exact finite sums over
the mixture atoms. The reference eigenpairs are those of the symmetrized
problem D^{1/2} J D^{1/2}, whose spectrum equals that of D J; the law needs
that spectrum to be simple.

Conditionally on one latent draw, each centered extreme eigenvalue is
asymptotically normal with a mean offset and variance that are explicit
functions of the probability matrix and its eigenvectors. Both are computed
here in O(n d^2 + b^2) time by grouping vertices with equal latent rows
(b = number of distinct rows), which also preserves exact zeros when every
edge probability is deterministic. The variance is reported in two forms:
the exact finite-n variance of the quadratic form, and the asymptotic
expression that drops the diagonal Bernoulli correction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import (
    DegenerateVariance,
    NotSimpleSpectrum,
    RequiresPositiveSemidefinite,
    SingularDelta,
    ValidationError,
)
from .model import FORM_TOL, LatentMixture
from .sampling import AdjacencyGraph, LatentSample
from .spectral import SpectralResult, fix_signs, modulus_order

GAP_TOL = 1e-6
SECOND_MOMENT_REL_TOL = 1e-12
FORM_AGREEMENT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PopulationMoments:
    """Mixture moments and the reference eigenproblem they induce.

    ``values``/``vectors`` are the eigenpairs of W J W with W the symmetric
    square root of the second moment, ordered by modulus; ``whitener`` is
    W^{-1}. ``simple_flags[i]`` says eigenvalue i is separated from every
    other by more than the gap tolerance (relative to the largest modulus).
    """

    second_moment: NDArray[np.float64]
    mean: NDArray[np.float64]
    values: NDArray[np.float64]
    vectors: NDArray[np.float64]
    whitener: NDArray[np.float64]
    simple_flags: NDArray[np.bool_]

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def all_simple(self) -> bool:
        return bool(np.all(self.simple_flags))


def population_moments(mix: LatentMixture, gap_tolerance: float = GAP_TOL) -> PopulationMoments:
    """Second moment, mean, and reference eigenpairs of a latent mixture."""
    atoms, weights = mix.atoms, mix.weights
    second = (atoms * weights[:, None]).T @ atoms
    second = (second + second.T) / 2.0
    mean = weights @ atoms
    dvals, dvecs = np.linalg.eigh(second)
    if dvals[-1] <= 0.0 or dvals[0] <= SECOND_MOMENT_REL_TOL * dvals[-1]:
        raise SingularDelta(
            f"second-moment spectrum [{dvals[0]}, {dvals[-1]}] is singular "
            f"beyond relative tolerance {SECOND_MOMENT_REL_TOL}"
        )
    root = np.sqrt(dvals)
    half = (dvecs * root) @ dvecs.T
    whitener = (dvecs / root) @ dvecs.T
    J = mix.signature.signs()
    S = (half * J) @ half
    S = (S + S.T) / 2.0
    svals, svecs = np.linalg.eigh(S)
    sel = modulus_order(svals)
    values = svals[sel]
    vectors = fix_signs(svecs[:, sel])
    gaps = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(gaps, np.inf)
    simple = gaps.min(axis=1) > gap_tolerance * np.max(np.abs(values))
    return PopulationMoments(
        second_moment=second,
        mean=mean,
        values=values,
        vectors=vectors,
        whitener=whitener,
        simple_flags=simple,
    )


def _require_simple(mom: PopulationMoments) -> None:
    if not mom.all_simple:
        raise NotSimpleSpectrum(
            f"reference eigenvalues {mom.values.tolist()} are not all simple "
            f"(flags {mom.simple_flags.tolist()}); the joint population law "
            f"does not apply, use the conditional law instead"
        )


def _whitened_atom_coefficients(mom: PopulationMoments, mix: LatentMixture) -> NDArray:
    """Matrix C with C[k, i] = (whitened atom k) . (reference vector i)."""
    return (mix.atoms @ mom.whitener) @ mom.vectors


def limit_mean_offsets(mom: PopulationMoments, mix: LatentMixture) -> NDArray[np.float64]:
    """Mean offsets of the joint limit law for the centered eigenvalues."""
    _require_simple(mom)
    C = _whitened_atom_coefficients(mom, mix)
    signed = mix.atoms * mix.signature.signs()
    lin = signed @ mom.mean
    quad = np.einsum("kd,de,ke->k", signed, mom.second_moment, signed)
    bias = mix.weights * (lin - quad)
    return (C**2).T @ bias / mom.values


def limit_covariance(mom: PopulationMoments, mix: LatentMixture) -> NDArray[np.float64]:
    """Covariance matrix of the joint limit law for the centered eigenvalues."""
    _require_simple(mom)
    C = _whitened_atom_coefficients(mom, mix)
    atoms, weights = mix.atoms, mix.weights
    signs = mix.signature.signs()
    d = mom.dim
    cov = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            c = weights * C[:, i] * C[:, j]
            m = c @ atoms
            M = atoms.T @ (c[:, None] * atoms)
            first = float((m * signs) @ m)
            second = float(np.sum((signs[:, None] * signs[None, :]) * M**2))
            cov[i, j] = cov[j, i] = 2.0 * (first - second)
    return cov


def _psd_moments(mix: LatentMixture, gap_tolerance: float):
    """Plain eigendecomposition of the second moment, for the q = 0 route."""
    if mix.signature.minus != 0:
        raise RequiresPositiveSemidefinite(
            f"signature ({mix.signature.plus}, {mix.signature.minus}) has "
            f"negative-sign directions; this route needs minus = 0"
        )
    atoms, weights = mix.atoms, mix.weights
    second = (atoms * weights[:, None]).T @ atoms
    second = (second + second.T) / 2.0
    mean = weights @ atoms
    dvals, dvecs = np.linalg.eigh(second)
    if dvals[-1] <= 0.0 or dvals[0] <= SECOND_MOMENT_REL_TOL * dvals[-1]:
        raise SingularDelta(
            f"second-moment spectrum [{dvals[0]}, {dvals[-1]}] is singular"
        )
    sel = modulus_order(dvals)
    lam = dvals[sel]
    xi = fix_signs(dvecs[:, sel])
    gaps = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(gaps, np.inf)
    if not np.all(gaps.min(axis=1) > gap_tolerance * lam[0]):
        raise NotSimpleSpectrum(
            f"second-moment eigenvalues {lam.tolist()} are not all simple"
        )
    return second, mean, lam, xi


def limit_mean_offsets_rdpg(
    mix: LatentMixture, gap_tolerance: float = GAP_TOL
) -> NDArray[np.float64]:
    """Mean offsets for positive-semidefinite models, by the unwhitened route.

    Independent of ``limit_mean_offsets``: works with eigenvectors of the
    second moment itself and divides by squared eigenvalues. Must agree with
    the general route whenever the signature has no minus directions.
    """
    second, mean, lam, xi = _psd_moments(mix, gap_tolerance)
    C = mix.atoms @ xi
    lin = mix.atoms @ mean
    quad = np.einsum("kd,de,ke->k", mix.atoms, second, mix.atoms)
    bias = mix.weights * (lin - quad)
    return (C**2).T @ bias / lam**2


def limit_covariance_rdpg(
    mix: LatentMixture, gap_tolerance: float = GAP_TOL
) -> NDArray[np.float64]:
    """Covariance for positive-semidefinite models, by the unwhitened route."""
    second, mean, lam, xi = _psd_moments(mix, gap_tolerance)
    C = mix.atoms @ xi
    atoms, weights = mix.atoms, mix.weights
    d = lam.shape[0]
    cov = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            c = weights * C[:, i] * C[:, j]
            m = c @ atoms
            M = atoms.T @ (c[:, None] * atoms)
            val = 2.0 * (float(m @ m) - float(np.sum(M**2))) / (lam[i] * lam[j])
            cov[i, j] = cov[j, i] = val
    return cov


@dataclass(frozen=True, eq=False)
class LimitLaw:
    """Joint normal limit law: mean offset vector and covariance matrix."""

    mean_offset: NDArray[np.float64]
    covariance: NDArray[np.float64]

    @property
    def dim(self) -> int:
        return self.mean_offset.shape[0]


def limit_law(mix: LatentMixture, gap_tolerance: float = GAP_TOL) -> LimitLaw:
    """Evaluate the population limit law of a mixture in one call."""
    mom = population_moments(mix, gap_tolerance)
    return LimitLaw(
        mean_offset=limit_mean_offsets(mom, mix),
        covariance=limit_covariance(mom, mix),
    )


@dataclass(frozen=True, eq=False)
class ConditionalLaw:
    """Per-coordinate normal law given the latent draw.

    ``variances`` is the exact finite-n variance of each centered eigenvalue
    quadratic form; ``variances_matrix_form`` is the asymptotic expression
    without the diagonal correction.
    """

    mean_offset: NDArray[np.float64]
    variances: NDArray[np.float64]
    variances_matrix_form: NDArray[np.float64]

    @property
    def dim(self) -> int:
        return self.mean_offset.shape[0]


def _block_structure(sample: LatentSample):
    """Group vertices by latent row via tau; verify rows match labels."""
    labels, first, inverse = np.unique(
        sample.tau, return_index=True, return_inverse=True
    )
    reps = sample.X[first]
    if np.any(sample.X != reps[inverse]):
        raise ValidationError(
            "rows of X are not constant within tau labels; latent samples "
            "must take one value per label"
        )
    counts = np.bincount(inverse, minlength=labels.shape[0]).astype(np.float64)
    signs = sample.signature.signs()
    forms = (reps * signs) @ reps.T
    forms = np.clip((forms + forms.T) / 2.0, 0.0, 1.0)
    # Forms within FORM_TOL of an endpoint are endpoint probabilities by the
    # model contract (validation allows exactly that much reconstruction
    # slack), so snap them and keep deterministic edges exactly varianceless.
    forms[forms <= FORM_TOL] = 0.0
    forms[forms >= 1.0 - FORM_TOL] = 1.0
    bern_var = forms * (1.0 - forms)
    return inverse, counts, bern_var


def _check_conditional_inputs(sample: LatentSample, p_eigs: SpectralResult) -> None:
    if p_eigs.vectors.shape[0] != sample.n:
        raise ValidationError(
            f"eigenvectors are for n={p_eigs.vectors.shape[0]}, sample has n={sample.n}"
        )
    if np.any(p_eigs.values == 0.0):
        raise ValidationError("conditional law needs nonzero reference eigenvalues")


def conditional_mean_offsets(
    sample: LatentSample, p_eigs: SpectralResult
) -> NDArray[np.float64]:
    """Conditional mean offsets of the centered extreme eigenvalues.

    Computed by the grouped route: each vertex's total Bernoulli variance
    (sum of p(1-p) over all pairs involving it) is weighted by the squared
    eigenvector entries. A literal evaluation of the defining expectation
    (through the normalized Gram square root and the reduced eigenvectors)
    is recomputed alongside and must agree to FORM_AGREEMENT_TOL.
    """
    _check_conditional_inputs(sample, p_eigs)
    inverse, counts, bern_var = _block_structure(sample)
    zeta = (bern_var @ counts)[inverse]
    u = p_eigs.vectors
    offsets = (u**2).T @ zeta / p_eigs.values

    literal = _conditional_mean_offsets_literal(sample, p_eigs)
    worst = float(np.max(np.abs(offsets - literal)))
    if worst > FORM_AGREEMENT_TOL * max(1.0, float(np.max(np.abs(offsets)))):
        raise AssertionError(
            f"conditional mean-offset routes disagree by {worst}; "
            f"this indicates a defect, not bad input"
        )
    return offsets


def _conditional_mean_offsets_literal(
    sample: LatentSample, p_eigs: SpectralResult
) -> NDArray[np.float64]:
    """The defining expectation, evaluated term by term.

    Uses the reduced eigenvectors and its own square root of the normalized
    Gram matrix, and assembles the inner expectation over the second index
    as written: E_t[X_t - X_t X_t^T J X_s].
    """
    if p_eigs.reduced_vectors is None:
        raise ValidationError("need reduced eigenvectors of the probability matrix")
    X = sample.X
    n = X.shape[0]
    gn = (X.T @ X) / n
    gvals, gvecs = np.linalg.eigh(gn)
    if gvals[-1] <= 0.0 or gvals[0] <= 1e-12 * gvals[-1]:
        raise ValidationError("latent positions are numerically rank deficient")
    inv_half = (gvecs / np.sqrt(gvals)) @ gvecs.T
    W = X @ (inv_half @ p_eigs.reduced_vectors)
    signs = sample.signature.signs()
    XJ = X * signs
    first_moment = X.mean(axis=0)
    second_moment = gn
    inner = XJ @ first_moment - np.einsum("nd,de,ne->n", XJ, second_moment, XJ)
    return (n / p_eigs.values) * ((W**2).T @ inner) / n


def conditional_variances(
    sample: LatentSample, p_eigs: SpectralResult, form: str = "exact"
) -> NDArray[np.float64]:
    """Conditional variances of the centered extreme eigenvalues.

    ``form="exact"`` is the finite-n variance of the quadratic form
    u^T (A - P) u: twice the sum of u_k^2 u_l^2 p_kl (1 - p_kl) over all
    ordered pairs, minus the diagonal terms counted once instead of twice.
    ``form="asymptotic"`` is the matrix expression without the diagonal
    correction, evaluated by an O(n d^2) contraction.
    """
    _check_conditional_inputs(sample, p_eigs)
    if form not in ("exact", "asymptotic"):
        raise ValidationError(f'form must be "exact" or "asymptotic", got {form!r}')
    u = p_eigs.vectors
    d = u.shape[1]
    out = np.empty(d)
    if form == "exact":
        inverse, counts, bern_var = _block_structure(sample)
        diag_var = bern_var[inverse, inverse]
        for i in range(d):
            w = u[:, i] ** 2
            g = np.bincount(inverse, weights=w, minlength=counts.shape[0])
            pair_sum = float(g @ bern_var @ g)
            diag_sum = float((w**2) @ diag_var)
            out[i] = 2.0 * pair_sum - diag_sum
        return out
    X = sample.X
    signs = sample.signature.signs()
    for i in range(d):
        w = u[:, i] ** 2
        m = X.T @ w
        M = (X * w[:, None]).T @ X
        first = float((m * signs) @ m)
        second = float(np.sum((signs[:, None] * signs[None, :]) * M**2))
        out[i] = 2.0 * (first - second)
    return out


def conditional_law(sample: LatentSample, p_eigs: SpectralResult) -> ConditionalLaw:
    """Evaluate the conditional law (both variance forms) in one call."""
    return ConditionalLaw(
        mean_offset=conditional_mean_offsets(sample, p_eigs),
        variances=conditional_variances(sample, p_eigs, form="exact"),
        variances_matrix_form=conditional_variances(sample, p_eigs, form="asymptotic"),
    )


@dataclass(frozen=True, eq=False)
class DecompositionDiagnostic:
    """Terms of the two-step expansion of each centered eigenvalue.

    ``linear_term`` is the quadratic form of A - P in the reference
    eigenvector (scaled by the eigenvalue ratio), ``quadratic_term`` the
    squared-residual follow-up, and ``residual`` whatever the two leave
    unexplained of the centered eigenvalue.
    """

    linear_term: NDArray[np.float64]
    quadratic_term: NDArray[np.float64]
    residual: NDArray[np.float64]


def decomposition_diagnostic(
    graph: AdjacencyGraph,
    sample: LatentSample,
    p_eigs: SpectralResult,
    adjacency_values: NDArray,
) -> DecompositionDiagnostic:
    """Split matched centered eigenvalues into the two leading terms.

    ``adjacency_values`` must hold the adjacency eigenvalues matched to the
    order of ``p_eigs.values``. The probability matrix is applied through
    the latent factorization, so nothing dense is formed.
    """
    _check_conditional_inputs(sample, p_eigs)
    lam_hat = np.asarray(adjacency_values, dtype=np.float64)
    lam = p_eigs.values
    if lam_hat.shape != lam.shape:
        raise ValidationError(
            f"matched values shape {lam_hat.shape} != reference shape {lam.shape}"
        )
    if np.any(lam_hat == 0.0):
        raise DegenerateVariance("matched adjacency eigenvalue is zero")
    u = p_eigs.vectors
    signs = sample.signature.signs()
    noise = graph.matvec(u) - (sample.X * signs) @ (sample.X.T @ u)
    linear = (lam / lam_hat) * np.einsum("ni,ni->i", u, noise)
    quadratic = (lam / lam_hat**2) * np.einsum("ni,ni->i", noise, noise)
    residual = (lam_hat - lam) - linear - quadratic
    return DecompositionDiagnostic(
        linear_term=linear, quadratic_term=quadratic, residual=residual
    )


def limit_law_to_dict(law: LimitLaw) -> dict:
    return {
        "eta": law.mean_offset.tolist(),
        "Gamma": law.covariance.tolist(),
    }


def conditional_law_to_dict(law: ConditionalLaw) -> dict:
    return {
        "eta_tilde": law.mean_offset.tolist(),
        "sigma2": law.variances.tolist(),
        "sigma2_matrix_form": law.variances_matrix_form.tolist(),
    }


def save_limit_law(law: LimitLaw, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(limit_law_to_dict(law), fh, indent=2)
        fh.write("\n")


def save_conditional_law(law: ConditionalLaw, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(conditional_law_to_dict(law), fh, indent=2)
        fh.write("\n")


def load_limit_law(path: str | Path) -> LimitLaw:
    with open(path) as fh:
        doc = json.load(fh)
    if "eta" not in doc or "Gamma" not in doc:
        raise ValidationError(f'{path} must contain "eta" and "Gamma"')
    return LimitLaw(
        mean_offset=np.asarray(doc["eta"], dtype=np.float64),
        covariance=np.asarray(doc["Gamma"], dtype=np.float64),
    )


def load_conditional_law(path: str | Path) -> ConditionalLaw:
    with open(path) as fh:
        doc = json.load(fh)
    if "eta_tilde" not in doc or "sigma2" not in doc:
        raise ValidationError(f'{path} must contain "eta_tilde" and "sigma2"')
    sigma2 = np.asarray(doc["sigma2"], dtype=np.float64)
    matrix_form = np.asarray(doc.get("sigma2_matrix_form", doc["sigma2"]), dtype=np.float64)
    return ConditionalLaw(
        mean_offset=np.asarray(doc["eta_tilde"], dtype=np.float64),
        variances=sigma2,
        variances_matrix_form=matrix_form,
    )
