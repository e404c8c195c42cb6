"""Extreme eigenpairs of symmetric operators.

Three solvers share one ordering convention. ``top_eigenpairs_sparse`` runs a
Lanczos iteration with full reorthogonalization against an implicit matrix
and returns the d eigenvalues of largest modulus, which for an indefinite
spectrum may come from both ends. ``dense_eigen_oracle`` is the slow
reference: full dense factorization, capped in size, used to cross-check the
iterative path. ``probability_eigenpairs`` computes the nonzero eigenpairs of
the rank-d edge-probability matrix of a latent sample exactly, through the
d x d reduced problem, without ever forming the n x n matrix.

Ordering convention everywhere: eigenvalues sorted by modulus descending,
ties broken by signed value descending, then by position. Every eigenvector
column is normalized so its largest-magnitude entry is positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from numpy.typing import NDArray

from .errors import DegenerateGram, NoConvergence, TooLargeForOracle, ValidationError
from .sampling import AdjacencyGraph, LatentSample, rng_from_seed

DEFAULT_TOL = 1e-10
ORACLE_SIZE_CAP = 2048
GRAM_REL_TOL = 1e-12

_START_SEED = 0x5EED_1A5C_0001


def modulus_order(values: NDArray) -> NDArray[np.intp]:
    """Permutation sorting values by |v| desc, then v desc, then position."""
    values = np.asarray(values)
    idx = np.arange(values.shape[0])
    return np.lexsort((idx, -values, -np.abs(values)))


def fix_signs(vectors: NDArray) -> NDArray:
    """Flip each column so its largest-magnitude entry is positive."""
    vectors = np.array(vectors)
    if vectors.size == 0:
        return vectors
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0.0] = 1.0
    return vectors * signs


@dataclass(frozen=True, eq=False)
class SpectralResult:
    """Eigenvalues (modulus-ordered), orthonormal eigenvectors, residuals.

    ``residuals[j]`` is the 2-norm of ``A v_j - value_j v_j`` computed
    explicitly against the operator. ``reduced_vectors`` is only set by
    ``probability_eigenpairs`` and holds the eigenvectors of the reduced
    d x d problem that generate the lifted columns of ``vectors``.
    """

    values: NDArray[np.float64]
    vectors: NDArray[np.float64]
    residuals: NDArray[np.float64]
    converged: bool = True
    iterations: int | None = None
    reduced_vectors: NDArray[np.float64] | None = None

    @property
    def d(self) -> int:
        return self.values.shape[0]


def _operator_parts(A) -> tuple:
    """Return (matvec, n, scale) for the supported operator kinds.

    scale is the maximum absolute row sum, the natural magnitude for
    residual tolerances.
    """
    if isinstance(A, AdjacencyGraph):
        scale = float(A.degrees().max()) if A.n else 0.0
        return A.matvec, A.n, scale
    if sp.issparse(A):
        if A.shape[0] != A.shape[1]:
            raise ValidationError(f"operator must be square, got {A.shape}")
        csr = A.tocsr()
        scale = float(np.abs(csr).sum(axis=1).max()) if csr.shape[0] else 0.0
        return (lambda v: csr @ v), csr.shape[0], scale
    M = np.asarray(A, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"operator must be a square matrix, got shape {M.shape}")
    scale = float(np.abs(M).sum(axis=1).max()) if M.shape[0] else 0.0
    return (lambda v: M @ v), M.shape[0], scale


def top_eigenpairs_sparse(
    A,
    d: int,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
) -> SpectralResult:
    """Lanczos iteration for the d eigenvalues of largest modulus.

    Accepts an AdjacencyGraph, a scipy sparse matrix, or a dense array; only
    matrix-vector products are used. The basis is kept orthonormal by full
    reorthogonalization (two classical Gram-Schmidt passes per step), and an
    invariant subspace (breakdown) is handled by restarting the recurrence
    with a fresh orthogonal direction, so multiple eigenvalues are found too.
    Iteration stops when the selected Ritz values carry residual bounds below
    ``tol * scale`` (scale = max absolute row sum) on two consecutive steps
    and the explicitly recomputed residuals confirm it; otherwise
    NoConvergence is raised with the best partial result attached.
    """
    matvec, n, scale = _operator_parts(A)
    if d < 1 or d > n:
        raise ValidationError(f"need 1 <= d <= n, got d={d}, n={n}")
    if max_iter is None:
        max_iter = 10 * d + 200
    m_cap = min(n, max(max_iter, d))
    resid_cap = tol * scale
    breakdown = 1e-14 * max(scale, 1.0)
    rng = rng_from_seed(_START_SEED)
    V = np.zeros((n, m_cap))
    alpha = np.zeros(m_cap)
    beta = np.zeros(m_cap)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    k = 0
    prev_sel: NDArray | None = None
    bound_ok_streak = 0
    required_bound = resid_cap

    def _ritz(k_now: int):
        theta, S = scipy.linalg.eigh_tridiagonal(alpha[:k_now], beta[: k_now - 1])
        sel = modulus_order(theta)[:d]
        bounds = np.abs(beta[k_now - 1] * S[k_now - 1, sel])
        return theta, S, sel, bounds

    def _finalize(k_now: int, require: bool) -> SpectralResult:
        theta, S, sel, _ = _ritz(k_now)
        Y = V[:, :k_now] @ S[:, sel]
        vals = theta[sel]
        resid = np.empty(vals.shape[0])
        for j in range(vals.shape[0]):
            resid[j] = np.linalg.norm(matvec(Y[:, j]) - vals[j] * Y[:, j])
        Y = fix_signs(Y)
        ok = bool(np.all(resid <= resid_cap))
        result = SpectralResult(
            values=vals,
            vectors=Y,
            residuals=resid,
            converged=ok,
            iterations=k_now,
        )
        if require and not ok:
            raise NoConvergence(
                f"Lanczos did not reach residual {resid_cap} within "
                f"{m_cap} iterations (worst {float(resid.max())})",
                partial=result,
            )
        return result

    while k < m_cap:
        V[:, k] = v
        w = matvec(v)
        alpha[k] = float(v @ w)
        w = w - alpha[k] * v
        if k > 0 and beta[k - 1] != 0.0:
            w = w - beta[k - 1] * V[:, k - 1]
        for _ in range(2):
            w = w - V[:, : k + 1] @ (V[:, : k + 1].T @ w)
        b = float(np.linalg.norm(w))
        if b <= breakdown:
            beta[k] = 0.0
            restarted = False
            if k + 1 < m_cap:
                for _ in range(3):
                    cand = rng.standard_normal(n)
                    for _ in range(2):
                        cand = cand - V[:, : k + 1] @ (V[:, : k + 1].T @ cand)
                    nv = float(np.linalg.norm(cand))
                    if nv > 1e-8 * np.sqrt(n):
                        v = cand / nv
                        restarted = True
                        break
            k += 1
            if not restarted:
                break
        else:
            beta[k] = b
            v = w / b
            k += 1
        if k >= d:
            theta, S, sel, bounds = _ritz(k)
            sel_vals = theta[sel]
            if np.all(bounds <= required_bound):
                stable = prev_sel is not None and np.all(
                    np.abs(sel_vals - prev_sel) <= max(resid_cap, 1e-13 * max(scale, 1.0))
                )
                bound_ok_streak = bound_ok_streak + 1 if stable else 1
                if bound_ok_streak >= 2 or k >= n:
                    result = _finalize(k, require=False)
                    if result.converged:
                        return result
                    # Bound was optimistic (reorthogonalization slack); insist
                    # on a tighter bound before checking again.
                    required_bound *= 0.1
                    bound_ok_streak = 0
            else:
                bound_ok_streak = 0
            prev_sel = sel_vals
    return _finalize(k, require=True)


def dense_eigen_oracle(A, d: int, size_cap: int = ORACLE_SIZE_CAP) -> SpectralResult:
    """Reference solver: dense symmetric factorization of the full matrix.

    Quadratic memory and cubic time; refuses matrices larger than
    ``size_cap`` with TooLargeForOracle.
    """
    if isinstance(A, AdjacencyGraph):
        if A.n > size_cap:
            raise TooLargeForOracle(f"n={A.n} exceeds oracle cap {size_cap}")
        M = A.to_dense()
    elif sp.issparse(A):
        if A.shape[0] > size_cap:
            raise TooLargeForOracle(f"n={A.shape[0]} exceeds oracle cap {size_cap}")
        M = A.toarray()
    else:
        M = np.asarray(A, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValidationError(f"need a square matrix, got shape {M.shape}")
        if M.shape[0] > size_cap:
            raise TooLargeForOracle(f"n={M.shape[0]} exceeds oracle cap {size_cap}")
    n = M.shape[0]
    if d < 1 or d > n:
        raise ValidationError(f"need 1 <= d <= n, got d={d}, n={n}")
    evals, evecs = np.linalg.eigh(M)
    sel = modulus_order(evals)[:d]
    values = evals[sel]
    vectors = fix_signs(evecs[:, sel])
    resid = np.linalg.norm(M @ vectors - vectors * values, axis=0)
    return SpectralResult(values=values, vectors=vectors, residuals=resid)


def probability_eigenpairs(sample: LatentSample) -> SpectralResult:
    """All nonzero eigenpairs of the edge-probability matrix, exactly.

    The probability matrix factors through the n x d latent matrix, so its
    nonzero spectrum equals that of the signed d x d Gram problem; solving
    that and lifting back gives eigenvectors orthonormal by construction.
    Raises DegenerateGram when the latent positions are numerically rank
    deficient (reduced problem would be meaningless).
    """
    X = sample.X
    n, d = X.shape
    if n < d:
        raise DegenerateGram(f"need n >= d, got n={n}, d={d}")
    G = X.T @ X
    gvals, gvecs = np.linalg.eigh(G)
    if gvals[0] <= GRAM_REL_TOL * gvals[-1] or gvals[-1] <= 0.0:
        raise DegenerateGram(
            f"Gram spectrum [{gvals[0]}, {gvals[-1]}] is rank deficient "
            f"beyond relative tolerance {GRAM_REL_TOL}"
        )
    root = np.sqrt(gvals)
    Ghalf = (gvecs * root) @ gvecs.T
    Ghalf_inv = (gvecs / root) @ gvecs.T
    J = sample.signature.signs()
    S = Ghalf * J @ Ghalf
    S = (S + S.T) / 2.0
    svals, svecs = np.linalg.eigh(S)
    sel = modulus_order(svals)[:d]
    values = svals[sel]
    lifted = X @ (Ghalf_inv @ svecs[:, sel])
    lead = np.argmax(np.abs(lifted), axis=0)
    signs = np.sign(lifted[lead, np.arange(d)])
    signs[signs == 0.0] = 1.0
    lifted = lifted * signs
    reduced = svecs[:, sel] * signs
    resid = np.linalg.norm(
        (X * J) @ (X.T @ lifted) - lifted * values, axis=0
    )
    return SpectralResult(
        values=values,
        vectors=lifted,
        residuals=resid,
        reduced_vectors=reduced,
    )
