"""Seeded sampling of latent positions and Bernoulli adjacency matrices.

Randomness contract: every sampler takes an explicit 64-bit seed and feeds it
to a counter-based Philox generator, so results are reproducible across runs,
platforms, and worker processes. Replicate seeds are derived from one master
seed with ``replicate_seed``, which is injective over (replicate, purpose)
pairs, so parallel replicates never share a stream.

The adjacency sampler draws one uniform per vertex pair (i, j) with i <= j,
in row-major order over the upper triangle including the diagonal, and keeps
the pair as an edge when the uniform falls below the pair's edge probability.
Generation is chunked by rows for memory, which leaves the stream identical
to a single monolithic draw.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .errors import FormOutOfRange, ValidationError
from .model import FORM_TOL, LatentMixture, Signature

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class StreamPurpose(enum.IntEnum):
    """What a derived random stream is used for."""

    LATENTS = 0
    ADJACENCY = 1


class SeedRecord(NamedTuple):
    """The exact seed a sampler consumed, kept for provenance."""

    seed: int
    purpose: int


def _mix64(z: int) -> int:
    """Finalizer of the splitmix64 generator: a 64-bit bijection."""
    z &= _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def replicate_seed(master_seed: int, replicate_index: int, purpose: StreamPurpose | int) -> int:
    """Derive an independent 64-bit stream seed for one replicate and purpose.

    For a fixed master seed the map (replicate_index, purpose) -> seed is
    injective: the pair is packed into one 64-bit word, multiplied by an odd
    constant (a bijection mod 2^64), and passed through a 64-bit bijective
    finalizer. Distinct purposes of the same replicate therefore get distinct
    streams, as do distinct replicates.
    """
    purpose = int(purpose)
    if purpose not in (0, 1):
        raise ValidationError(f"purpose must be 0 (latents) or 1 (adjacency), got {purpose}")
    if replicate_index < 0 or replicate_index >= 1 << 63:
        raise ValidationError(f"replicate_index out of range: {replicate_index}")
    packed = ((replicate_index << 1) | purpose) & _MASK64
    return _mix64((_mix64(master_seed) + packed * _GOLDEN) & _MASK64)


def rng_from_seed(seed: int) -> np.random.Generator:
    """Counter-based generator for a derived seed."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


@dataclass(frozen=True, eq=False)
class LatentSample:
    """Latent positions for n vertices: rows of ``X`` are atom coordinates.

    ``tau`` holds the atom index behind each row, so code downstream can
    exploit that ``X`` takes only finitely many distinct values.
    """

    X: NDArray[np.float64]
    tau: NDArray[np.int64]
    signature: Signature
    seed_record: SeedRecord | None = None

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=np.float64)
        X.setflags(write=False)
        tau = np.array(self.tau, dtype=np.int64)
        tau.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "tau", tau)
        if X.ndim != 2:
            raise ValidationError(f"X must be 2-d, got shape {X.shape}")
        if tau.shape != (X.shape[0],):
            raise ValidationError("tau must have one label per row of X")
        if X.shape[1] != self.signature.dim:
            raise ValidationError(
                f"X has dimension {X.shape[1]}, signature has {self.signature.dim}"
            )
        if tau.size and int(tau.min()) < 0:
            raise ValidationError("tau labels must be nonnegative")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def sample_latents(mix: LatentMixture, n: int, seed: int) -> LatentSample:
    """Draw n latent positions i.i.d. from the mixture."""
    if n < 1:
        raise ValidationError(f"n must be positive, got {n}")
    rng = rng_from_seed(seed)
    u = rng.random(n)
    cum = np.cumsum(mix.weights)
    cum[-1] = 1.0
    tau = np.searchsorted(cum, u, side="right").astype(np.int64)
    return LatentSample(
        X=mix.atoms[tau],
        tau=tau,
        signature=mix.signature,
        seed_record=SeedRecord(int(seed) & _MASK64, int(StreamPurpose.LATENTS)),
    )


def _checked_probabilities(raw: NDArray, context: str) -> NDArray:
    lo = float(raw.min()) if raw.size else 0.0
    hi = float(raw.max()) if raw.size else 0.0
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise FormOutOfRange(f"{context}: non-finite probability values")
    if lo < -FORM_TOL or hi > 1.0 + FORM_TOL:
        raise FormOutOfRange(
            f"{context}: values range over [{lo}, {hi}], outside "
            f"[-{FORM_TOL}, 1 + {FORM_TOL}]"
        )
    return np.clip(raw, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class ProbabilityMatrix:
    """Dense matrix of pairwise edge probabilities (clamped into [0, 1])."""

    P: NDArray[np.float64]

    def __post_init__(self) -> None:
        P = np.array(self.P, dtype=np.float64)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValidationError(f"P must be square, got shape {P.shape}")

    @property
    def n(self) -> int:
        return self.P.shape[0]


def probability_matrix(sample: LatentSample) -> ProbabilityMatrix:
    """Form the dense edge-probability matrix of a latent sample.

    Memory is quadratic in n; the adjacency sampler below does not need it
    and computes probabilities in row blocks instead.
    """
    signed = sample.X * sample.signature.signs()
    raw = signed @ sample.X.T
    raw = (raw + raw.T) / 2.0
    return ProbabilityMatrix(P=_checked_probabilities(raw, "latent bilinear forms"))


@dataclass(eq=False)
class AdjacencyGraph:
    """Undirected 0/1 graph stored as the upper triangle in CSR form.

    ``upper`` holds entries with row <= col only (including any self-loops).
    ``matvec`` applies the full symmetric matrix without materializing it.
    """

    n: int
    upper: sp.csr_matrix
    hollow: bool = False
    seed_record: SeedRecord | None = None

    def __post_init__(self) -> None:
        if self.upper.shape != (self.n, self.n):
            raise ValidationError(
                f"upper triangle shape {self.upper.shape} does not match n={self.n}"
            )
        self._upper_t = self.upper.T.tocsc()
        self._diag = self.upper.diagonal()

    @property
    def edge_count(self) -> int:
        """Number of stored vertex pairs (i, j) with i <= j."""
        return int(self.upper.nnz)

    def degrees(self) -> NDArray[np.float64]:
        ones = np.ones(self.n)
        return self.matvec(ones)

    def matvec(self, v: NDArray) -> NDArray:
        """Multiply the full symmetric adjacency matrix by a vector or matrix."""
        v = np.asarray(v)
        out = self.upper @ v + self._upper_t @ v
        if v.ndim == 1:
            return out - self._diag * v
        return out - self._diag[:, None] * v

    def to_csr(self) -> sp.csr_matrix:
        coo = self.upper.tocoo()
        off = coo.row != coo.col
        r = np.concatenate([coo.row, coo.col[off]])
        c = np.concatenate([coo.col, coo.row[off]])
        return sp.csr_matrix(
            (np.ones(r.size), (r, c)), shape=(self.n, self.n)
        )

    def to_dense(self) -> NDArray[np.float64]:
        return self.to_csr().toarray()


def sample_adjacency(
    sample: LatentSample,
    seed: int,
    hollow: bool = False,
    probabilities: ProbabilityMatrix | None = None,
    row_block: int | None = None,
) -> AdjacencyGraph:
    """Sample a symmetric Bernoulli adjacency matrix given latent positions.

    One uniform is consumed per pair (i, j), i <= j, in row-major order, so
    the result is a pure function of (sample, seed). With ``hollow`` the
    diagonal is zeroed after sampling, which leaves all off-diagonal entries
    identical to the non-hollow graph of the same seed. ``probabilities``
    optionally supplies a precomputed dense probability matrix to skip the
    blockwise recomputation when many graphs share one latent sample.
    """
    n = sample.n
    if probabilities is not None and probabilities.n != n:
        raise ValidationError(
            f"probability matrix is {probabilities.n}x{probabilities.n}, sample has n={n}"
        )
    rng = rng_from_seed(seed)
    signed = sample.X * sample.signature.signs()
    if row_block is None:
        row_block = max(1, int(4_000_000 // max(n, 1)))
    rows: list[NDArray] = []
    cols: list[NDArray] = []
    col_idx = np.arange(n)
    for r0 in range(0, n, row_block):
        r1 = min(r0 + row_block, n)
        if probabilities is not None:
            pblk = probabilities.P[r0:r1]
        else:
            raw = sample.X[r0:r1] @ signed.T
            pblk = _checked_probabilities(raw, f"forms in rows {r0}:{r1}")
        mask = col_idx[None, :] >= np.arange(r0, r1)[:, None]
        pvals = pblk[mask]
        u = rng.random(pvals.shape[0])
        hits = np.flatnonzero(u < pvals)
        starts = np.concatenate([[0], np.cumsum(n - np.arange(r0, r1))])
        row_local = np.searchsorted(starts, hits, side="right") - 1
        i = row_local + r0
        j = hits - starts[row_local] + i
        if hollow:
            keep = i != j
            i, j = i[keep], j[keep]
        rows.append(i)
        cols.append(j)
    i_all = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    j_all = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    upper = _upper_csr_from_pairs(n, i_all, j_all)
    return AdjacencyGraph(
        n=n,
        upper=upper,
        hollow=hollow,
        seed_record=SeedRecord(int(seed) & _MASK64, int(StreamPurpose.ADJACENCY)),
    )


def _upper_csr_from_pairs(n: int, i: NDArray, j: NDArray) -> sp.csr_matrix:
    """Build the upper-triangle CSR from pairs already sorted row-major."""
    index_dtype = np.int32 if n < 2**31 and i.size < 2**31 else np.int64
    counts = np.bincount(i, minlength=n) if i.size else np.zeros(n, dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=index_dtype)
    np.cumsum(counts, out=indptr[1:])
    data = np.ones(i.size, dtype=np.float64)
    return sp.csr_matrix((data, j.astype(index_dtype), indptr), shape=(n, n))


def save_latents(sample: LatentSample, path: str | Path) -> None:
    """Write latent positions as CSV with columns tau, x_1, ..., x_d."""
    d = sample.dim
    header = ",".join(["tau"] + [f"x_{k + 1}" for k in range(d)])
    body = np.column_stack([sample.tau.astype(np.float64), sample.X])
    np.savetxt(
        path,
        body,
        fmt=["%d"] + ["%.17g"] * d,
        delimiter=",",
        header=header,
        comments="",
    )


def load_latents(path: str | Path, signature: Signature) -> LatentSample:
    """Read latent positions written by ``save_latents``."""
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if body.size == 0:
        raise ValidationError(f"latents file {path} has no rows")
    if body.shape[1] != signature.dim + 1:
        raise ValidationError(
            f"latents file has {body.shape[1] - 1} coordinate columns, "
            f"signature needs {signature.dim}"
        )
    tau = body[:, 0].astype(np.int64)
    if np.max(np.abs(body[:, 0] - tau)) > 0:
        raise ValidationError("tau column must hold integers")
    return LatentSample(X=body[:, 1:], tau=tau, signature=signature)


def save_edges(graph: AdjacencyGraph, path: str | Path) -> None:
    """Write the graph as an edge list: header then one 'i j' pair per line.

    The header 'n <n> loops <0|1>' records the vertex count and whether
    self-loops were sampled (0 means the diagonal was zeroed).
    """
    coo = graph.upper.tocoo()
    with open(path, "w") as fh:
        fh.write(f"n {graph.n} loops {0 if graph.hollow else 1}\n")
        np.savetxt(fh, np.column_stack([coo.row, coo.col]), fmt="%d")


def load_edges(path: str | Path) -> AdjacencyGraph:
    """Read an edge list written by ``save_edges``."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "n" or header[2] != "loops":
            raise ValidationError(f"bad edge-list header in {path}: {' '.join(header)}")
        n, loops = int(header[1]), int(header[3])
        if n < 1 or loops not in (0, 1):
            raise ValidationError(f"bad edge-list header values in {path}")
        body = fh.read()
    if body.strip():
        pairs = np.loadtxt(io.StringIO(body), dtype=np.int64, ndmin=2)
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
    if pairs.size == 0:
        i = j = np.empty(0, dtype=np.int64)
    else:
        if pairs.shape[1] != 2:
            raise ValidationError(f"edge lines in {path} must have two columns")
        i, j = pairs[:, 0], pairs[:, 1]
    if i.size:
        if i.min() < 0 or j.max() >= n:
            raise ValidationError(f"edge endpoints in {path} outside [0, {n})")
        if np.any(i > j):
            raise ValidationError(f"edge list {path} must satisfy i <= j")
        if loops == 0 and np.any(i == j):
            raise ValidationError(f"edge list {path} declares loops 0 but has loops")
        order = np.lexsort((j, i))
        i, j = i[order], j[order]
        if np.any((i[1:] == i[:-1]) & (j[1:] == j[:-1])):
            raise ValidationError(f"duplicate edges in {path}")
    upper = _upper_csr_from_pairs(n, i, j)
    return AdjacencyGraph(n=n, upper=upper, hollow=(loops == 0), seed_record=None)
