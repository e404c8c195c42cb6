"""Model parameter types for low-rank Bernoulli graph ensembles.

Two equivalent parameterizations are supported. A stochastic block model is
given by a symmetric matrix of block edge probabilities together with block
weights. A generalized dot-product model is given by a finite set of latent
positions (atoms) with mixture weights and a signature describing how many
coordinates enter the inner product with a plus sign and how many with a
minus sign. ``sbm_to_grdpg`` converts the former into the latter by spectral
factorization, so downstream code only ever works with latent mixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import (
    AsymmetricB,
    BadSimplexVector,
    EntryOutOfRange,
    FormOutOfRange,
    NotIndefiniteOrthogonal,
    RankDeficiencyAmbiguous,
    ValidationError,
)

SYMMETRY_TOL = 1e-12
SIMPLEX_TOL = 1e-12
FORM_TOL = 1e-10
ORTHOGONALITY_TOL = 1e-10
RANK_REL_TOL = 1e-10


def _as_readonly(a: NDArray, dtype=np.float64) -> NDArray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def _check_simplex(w: NDArray, what: str) -> None:
    if w.ndim != 1 or w.size == 0:
        raise BadSimplexVector(f"{what} must be a nonempty vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise BadSimplexVector(f"{what} has non-finite entries")
    if np.min(w) < 0.0:
        raise BadSimplexVector(f"{what} has negative entry {np.min(w)}")
    total = float(np.sum(w))
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise BadSimplexVector(f"{what} sums to {total!r}, not 1 within {SIMPLEX_TOL}")


@dataclass(frozen=True)
class Signature:
    """Signs of the latent inner product: ``plus`` +1 axes then ``minus`` -1 axes."""

    plus: int
    minus: int

    def __post_init__(self) -> None:
        if self.plus < 0 or self.minus < 0 or self.plus + self.minus < 1:
            raise ValidationError(
                f"signature needs plus >= 0, minus >= 0, plus + minus >= 1, "
                f"got ({self.plus}, {self.minus})"
            )

    @property
    def dim(self) -> int:
        return self.plus + self.minus

    def signs(self) -> NDArray[np.float64]:
        return np.concatenate([np.ones(self.plus), -np.ones(self.minus)])

    def matrix(self) -> NDArray[np.float64]:
        return np.diag(self.signs())


@dataclass(frozen=True, eq=False)
class BlockModelParams:
    """Block edge-probability matrix ``B`` and block weight vector ``pi``."""

    B: NDArray[np.float64]
    pi: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "B", _as_readonly(self.B))
        object.__setattr__(self, "pi", _as_readonly(self.pi))
        if self.B.ndim != 2 or self.B.shape[0] != self.B.shape[1]:
            raise ValidationError(f"B must be square, got shape {self.B.shape}")
        if self.pi.shape != (self.B.shape[0],):
            raise ValidationError(
                f"pi shape {self.pi.shape} does not match B shape {self.B.shape}"
            )

    @property
    def n_blocks(self) -> int:
        return self.B.shape[0]


def validate_block_model(params: BlockModelParams) -> BlockModelParams:
    """Check the numeric contract on block-model parameters.

    Returns the same object so calls can be chained. Raises AsymmetricB,
    EntryOutOfRange, or BadSimplexVector on violation.
    """
    B, pi = params.B, params.pi
    if not np.all(np.isfinite(B)):
        raise EntryOutOfRange("B has non-finite entries")
    asym = float(np.max(np.abs(B - B.T))) if B.size else 0.0
    if asym > SYMMETRY_TOL:
        raise AsymmetricB(f"max |B - B^T| = {asym}, exceeds {SYMMETRY_TOL}")
    if float(np.min(B)) < 0.0 or float(np.max(B)) > 1.0:
        raise EntryOutOfRange(
            f"B entries must lie in [0, 1], got range "
            f"[{float(np.min(B))}, {float(np.max(B))}]"
        )
    _check_simplex(pi, "pi")
    return params


@dataclass(frozen=True, eq=False)
class LatentMixture:
    """Finite mixture of latent positions with an inner-product signature.

    ``atoms`` has one latent position per row. Every pairwise bilinear form
    ``atoms[a] . signs . atoms[b]`` must be a probability within FORM_TOL;
    forms are clamped to [0, 1] only at the point of use.
    """

    atoms: NDArray[np.float64]
    weights: NDArray[np.float64]
    signature: Signature

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", _as_readonly(np.atleast_2d(self.atoms)))
        object.__setattr__(self, "weights", _as_readonly(self.weights))
        if self.atoms.ndim != 2:
            raise ValidationError(f"atoms must be 2-d, got shape {self.atoms.shape}")
        if self.atoms.shape[1] != self.signature.dim:
            raise ValidationError(
                f"atoms have dimension {self.atoms.shape[1]} but signature has "
                f"dimension {self.signature.dim}"
            )
        if not np.all(np.isfinite(self.atoms)):
            raise ValidationError("atoms have non-finite entries")
        _check_simplex(self.weights, "weights")
        if self.weights.shape[0] != self.atoms.shape[0]:
            raise ValidationError(
                f"{self.atoms.shape[0]} atoms but {self.weights.shape[0]} weights"
            )
        forms = self.forms()
        lo, hi = float(np.min(forms)), float(np.max(forms))
        if lo < -FORM_TOL or hi > 1.0 + FORM_TOL:
            raise FormOutOfRange(
                f"atom bilinear forms range over [{lo}, {hi}], outside "
                f"[-{FORM_TOL}, 1 + {FORM_TOL}]"
            )

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def forms(self) -> NDArray[np.float64]:
        """Raw pairwise bilinear forms, one row and column per atom."""
        signed = self.atoms * self.signature.signs()
        f = signed @ self.atoms.T
        return (f + f.T) / 2.0

    def edge_probabilities(self) -> NDArray[np.float64]:
        """Pairwise forms clamped into [0, 1]."""
        return np.clip(self.forms(), 0.0, 1.0)


def sbm_to_grdpg(
    params: BlockModelParams, rel_rank_tolerance: float = RANK_REL_TOL
) -> LatentMixture:
    """Factor a block model into an equivalent latent-position mixture.

    The block matrix is eigendecomposed; eigenvalues of magnitude at most
    ``rel_rank_tolerance * max |eigenvalue|`` are treated as zero and dropped,
    and the remaining d columns, scaled by sqrt of the eigenvalue magnitudes,
    become the atom coordinates. The signature records how many retained
    eigenvalues are positive and how many negative. Eigenvalues falling in the
    band just above the cutoff (within a factor of 10) make the rank call
    unreliable and raise RankDeficiencyAmbiguous.
    """
    validate_block_model(params)
    evals, evecs = np.linalg.eigh(params.B)
    scale = float(np.max(np.abs(evals))) if evals.size else 0.0
    if scale == 0.0:
        raise ValidationError("B is the zero matrix; there is no latent structure")
    cut = rel_rank_tolerance * scale
    mags = np.abs(evals)
    band = (mags > cut) & (mags <= 10.0 * cut)
    if np.any(band):
        raise RankDeficiencyAmbiguous(
            f"eigenvalues {evals[band]} lie within a factor 10 of the rank "
            f"cutoff {cut}; tighten or loosen rel_rank_tolerance"
        )
    keep = mags > cut
    evals, evecs = evals[keep], evecs[:, keep]
    order = np.argsort(-evals, kind="stable")
    evals, evecs = evals[order], evecs[:, order]
    for j in range(evecs.shape[1]):
        col = evecs[:, j]
        if col[np.argmax(np.abs(col))] < 0.0:
            evecs[:, j] = -col
    atoms = evecs * np.sqrt(np.abs(evals))
    recon = float(np.max(np.abs((evecs * evals) @ evecs.T - params.B)))
    if recon > 1e-10:
        raise RankDeficiencyAmbiguous(
            f"rank-{int(np.sum(keep))} reconstruction misses B by {recon}; "
            f"the dropped eigenvalues are not negligible"
        )
    sig = Signature(int(np.sum(evals > 0.0)), int(np.sum(evals < 0.0)))
    return LatentMixture(atoms=atoms, weights=params.pi, signature=sig)


def indefinite_orthogonal_transform(mix: LatentMixture, W: NDArray) -> LatentMixture:
    """Apply a signature-preserving linear map to every atom.

    ``W`` must satisfy W J W^T = J for the signature matrix J, which leaves
    every pairwise form (hence the graph distribution) unchanged. Raises
    NotIndefiniteOrthogonal otherwise.
    """
    W = np.asarray(W, dtype=np.float64)
    d = mix.dim
    if W.shape != (d, d):
        raise ValidationError(f"W must be {d}x{d}, got {W.shape}")
    J = mix.signature.matrix()
    defect = float(np.max(np.abs(W @ J @ W.T - J)))
    if defect > ORTHOGONALITY_TOL:
        raise NotIndefiniteOrthogonal(
            f"max |W J W^T - J| = {defect}, exceeds {ORTHOGONALITY_TOL}"
        )
    return LatentMixture(
        atoms=mix.atoms @ W.T, weights=mix.weights, signature=mix.signature
    )


def model_to_dict(model: BlockModelParams | LatentMixture) -> dict:
    """Plain-JSON representation, inverse of ``model_from_dict``."""
    if isinstance(model, BlockModelParams):
        return {"B": model.B.tolist(), "pi": model.pi.tolist()}
    return {
        "atoms": [
            {"nu": model.atoms[k].tolist(), "weight": float(model.weights[k])}
            for k in range(model.n_atoms)
        ],
        "p": model.signature.plus,
        "q": model.signature.minus,
    }


def model_from_dict(doc: dict) -> BlockModelParams | LatentMixture:
    """Build a model from its JSON dict form.

    A dict with keys "B" and "pi" is a block model; a dict with "atoms"
    (a list of {"nu": [...], "weight": w}), "p", and "q" is a latent mixture.
    """
    if not isinstance(doc, dict):
        raise ValidationError(f"model document must be an object, got {type(doc)}")
    if "B" in doc:
        if "pi" not in doc:
            raise ValidationError('block model document needs both "B" and "pi"')
        return BlockModelParams(B=np.asarray(doc["B"]), pi=np.asarray(doc["pi"]))
    if "atoms" in doc:
        if "p" not in doc or "q" not in doc:
            raise ValidationError('mixture document needs "atoms", "p", and "q"')
        atoms = np.asarray([a["nu"] for a in doc["atoms"]], dtype=np.float64)
        weights = np.asarray([a["weight"] for a in doc["atoms"]], dtype=np.float64)
        return LatentMixture(
            atoms=atoms, weights=weights, signature=Signature(int(doc["p"]), int(doc["q"]))
        )
    raise ValidationError(
        'model document must contain either "B"/"pi" or "atoms"/"p"/"q"'
    )


def load_model(path: str | Path) -> BlockModelParams | LatentMixture:
    """Read a model from a JSON file."""
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(model: BlockModelParams | LatentMixture, path: str | Path) -> None:
    """Write a model to a JSON file."""
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def as_mixture(model: BlockModelParams | LatentMixture) -> LatentMixture:
    """Coerce either parameterization to a latent mixture."""
    if isinstance(model, LatentMixture):
        return model
    return sbm_to_grdpg(model)
