"""Where an extreme eigenvalue's fluctuation comes from.

Each centered extreme eigenvalue splits exactly into three parts:

  term1    -- a linear form in the edge noise (the part that carries the
              normal fluctuation),
  term2    -- a quadratic form that concentrates on the conditional mean
              offset (the part that carries the bias),
  residual -- everything else, which vanishes as the graph grows.

The script samples graphs of increasing size from a two-community model
and tabulates the median magnitudes: term2 hugs the conditional mean
offset more tightly as n grows, and the residual dies out fast.
"""

import numpy as np

from speclab import (
    BlockModelParams,
    StreamPurpose,
    as_mixture,
    conditional_mean_offsets,
    decomposition_diagnostic,
    match_eigenvalues,
    probability_eigenpairs,
    replicate_seed,
    sample_adjacency,
    sample_latents,
    top_eigenpairs_sparse,
)

SIZES = [250, 500, 1000, 2000]
REPLICATES = 60
SEED = 4040


def main() -> None:
    mix = as_mixture(
        BlockModelParams(B=np.array([[0.3, 0.5], [0.5, 0.3]]), pi=np.array([0.3, 0.7]))
    )
    print(f"two-community model, {REPLICATES} replicates per size, "
          f"master seed {SEED}")
    print()
    header = (f"{'n':>6}  {'med |term1|':>12}  {'med |term2 - offset|':>20}  "
              f"{'med |residual|':>14}")
    print(header)
    print("-" * len(header))
    for k, n in enumerate(SIZES):
        t1, t2err, res = [], [], []
        for r in range(REPLICATES):
            idx = k * REPLICATES + r
            latents = sample_latents(
                mix, n, replicate_seed(SEED, idx, StreamPurpose.LATENTS)
            )
            ref = probability_eigenpairs(latents)
            graph = sample_adjacency(
                latents, replicate_seed(SEED, idx, StreamPurpose.ADJACENCY)
            )
            found = top_eigenpairs_sparse(graph, 2)
            perm = match_eigenvalues(found.values, ref.values)
            diag = decomposition_diagnostic(graph, latents, ref, found.values[perm])
            offsets = conditional_mean_offsets(latents, ref)
            t1.append(np.abs(diag.linear_term))
            t2err.append(np.abs(diag.quadratic_term - offsets))
            res.append(np.abs(diag.residual))
        print(f"{n:>6}  {np.median(t1):>12.4f}  {np.median(t2err):>20.4f}  "
              f"{np.median(res):>14.4f}")
    print()
    print("term1 stays order one (it feeds the normal law); the other two")
    print("columns shrink -- the bias term toward its closed-form offset and")
    print("the residual toward zero.")


if __name__ == "__main__":
    main()
