"""Spectral fluctuation laboratory for low-rank Bernoulli graphs.

The package samples block models and generalized dot-product graphs, extracts
extreme adjacency eigenvalues, evaluates the closed-form normal limit laws for
their fluctuations, and checks theory against seeded Monte Carlo experiments.
"""

from .errors import (
    AmbiguousMatching,
    AsymmetricB,
    BadSimplexVector,
    DegenerateGram,
    DegenerateVariance,
    EntryOutOfRange,
    FormOutOfRange,
    NoConvergence,
    NotIndefiniteOrthogonal,
    NotSimpleSpectrum,
    RankDeficiencyAmbiguous,
    RequiresPositiveSemidefinite,
    SingularDelta,
    SpeclabError,
    TooLargeForOracle,
    ValidationError,
)
from .experiment import (
    ExperimentConfig,
    ExperimentReport,
    KsEntry,
    KsResult,
    MatchResult,
    ReplicateRecord,
    empirical_moments,
    kolmogorov_sf,
    ks_test,
    match_eigenvalues,
    run_experiment,
    save_histograms,
    save_replicates_csv,
    save_report_json,
)
from .limits import (
    ConditionalLaw,
    DecompositionDiagnostic,
    LimitLaw,
    PopulationMoments,
    conditional_law,
    conditional_law_to_dict,
    conditional_mean_offsets,
    conditional_variances,
    decomposition_diagnostic,
    limit_covariance,
    limit_covariance_rdpg,
    limit_law,
    limit_law_to_dict,
    limit_mean_offsets,
    limit_mean_offsets_rdpg,
    load_conditional_law,
    load_limit_law,
    population_moments,
    save_conditional_law,
    save_limit_law,
)
from .model import (
    BlockModelParams,
    LatentMixture,
    Signature,
    as_mixture,
    indefinite_orthogonal_transform,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    sbm_to_grdpg,
    validate_block_model,
)
from .sampling import (
    AdjacencyGraph,
    LatentSample,
    ProbabilityMatrix,
    SeedRecord,
    StreamPurpose,
    load_edges,
    load_latents,
    probability_matrix,
    replicate_seed,
    rng_from_seed,
    sample_adjacency,
    sample_latents,
    save_edges,
    save_latents,
)
from .spectral import (
    SpectralResult,
    dense_eigen_oracle,
    fix_signs,
    modulus_order,
    probability_eigenpairs,
    top_eigenpairs_sparse,
)

__version__ = "0.1.0"
