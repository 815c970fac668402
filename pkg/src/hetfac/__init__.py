"""hetfac: factor-loading heterogeneity diagnostics and heterogeneity-based
regression factor scores for orthogonal exploratory factor models.

The library covers exploratory factor model estimation (iterated principal
axis factoring), orthogonal rotation (Varimax and Procrustes target
rotation), regression factor scores with determinacy coefficients and
leave-one-out influence, an exact binomial test for inter-individual
loading heterogeneity, the heterogeneity-based regression factor score
predictor, and a seeded Monte Carlo study harness.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    HetfacError,
    InputError,
    NumericalError,
    SingularMatrixError,
)
from .factor_core import (
    CorrelationMatrix,
    DataMatrix,
    FactorModel,
    LoadingMatrix,
    PafOptions,
    correlation_from_data,
    implied_correlation,
    load_csv,
    loo_correlation,
    model_from_loadings,
    paf_fit,
)
from .heterogeneity import (
    ConditionalScores,
    FactorDecision,
    HeterogeneityReport,
    IndividualLoadingSet,
    LooLoadingSet,
    NullReference,
    SweepOptions,
    accept_individual_loadings,
    binomial_cutoff,
    candidate_loading,
    conditional_predictor,
    full_assignment,
    heterogeneity_test,
    hrfs_determinacy,
    hrfs_scores,
    loading_delta,
    loo_loading_sweep,
    null_reference_sd,
    salient_assignment,
)
from .rotation import (
    RotationResult,
    VarimaxOptions,
    align_sign,
    procrustes_target,
    rotate_model,
    varimax,
    varimax_criterion,
)
from .scoring import (
    DeterminacyReport,
    ScoreMatrix,
    determinacy_influence,
    determinacy_population,
    determinacy_sample,
    loo_determinacy,
    loo_determinacy_table,
    rfs_scores,
    rfs_weights,
    standardize,
)
from .simulation import (
    ConditionSummary,
    GeneratedSample,
    LoadingDraw,
    PopulationSpec,
    ReplicationOptions,
    ReplicationRecord,
    StudyResult,
    generate_individual_loadings,
    generate_sample,
    study_g_crit,
    run_replication,
    run_study,
    score_based_determinacy,
    summarize_condition,
)

__all__ = [name for name in dir() if not name.startswith("_")]
