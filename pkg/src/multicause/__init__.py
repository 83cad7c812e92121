"""Numerical laboratory for factor-model causal estimators.

Synthetic multi-treatment data generators, substitute-confounder
extraction (PCA and probabilistic PCA), the estimators built on top of
them, closed-form bias limits, and a seeded Monte Carlo harness with a
command-line interface.
"""
from __future__ import annotations

from .asymptotics import (
    EigenStructure,
    eigen_structure,
    naive_bias,
    naive_focal_bias,
    penalized_bias,
    pinpointing_variance,
    posterior_mean_bias,
    residual_dependence,
    subset_bias,
    theta_hat_gram,
    white_noised_bias,
    white_noised_bias_limit,
    woodbury_projection,
)
from .errors import (
    CollinearityRiskError,
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateFactorError,
    DegenerateFocalError,
    DimensionError,
    DomainError,
    InstabilityError,
    MulticauseError,
    OracleComparisonError,
    RankDeficiencyError,
    SeparationError,
    SpecificationError,
)
from .estimators import (
    Annihilator,
    EstimateReport,
    fit_ols,
    flexible_penalized,
    fwl_residualize,
    logistic_suite,
    naive,
    oracle,
    pca_cv_ridge,
    penalized_full,
    posterior_mean_deconfounder,
    quadratic_deconf,
    quadratic_naive,
    quadratic_pair,
    semiparametric_naive,
    subset_deconfounder,
    subset_deconfounder_each,
    white_noised_deconfounder,
)
from .factor import (
    PpcaPosterior,
    SubstituteConfounder,
    add_white_noise,
    fix_eigvec_signs,
    pca_substitute,
    ppca_mle,
    ppca_posterior,
    sample_posterior_confounder,
)
from .harness import (
    EstimatorSpec,
    ExperimentConfig,
    SimulationSummary,
    SummaryRow,
    SweepPoint,
    compare_oracle,
    config_from_json,
    make_med1_spec,
    run_experiment,
    sweep,
)
from .model import (
    WEAK_LIMIT,
    ConfoundingSequence,
    Dataset,
    DgpSpec,
    as_generator,
    build_theta,
    dataset_from_csv,
    dataset_to_csv,
    make_subset_sim_spec,
    sample_linear_linear,
    sample_logistic,
    sample_quadratic,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "DgpSpec",
    "Dataset",
    "ConfoundingSequence",
    "WEAK_LIMIT",
    "as_generator",
    "build_theta",
    "sample_linear_linear",
    "sample_quadratic",
    "sample_logistic",
    "make_subset_sim_spec",
    "dataset_to_csv",
    "dataset_from_csv",
    # factor
    "SubstituteConfounder",
    "PpcaPosterior",
    "pca_substitute",
    "ppca_posterior",
    "ppca_mle",
    "sample_posterior_confounder",
    "add_white_noise",
    "fix_eigvec_signs",
    # estimators
    "EstimateReport",
    "Annihilator",
    "fit_ols",
    "oracle",
    "naive",
    "penalized_full",
    "flexible_penalized",
    "posterior_mean_deconfounder",
    "white_noised_deconfounder",
    "subset_deconfounder",
    "subset_deconfounder_each",
    "pca_cv_ridge",
    "quadratic_naive",
    "quadratic_deconf",
    "quadratic_pair",
    "logistic_suite",
    "fwl_residualize",
    "semiparametric_naive",
    # asymptotics
    "EigenStructure",
    "eigen_structure",
    "naive_bias",
    "naive_focal_bias",
    "penalized_bias",
    "posterior_mean_bias",
    "white_noised_bias",
    "white_noised_bias_limit",
    "subset_bias",
    "theta_hat_gram",
    "residual_dependence",
    "woodbury_projection",
    "pinpointing_variance",
    # harness
    "EstimatorSpec",
    "ExperimentConfig",
    "SummaryRow",
    "SimulationSummary",
    "SweepPoint",
    "make_med1_spec",
    "run_experiment",
    "compare_oracle",
    "sweep",
    "config_from_json",
    # errors
    "MulticauseError",
    "SpecificationError",
    "DimensionError",
    "DomainError",
    "DataError",
    "CollinearityRiskError",
    "OracleComparisonError",
    "ConfigError",
    "DegenerateFactorError",
    "DegenerateFocalError",
    "RankDeficiencyError",
    "ConvergenceError",
    "SeparationError",
    "InstabilityError",
]
