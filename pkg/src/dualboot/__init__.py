"""Uncertainty quantification for disparity estimates under imputed groups."""

from .bisg import (
    BisgRecord,
    CensusBundle,
    GeoPriorTable,
    SurnameTable,
    VarianceReplicates,
    bisg_dual_bootstrap,
    load_bisg_records_csv,
    load_geo_csv,
    load_replicates_csv,
    load_surname_csv,
)
from .bootstrap import BootstrapConfig, BootstrapResult, run_bootstrap
from .data import (
    DisparityEstimate,
    PrimaryDataset,
    ProbabilityMatrix,
    TrainingDataset,
    load_primary_csv,
    load_training_csv,
    weighted_disparity,
)
from .errors import DualbootError
from .logistic import LogisticModel, ModelSpec, fit_logistic, predict_proba
from .sandwich import ThetaVector, empirical_result, sandwich, solve_theta

__version__ = "1.0.0"

__all__ = [
    "BisgRecord",
    "BootstrapConfig",
    "BootstrapResult",
    "CensusBundle",
    "DisparityEstimate",
    "DualbootError",
    "GeoPriorTable",
    "LogisticModel",
    "ModelSpec",
    "PrimaryDataset",
    "ProbabilityMatrix",
    "SurnameTable",
    "ThetaVector",
    "TrainingDataset",
    "VarianceReplicates",
    "__version__",
    "bisg_dual_bootstrap",
    "empirical_result",
    "fit_logistic",
    "load_bisg_records_csv",
    "load_geo_csv",
    "load_primary_csv",
    "load_replicates_csv",
    "load_surname_csv",
    "load_training_csv",
    "predict_proba",
    "run_bootstrap",
    "sandwich",
    "solve_theta",
    "weighted_disparity",
]
