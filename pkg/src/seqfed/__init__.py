"""Sequential federated estimation for generalized linear models.

Each site recruits observations one at a time (uniformly or by an
A-optimality score), refits a maximum quasi-likelihood estimate after every
recruit, and stops once both a parameter-precision condition and a
prediction-precision condition hold.  Site estimates are then pooled with
sample-size weights into a fixed-size confidence set for the shared
parameters.  A Monte Carlo harness and a CLI wrap the same machinery.
"""
from .confidence import ConfidenceEllipsoid, max_axis_length
from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateClassesError,
    EmptyPoolError,
    EstimationError,
    ExhaustedSiteError,
    InitInfeasibleError,
    SingularInformationError,
)
from .experiment import ExperimentConfig, run_experiment
from .families import LinearFamily, LogisticFamily
from .federation import (
    CombinedResult,
    FederatedSequentialEstimator,
    FederationPlan,
    allocate_budget,
    combine,
    combined_confidence_set,
    confidence_set_contains,
    wald_statistic,
)
from .glm import CommonSelector, FitResult, QuasiLikelihoodGLM, fit_mqle
from .metrics import auc_with_variance, mse_criterion
from .sequential import (
    SequentialSiteEstimator,
    SiteConfig,
    SiteResult,
    run_site,
    site_confidence_set,
)
from .simdata import SimDesign, make_pool

__version__ = "0.1.0"

__all__ = [
    "CombinedResult",
    "CommonSelector",
    "ConfidenceEllipsoid",
    "ConfigError",
    "DataFormatError",
    "DegenerateClassesError",
    "EmptyPoolError",
    "EstimationError",
    "ExhaustedSiteError",
    "ExperimentConfig",
    "FederatedSequentialEstimator",
    "FederationPlan",
    "FitResult",
    "InitInfeasibleError",
    "LinearFamily",
    "LogisticFamily",
    "QuasiLikelihoodGLM",
    "SequentialSiteEstimator",
    "SimDesign",
    "SingularInformationError",
    "SiteConfig",
    "SiteResult",
    "allocate_budget",
    "auc_with_variance",
    "combine",
    "combined_confidence_set",
    "confidence_set_contains",
    "fit_mqle",
    "make_pool",
    "max_axis_length",
    "mse_criterion",
    "run_experiment",
    "run_site",
    "site_confidence_set",
    "wald_statistic",
    "__version__",
]
