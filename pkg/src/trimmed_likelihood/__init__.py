"""
Trimmed Likelihood Estimation for Elliptical Models
===================================================

Robust location and scatter estimation by maximum likelihood on a sample
trimmed with an enlarged minimum volume ellipsoid:
- Gaussian and Student t radial families with exact and Monte-Carlo region probabilities
- Truncated, censored, restricted and gross-error ("smart") likelihood estimators
- EM and quasi-Newton maximizers with non-existence detection
- Information matrices, efficiencies, influence functions and standard errors
- Breakdown, consistency and rate experiments

Version: 1.0.0
"""

from .config import EstimationConfig, FitConfig, MonteCarloConfig, MveConfig
from .elliptical import EllipticalParams, Ellipsoid, RadialFamily, log_density, region_probability, sample
from .mve import TrimmedSample, enlarge, sample_mve, trim
from .estimators import (
    EstimatorVariant,
    FitResult,
    fit_censored,
    fit_pipeline,
    fit_restricted,
    fit_smart,
    fit_truncated,
)
from .inference import efficiency, influence, info_censored, info_gem, info_truncated
from .robustness_lab import ExperimentPlan, run_breakdown, run_consistency, run_rate

__version__ = "1.0.0"
__author__ = "Trimmed Likelihood"

__all__ = [
    "EstimationConfig",
    "FitConfig",
    "MonteCarloConfig",
    "MveConfig",
    "EllipticalParams",
    "Ellipsoid",
    "RadialFamily",
    "log_density",
    "region_probability",
    "sample",
    "TrimmedSample",
    "enlarge",
    "sample_mve",
    "trim",
    "EstimatorVariant",
    "FitResult",
    "fit_censored",
    "fit_pipeline",
    "fit_restricted",
    "fit_smart",
    "fit_truncated",
    "efficiency",
    "influence",
    "info_censored",
    "info_gem",
    "info_truncated",
    "ExperimentPlan",
    "run_breakdown",
    "run_consistency",
    "run_rate",
]
