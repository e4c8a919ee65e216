"""Heteroskedasticity tests for regressions whose covariate is measured with error."""

from .data import FrequencyGrid, Sample
from .error_cf import EstimatedCF, ReplicateSet, gaussian_cf, laplace_cf, no_error_cf
from .exceptions import ConfigurationError, DeconvHetError, NumericalError, StageError
from .kernels import FLAT_TOP, QuadratureConfig, decon_kernel, flat_top_kft
from .pipeline import TestReport, default_grid, heteroskedasticity_test, rule_of_thumb_bandwidth
from .regression import MeanModel, fit_corrected_ls

__all__ = [
    "FrequencyGrid",
    "Sample",
    "EstimatedCF",
    "ReplicateSet",
    "gaussian_cf",
    "laplace_cf",
    "no_error_cf",
    "ConfigurationError",
    "DeconvHetError",
    "NumericalError",
    "StageError",
    "FLAT_TOP",
    "QuadratureConfig",
    "decon_kernel",
    "flat_top_kft",
    "TestReport",
    "default_grid",
    "heteroskedasticity_test",
    "rule_of_thumb_bandwidth",
    "MeanModel",
    "fit_corrected_ls",
]

__version__ = "0.1.0"
