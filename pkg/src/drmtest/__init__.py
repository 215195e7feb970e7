"""Empirical likelihood inference for multiple samples under the density ratio model."""

from .chisq import chi2_cdf, chi2_quantile, chi2_sf, noncentral_chi2_cdf, noncentral_chi2_quantile, noncentral_chi2_sf
from .dual import ConvergenceError, FitOptions, FitResult, del_derivatives, del_value, fit_constrained, fit_mele
from .estimate import baseline_weights, el_kernel_density, fitted_cdf
from .hypothesis import HypothesisParseError, format_hypothesis, parse_hypothesis
from .infer import (
    InfoMatrix,
    TestResult,
    delr_test,
    empirical_information,
    permutation_test,
    wald_test,
)
from .model import BasisSpec, ConstraintSpec, DomainError, MultiSample, Theta, build_basis, validate_dataset
from .power import (
    BaselineSpec,
    DesignSpec,
    LocalAlternative,
    compare_designs,
    local_power,
    noncentrality,
    sample_size,
    theoretical_information,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineSpec", "BasisSpec", "ConstraintSpec", "ConvergenceError", "DesignSpec", "DomainError",
    "FitOptions", "FitResult", "HypothesisParseError", "InfoMatrix", "LocalAlternative", "MultiSample",
    "TestResult", "Theta", "baseline_weights", "build_basis", "chi2_cdf", "chi2_quantile", "chi2_sf",
    "compare_designs", "del_derivatives", "del_value", "delr_test", "el_kernel_density",
    "empirical_information", "fit_constrained", "fit_mele", "fitted_cdf", "format_hypothesis",
    "local_power", "noncentral_chi2_cdf", "noncentral_chi2_quantile", "noncentral_chi2_sf",
    "noncentrality", "parse_hypothesis", "permutation_test", "sample_size", "theoretical_information",
    "validate_dataset", "wald_test",
]
