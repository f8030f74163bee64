"""Cox proportional hazards regression with incomplete Gaussian covariates.

Estimation is by nonparametric maximum likelihood through an EM algorithm
whose E-step needs only one-dimensional numerical integration per subject,
regardless of how many covariates are missing; variable selection adds an
L1 penalty with coordinate-descent updates, a tuning-parameter path, and
BIC-selected refitting. A simulation bench, baseline estimators, and
bootstrap inference round out the package.
"""

from .baselines import complete_case, cox_fit, single_impute
from .bootstrap import BootstrapResult, bootstrap
from .data import BaselineHazard, ObservedSubject, ParameterSet, SurvivalData, cumulative_hazard
from .em import FitConfig, FitResult, fit_npmle, observed_loglik
from .errors import CoxemError
from .estep import SubjectExpectations, closed_form_expectations, erisk_at_new_beta, subject_expectations
from .gaussian import ConditionalNormal, MissingMask, RotatedSlice, conditional_mvn, householder_completion, mgf_phi, rotate_slice
from .lasso import LassoPath, coordinate_descent, fit_penalized, soft_threshold, tune_path
from .metrics import c_index, selection_metrics
from .quadrature import QuadratureRule, TiltedDensity, agh_expect, find_mode, gauss_hermite_rule
from .simulate import SimDesign, gen_dataset, high_dim_design, low_dim_design

__version__ = "0.1.0"

__all__ = [
    "BaselineHazard", "BootstrapResult", "ConditionalNormal", "CoxemError",
    "FitConfig", "FitResult", "LassoPath", "MissingMask", "ObservedSubject",
    "ParameterSet", "QuadratureRule", "RotatedSlice", "SimDesign",
    "SubjectExpectations", "SurvivalData", "TiltedDensity", "agh_expect",
    "bootstrap", "c_index", "closed_form_expectations", "complete_case",
    "conditional_mvn", "coordinate_descent", "cox_fit", "cumulative_hazard",
    "erisk_at_new_beta", "find_mode", "fit_npmle", "fit_penalized",
    "gauss_hermite_rule", "gen_dataset", "high_dim_design",
    "householder_completion", "low_dim_design", "mgf_phi", "observed_loglik",
    "rotate_slice", "selection_metrics", "single_impute", "soft_threshold",
    "subject_expectations", "tune_path",
]
