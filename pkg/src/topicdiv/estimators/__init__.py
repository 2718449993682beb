"""Panel estimators: two-way FE OLS, 2SLS, propensity-score matching, placebo."""

from ..kde import kde_curve
from .fe import (
    CONSTANT,
    INTERACTION,
    ConvergenceError,
    EstimationError,
    RegressionResult,
    RegressionSpec,
    absorbed_dof,
    cluster_vcov,
    column_values,
    group_codes,
    independent_columns,
    lsdv,
    ols_fe,
    with_interaction,
    within_demean,
)
from .iv import STOCK_YOGO_10PCT, KPStats, TslsResult, WeakInstrumentWarning, kp_tests, tsls
from .placebo import PlaceboDistribution, permute_within, placebo_run
from .psm import (
    BalanceRow,
    LogitFit,
    MatchResult,
    SeparationError,
    att,
    balance_diagnostics,
    common_support,
    fit_logit,
    logit_propensity,
    matched_panel,
    nn_match,
    psm,
    standardized_bias,
)

__all__ = [
    "CONSTANT", "INTERACTION", "ConvergenceError", "EstimationError", "RegressionResult", "RegressionSpec",
    "absorbed_dof", "cluster_vcov", "column_values", "group_codes", "independent_columns", "lsdv", "ols_fe",
    "with_interaction", "within_demean", "STOCK_YOGO_10PCT", "KPStats", "TslsResult",
    "WeakInstrumentWarning", "kp_tests", "tsls", "PlaceboDistribution", "permute_within", "placebo_run",
    "BalanceRow", "LogitFit", "MatchResult", "SeparationError", "att", "balance_diagnostics",
    "common_support", "fit_logit", "logit_propensity", "matched_panel", "nn_match", "psm",
    "standardized_bias", "kde_curve",
]
