"""Grid topology learning and line-change detection from voltage statistics."""

from ._gridgm import (
    Grid,
    NumericalError,
    ValidationError,
    analytic_concentration,
    case33,
    detect_change,
    direct_concentration,
    gamma_thresholds,
    generate_grid,
    glasso_objective,
    graphical_lasso,
    laplacians,
    learn_neighborhood,
    learn_sign_rule,
    recover_parameters,
    sample_covariance,
    sample_voltages,
    score,
    voltage_covariance,
)

__all__ = [
    "Grid",
    "NumericalError",
    "ValidationError",
    "analytic_concentration",
    "case33",
    "detect_change",
    "direct_concentration",
    "gamma_thresholds",
    "generate_grid",
    "glasso_objective",
    "graphical_lasso",
    "laplacians",
    "learn_neighborhood",
    "learn_sign_rule",
    "recover_parameters",
    "sample_covariance",
    "sample_voltages",
    "score",
    "voltage_covariance",
]
