"""Bayesian updating of polynomial chaos expansions: Kalman-type and conditional-expectation filters."""
from .basis import HermiteBasis, MultiIndexSet, QuadratureRule, build_index_set, gauss_hermite_rule, hermite_basis
from .filters import GainOperator, enkf_update, kalman_gain, spkf_update
from .nonlinear import PolynomialMap, ce_filter_update, fit_optimal_map, reduce_germ, reexpand_posterior
from .rv import Ensemble, PceVector, covariance, gaussian_regerm, linear_pce
from .surrogate import ForwardModel, fit_projection, fit_regression, solve_galerkin

__all__ = [
    "Ensemble", "ForwardModel", "GainOperator", "HermiteBasis", "MultiIndexSet", "PceVector", "PolynomialMap",
    "QuadratureRule", "build_index_set", "ce_filter_update", "covariance", "enkf_update", "fit_optimal_map",
    "fit_projection", "fit_regression", "gauss_hermite_rule", "gaussian_regerm", "hermite_basis",
    "kalman_gain", "linear_pce", "reduce_germ", "reexpand_posterior", "solve_galerkin", "spkf_update",
]
__version__ = "0.1.0"
