"""Sparse Gaussian graphical models with Kronecker-structured support."""
from .estimators import (
    Algorithm,
    FitConfig,
    FitReport,
    FullHyper,
    QkpHyper,
    ScalarHyper,
    fit,
    joint_neg_loglik,
)
from .glasso import GlassoSolution, SolverOptions, solve_weighted_glasso
from .kron_init import init_hyperparams, kron_log_lstsq
from .matrix import KroneckerShape, NotPositiveDefinite, sample_covariance, sample_gaussian

__version__ = "0.1.0"
