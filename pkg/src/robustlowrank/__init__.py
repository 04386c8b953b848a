"""Robust low-rank approximation of data matrices and rank-one mean tests.

The fitting pipeline combines a random-subset initial estimate, quantile
trimming of high-residual rows, and per-row M-estimation into a robust
singular value decomposition.  On top of it sit score tests (asymptotic
and wild-bootstrap calibrated) for the adequacy of a rank-one mean
structure, plus a Monte Carlo harness for rejection-rate tables.
"""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DegenerateDataError,
    DegenerateScaleError,
    InputError,
    NumericError,
    RobustLowRankError,
)
from .loss import LossSpec, huber, least_squares, logistic, loss_deriv, loss_second_deriv, loss_value, scale_adaptive_c
from .numkit import SvdResult, sample_quantile, svd, sym_eig_top
from .rowfit import RowFitResult, fit_all_rows, fit_row
from .robustfit import (
    RobustFit,
    TrimConfig,
    residual_sqnorms,
    robust_svd,
    subset_initial,
    trim_weights,
    weighted_column_estimate,
)
from .inference import (
    DirectionSet,
    TestResult,
    bootstrap_pvalue,
    direction_test,
    group_contrast,
    group_mean_direction,
    multi_direction_test,
    orthogonalize_direction,
    score_vector,
    sigma_hat,
    test_unidimensionality,
)
from .simlab import SimConfig, TableCell, generate_dataset, run_table

__all__ = [
    "__version__",
    "RobustLowRankError",
    "InputError",
    "NumericError",
    "DegenerateDataError",
    "DegenerateScaleError",
    "ConvergenceError",
    "LossSpec",
    "least_squares",
    "huber",
    "logistic",
    "loss_value",
    "loss_deriv",
    "loss_second_deriv",
    "scale_adaptive_c",
    "SvdResult",
    "svd",
    "sym_eig_top",
    "sample_quantile",
    "RowFitResult",
    "fit_row",
    "fit_all_rows",
    "TrimConfig",
    "RobustFit",
    "subset_initial",
    "residual_sqnorms",
    "trim_weights",
    "weighted_column_estimate",
    "robust_svd",
    "DirectionSet",
    "TestResult",
    "score_vector",
    "sigma_hat",
    "direction_test",
    "multi_direction_test",
    "orthogonalize_direction",
    "group_contrast",
    "group_mean_direction",
    "bootstrap_pvalue",
    "test_unidimensionality",
    "SimConfig",
    "TableCell",
    "generate_dataset",
    "run_table",
]
