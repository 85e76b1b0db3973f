"""Data-driven calibration of linear smoothers with minimal penalties."""

__version__ = "0.1.0"

from .calibration import (
    CalibrationResult,
    CGrid,
    MinPenPath,
    calibrate,
    check_assumptions,
    estimate_variance,
    kappa_from_decay,
    minpen_path,
    select_with_plugin,
)
from .criteria import argmin_over_family, gcv_score, kfold_cv_score
from .exceptions import InputError, NoJumpError, NumericalError
from .kernels import Eigensystem, KernelSpec, build_kernel_matrix, eigendecompose, kernel_value
from .smoothers import MklGrid, ProjectionSet, RidgePath, SmootherStats, ridge_fit, ridge_stats
