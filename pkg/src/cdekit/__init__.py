"""Local polynomial estimation of conditional CDFs, densities and their derivatives.

Typical use::

    from cdekit import DataSet, EstimationConfig, EvaluationSpec, select_bandwidths, infer

    sel = select_bandwidths(data, grid, x_point, EstimationConfig())
    fit = infer(data, EvaluationSpec(grid, x_point, sel.bandwidths), EstimationConfig())
"""

from cdekit.bandwidth import BandwidthError, BandwidthSelection, select_bandwidths, select_imse_bandwidth
from cdekit.covariance import CovarianceEstimate, vstat_covariance
from cdekit.dgp import DgpSpec, draw_dgp, true_conditional
from cdekit.estimator import CdeFit, InsufficientLocalData, estimate_grid
from cdekit.inference import band_critical_value, infer, standard_ci, uniform_band
from cdekit.kernels import KernelFamily
from cdekit.model import DataError, DataSet, EstimationConfig, EvaluationSpec, default_grid, load_dataset
from cdekit.montecarlo import CoverageReport, run_coverage_study

__version__ = "0.1.0"

__all__ = [
    "BandwidthError", "BandwidthSelection", "CdeFit", "CoverageReport", "CovarianceEstimate",
    "DataError", "DataSet", "DgpSpec", "EstimationConfig", "EvaluationSpec", "InsufficientLocalData",
    "KernelFamily", "band_critical_value", "default_grid", "draw_dgp", "estimate_grid", "infer",
    "load_dataset", "run_coverage_study", "select_bandwidths", "select_imse_bandwidth", "standard_ci",
    "true_conditional", "uniform_band", "vstat_covariance",
]
