"""Hyper-kernel ridge regression for multi-index models.

Nystrom-approximated kernel ridge regression composed with a learned low-rank
linear map, trained by variable projection or alternating gradient descent,
with adaptive hyperparameter selection and a reproducible experiment harness.
"""

from .errors import (CsvParseError, DegenerateDataError, HkrrError, NumericError,
                     SingularSystemError, StalledLineSearchError)
from .kernel import KernelConfig, kernel_eval, kernel_grad1, kernel_matrix
from .modelsel import (CVGrid, CVResult, cross_validate, init_candidates,
                       median_heuristic, mse, r2, truncate)
from .objective import (HyperModel, NystromObjective, SampleSet, als_centers,
                        assemble, grad_alpha, grad_b, leverage_scores, loss,
                        predict, reduced_objective, solve_alpha, uniform_centers)
from .optim import (BacktrackConfig, FitConfig, FitTrace, agd_fit,
                    armijo_step_u, armijo_step_v, lipschitz_alpha,
                    project_spectral_ball, varpro_fit)
from .synthdata import (GenSpec, generate, generate_ds1, generate_ds2, read_csv,
                        sample_true_b, split, write_csv)
from .toy2d import BasinMap, ToyObjective, basin_map, toy_eval, toy_inner_solve

__version__ = "0.1.0"

__all__ = [
    "BacktrackConfig", "BasinMap", "CVGrid", "CVResult", "CsvParseError",
    "DegenerateDataError", "FitConfig", "FitTrace", "GenSpec", "HkrrError",
    "HyperModel", "KernelConfig", "NumericError", "NystromObjective",
    "SampleSet", "SingularSystemError", "StalledLineSearchError",
    "ToyObjective", "agd_fit", "als_centers", "assemble", "basin_map",
    "cross_validate", "generate", "generate_ds1", "generate_ds2",
    "grad_alpha", "grad_b", "init_candidates", "kernel_eval", "kernel_grad1",
    "kernel_matrix", "leverage_scores", "lipschitz_alpha", "loss",
    "median_heuristic", "mse", "predict", "project_spectral_ball", "r2",
    "read_csv", "reduced_objective", "sample_true_b", "solve_alpha", "split",
    "toy_eval", "toy_inner_solve", "truncate", "uniform_centers",
    "varpro_fit", "write_csv", "armijo_step_u", "armijo_step_v",
]
