"""Per-radius sparse recovery: basis pursuit, TV-regularised least squares, completion."""
from .completion import (
    METHODS,
    CompressedData,
    add_noise,
    complete_columns,
    complete_sinogram,
    default_eta,
    measure,
    radial_integrate,
    select_lambda,
)
from .l1 import BasisPursuitProblem, basis_pursuit, basis_pursuit_batch, project_l1_ball
from .tv import (
    SolverReport,
    TVProblem,
    fista_tv,
    fista_tv_batch,
    operator_norm_sq,
    total_variation,
    tv_prox,
)

__all__ = [
    "METHODS",
    "BasisPursuitProblem",
    "CompressedData",
    "SolverReport",
    "TVProblem",
    "add_noise",
    "basis_pursuit",
    "basis_pursuit_batch",
    "complete_columns",
    "complete_sinogram",
    "default_eta",
    "fista_tv",
    "fista_tv_batch",
    "measure",
    "operator_norm_sq",
    "project_l1_ball",
    "radial_integrate",
    "select_lambda",
    "total_variation",
    "tv_prox",
]
