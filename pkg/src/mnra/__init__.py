"""Low n-rank tensor recovery by iterative hard thresholding."""

from .linalg import SketchConfig, SvdResult, approx_hard_threshold, exact_svd, hard_threshold_rank, linear_time_svd
from .operators import DenseSensingOperator, SamplingOperator
from .problems import ProblemInstance, generate_low_nrank, make_instance, nrmse, rel_err, sample_omega
from .solver import (
    DivergenceError,
    SolverConfig,
    SolverResult,
    SolverTrace,
    iht_step,
    solve,
    solve_fixed_rank,
    solve_heuristic_rank,
    stopping_check,
)
from .tensor import fold, frobenius_norm, inner, mode_product, unfold

__version__ = "0.1.0"
