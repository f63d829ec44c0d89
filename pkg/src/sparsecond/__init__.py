"""Componentwise condition numbers for sparse matrices: exact values, smoothed
Monte Carlo experiments against theoretical bounds, and a reduced-precision
forward-substitution accuracy lab."""

from .conditioning import (
    ConditionReport,
    batch_cond_det,
    batch_cond_inverse,
    batch_cond_inverse_entries,
    batch_cond_solve,
    batch_cond_solve_entries,
    bound_inverse_entries,
    bound_inverse_entry,
    bound_solve_entries,
    bound_solve_entry,
    componentwise_distance,
    cond_det,
    cond_inverse,
    cond_inverse_entries,
    cond_inverse_entry,
    cond_solve,
    cond_solve_entries,
    cond_solve_entry,
    condition_report,
    oracle_condition,
)
from .fplab import (
    AccuracySummary,
    PrecisionConfig,
    SolveAccuracyReport,
    backward_error_bound,
    backward_error_omega,
    smoothed_lop_bound,
    forward_substitution,
    forward_substitution_batch,
    lop_prediction,
    loss_of_precision,
    rel_error,
    round_p,
    round_p_array,
    run_accuracy_experiment,
    solve_accuracy,
)
from .linalg import (
    SINGULAR,
    LuFactorization,
    PatternedMatrix,
    SingularFlag,
    determinant,
    inverse,
    lu_factor,
    minor,
    read_matrix_file,
    read_vector_file,
    replace_column,
    solve,
    write_matrix_file,
    write_vector_file,
)
from .patterns import (
    SparsityPattern,
    full_pattern,
    is_admissible,
    lower_triangular_pattern,
    pattern_from_mask,
    read_pattern_file,
    tridiagonal_pattern,
    write_pattern_file,
)
from .smoothed import (
    GaussianModel,
    LogExpectationEstimate,
    TailEstimate,
    det_logexp_bound,
    det_tail_bound,
    estimate_logexp,
    estimate_tail,
    expectation_bound_from_tail,
    gaussian_ratio_tail_bound,
    inverse_logexp_bound,
    inverse_tail_bound,
    parse_logexp_csv,
    parse_tail_csv,
    sample,
    sample_batch,
    solve_logexp_bound,
    solve_tail_bound,
    triangular_logexp_bound,
    triangular_tail_bound,
    verify_ratio_tail,
    wilson_upper_99,
)

__all__ = [name for name in dir() if not name.startswith("_")]
