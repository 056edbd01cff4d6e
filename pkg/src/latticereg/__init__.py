"""Variational regularisation of linear inverse problems whose forward
operator is only known up to an entrywise order interval A_l <= A <= A_u.

The solver minimises (1/alpha) H(v|f) + J(u) subject to A_l u <= v <= A_u u
for a family of fidelities H (powers of norms, phi-divergences, transport
and indicator types) and regularisers J, certifies optimality through the
Fenchel dual, and the harness measures Bregman-distance convergence rates
under noise-level and bracket-width schedules.
"""

from .analysis import (
    RateFit,
    SourceFixture,
    bregman_one_sided,
    bregman_symmetric,
    fit_rate_slope,
    load_source_fixture,
    make_source_fixture,
    rate_bound_rhs,
    rate_constant,
    save_source_fixture,
)
from .config import (
    ExperimentConfig,
    OperatorSpec,
    load_experiment_config,
    load_problem,
    parse_fidelity,
    save_problem,
)
from .errors import (
    BracketingError,
    CalibrationError,
    ConfigError,
    FixtureError,
    LatticeRegError,
    MonotonicityError,
    OracleError,
    UnsupportedProxError,
    WellPosednessError,
)
from .estimators import LatticeRegression
from .fidelities import (
    BallIndicator,
    Fidelity,
    InfConvFidelity,
    PhiDivergence,
    PhiFunction,
    PowerNormFidelity,
    SumFidelity,
    TotalVariationFidelity,
    Wasserstein1D,
    combine_infconv,
    combine_sum,
    make_fidelity,
    register_phi,
)
from .harness import (
    CSV_HEADER,
    ExperimentResult,
    RateRow,
    build_bracket,
    emit_outputs,
    exact_penalisation_threshold,
    read_rows_csv,
    run_experiment,
)
from .lattice import (
    BracketPair,
    DenseOperator,
    Signal,
    check_bracketing,
    degenerate_bracket,
    dual_norm_kind,
    inner,
    leq,
    midpoint_grid,
    norm,
    pos_neg_split,
)
from .operators import (
    bracket_from_kernel_bounds,
    bracket_from_riemann,
    constant_kernel,
    exponential_kernel,
    gaussian_kernel,
    integral_operator,
    source_identification_bracket,
)
from .oracle import (
    OracleResult,
    brute_prox,
    brute_solve,
    brute_w1,
    default_suite,
    load_suite,
    multistart_descent,
    write_default_suite,
)
from .parameter_choice import (
    DiscrepancyTrace,
    MonotonicityReport,
    Schedule,
    apriori_alpha,
    discrepancy_alpha,
    monotonicity_sweep,
)
from .regularisers import (
    L1,
    Regulariser,
    SquaredL2,
    TotalVariation1D,
    make_regulariser,
    subgradient_residual,
)
from .solver import (
    Problem,
    SolveReport,
    SolverOptions,
    b_star_mu,
    dual_objective,
    duality_gap,
    kkt_residuals,
    primal_objective,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "BallIndicator",
    "BracketPair",
    "BracketingError",
    "CSV_HEADER",
    "CalibrationError",
    "ConfigError",
    "DenseOperator",
    "DiscrepancyTrace",
    "ExperimentConfig",
    "ExperimentResult",
    "Fidelity",
    "FixtureError",
    "InfConvFidelity",
    "L1",
    "LatticeRegError",
    "LatticeRegression",
    "MonotonicityError",
    "MonotonicityReport",
    "OperatorSpec",
    "OracleError",
    "OracleResult",
    "PhiDivergence",
    "PhiFunction",
    "PowerNormFidelity",
    "Problem",
    "RateFit",
    "RateRow",
    "Regulariser",
    "Schedule",
    "Signal",
    "SolveReport",
    "SolverOptions",
    "SquaredL2",
    "SumFidelity",
    "TotalVariation1D",
    "TotalVariationFidelity",
    "UnsupportedProxError",
    "Wasserstein1D",
    "WellPosednessError",
    "apriori_alpha",
    "b_star_mu",
    "bracket_from_kernel_bounds",
    "bracket_from_riemann",
    "bregman_one_sided",
    "bregman_symmetric",
    "brute_prox",
    "brute_solve",
    "brute_w1",
    "build_bracket",
    "check_bracketing",
    "combine_infconv",
    "combine_sum",
    "constant_kernel",
    "default_suite",
    "degenerate_bracket",
    "discrepancy_alpha",
    "dual_norm_kind",
    "dual_objective",
    "duality_gap",
    "emit_outputs",
    "exact_penalisation_threshold",
    "exponential_kernel",
    "fit_rate_slope",
    "gaussian_kernel",
    "inner",
    "integral_operator",
    "kkt_residuals",
    "leq",
    "load_experiment_config",
    "load_problem",
    "load_source_fixture",
    "load_suite",
    "make_fidelity",
    "make_regulariser",
    "make_source_fixture",
    "midpoint_grid",
    "monotonicity_sweep",
    "multistart_descent",
    "norm",
    "parse_fidelity",
    "pos_neg_split",
    "primal_objective",
    "rate_bound_rhs",
    "rate_constant",
    "read_rows_csv",
    "register_phi",
    "run_experiment",
    "save_problem",
    "save_source_fixture",
    "solve",
    "source_identification_bracket",
    "subgradient_residual",
    "write_default_suite",
]
