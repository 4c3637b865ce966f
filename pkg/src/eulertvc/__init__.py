"""Euler systems, transversality checks and uniform-convergence diagnostics for
infinite-horizon discrete-time problems whose stage utility couples N
consecutive decision vectors."""

from .autodiff import DomainError, Dual, StageEnv, evaluate, grad_stage, partial
from .diagnostics import (
    AssumptionVerdict,
    DiagGrid,
    OvertakingComparison,
    assess_assumptions,
    build_a_grid,
    objective_diff_sum,
    overtaking_compare,
    v_eps_T,
)
from .dsl import (
    DSLError,
    LexError,
    ParseError,
    PerturbationSpec,
    ProblemSpec,
    SemanticError,
    parse_expr,
    parse_problem,
    print_canonical,
    tokenize,
)
from .euler import (
    EulerSystem,
    assemble_system,
    directional_derivative_identity,
    euler_residual,
)
from .paths import Path
from .solver import SolveOptions, SolveReport, solve_truncated, steady_state
from .transversality import (
    BoundaryTermSeries,
    TvcVerdict,
    boundary_term,
    classify_tvc,
    michel_series,
    tvc_series,
)

__version__ = "0.1.0"
