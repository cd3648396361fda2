"""Exact closed-form moments for probabilistic loop programs.

The public surface: :func:`analyze` runs source text through the whole
pipeline and returns an :class:`InvariantReport`; the frontend, moment,
recurrence, report, and verifier modules expose the individual stages.
"""

from .frontend import (
    BranchUpdate,
    Distribution,
    ParseError,
    Program,
    UnsupportedProgramError,
    UpdateBranch,
    ValidatedProgram,
    format_program,
    parse_program,
    resolve_initial_value,
    validate_program,
)
from .moments import (
    ClosureOverflowError,
    MomentEquation,
    MomentTable,
    initial_moment,
    moment_closure,
    moment_equation,
    rv_raw_moment,
)
from .pipeline import (
    AllVarsGoal,
    Goal,
    GoalError,
    InvariantReport,
    MomentGoal,
    VerifyEntry,
    VerifyReport,
    analyze,
    goal_moments,
    parse_goals,
)
from .recurrences import (
    CyclicDependencyError,
    Recurrence,
    SolverError,
    UnresolvedBaseError,
    build_recurrence,
    solve_all,
    solve_first_order,
    topo_order,
)
from .report import emit, emit_json, emit_tex, emit_txt, parse_closed_form, report_from_json
from .symbolic import ExpPoly, Moment, Poly, UnboundSymbolError
from .verifier import MomentEstimate, SimConfig, VerifierError, check, simulate

__version__ = "0.1.0"

__all__ = [
    "AllVarsGoal",
    "BranchUpdate",
    "ClosureOverflowError",
    "CyclicDependencyError",
    "Distribution",
    "ExpPoly",
    "Goal",
    "GoalError",
    "InvariantReport",
    "Moment",
    "MomentEquation",
    "MomentEstimate",
    "MomentGoal",
    "MomentTable",
    "ParseError",
    "Poly",
    "Program",
    "Recurrence",
    "SimConfig",
    "SolverError",
    "UnboundSymbolError",
    "UnresolvedBaseError",
    "UnsupportedProgramError",
    "UpdateBranch",
    "ValidatedProgram",
    "VerifierError",
    "VerifyEntry",
    "VerifyReport",
    "analyze",
    "build_recurrence",
    "check",
    "emit",
    "emit_json",
    "emit_tex",
    "emit_txt",
    "format_program",
    "goal_moments",
    "initial_moment",
    "moment_closure",
    "moment_equation",
    "parse_closed_form",
    "parse_goals",
    "parse_program",
    "report_from_json",
    "resolve_initial_value",
    "rv_raw_moment",
    "simulate",
    "solve_all",
    "solve_first_order",
    "topo_order",
    "validate_program",
    "__version__",
]
