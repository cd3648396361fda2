"""End-to-end analysis: from loop source text to closed-form moments.

A goal is either "the k-th moments of every program variable" (written as
a bare integer) or one specific monomial moment (written like ``x^2`` or
``x^2*y``).  :func:`analyze` runs the whole pipeline -- parse, validate,
collect the needed moments, order and solve their recurrences -- and
returns an :class:`InvariantReport`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence, Union

from .frontend import ValidatedProgram, parse_program, validate_program
from .moments import MomentEquation, MomentTable, initial_moment, moment_closure
from .recurrences import solve_all, topo_order
from .symbolic import ExpPoly, Moment, Poly


@dataclass(frozen=True)
class AllVarsGoal:
    """The k-th moment of every assigned variable."""

    k: int

    def __str__(self) -> str:
        return str(self.k)


@dataclass(frozen=True)
class MomentGoal:
    """One specific monomial moment."""

    moment: Moment

    def __str__(self) -> str:
        return str(self.moment)


Goal = Union[AllVarsGoal, MomentGoal]


class GoalError(ValueError):
    """A goal token is malformed or refers to an unknown variable."""


def parse_goals(
    raw: Sequence[Union[str, int]], variables: Iterable[str] | None = None
) -> list[Goal]:
    """Turn goal tokens into goals.

    Integer tokens (or digit strings) become :class:`AllVarsGoal`; anything
    else is parsed as a monomial.  When ``variables`` is given, monomial
    goals must only mention those names.
    """
    if not raw:
        raise GoalError("at least one goal is required")
    known = set(variables) if variables is not None else None
    goals: list[Goal] = []
    for token in raw:
        if isinstance(token, int) or (isinstance(token, str) and token.strip().lstrip("-").isdigit()):
            k = int(token)
            if k < 1:
                raise GoalError(f"moment order must be >= 1, got {k}")
            goals.append(AllVarsGoal(k))
            continue
        try:
            moment = Moment.parse(str(token))
        except ValueError as exc:
            raise GoalError(str(exc)) from None
        if known is not None:
            unknown = sorted(set(moment.variables()) - known)
            if unknown:
                raise GoalError(
                    f"goal {token!r} mentions unknown variable(s): {', '.join(unknown)}"
                )
        goals.append(MomentGoal(moment))
    return goals


def goal_moments(goals: Sequence[Goal], vp: ValidatedProgram) -> list[Moment]:
    """The concrete moments a goal list asks for, in canonical order."""
    wanted: set[Moment] = set()
    for goal in goals:
        if isinstance(goal, AllVarsGoal):
            for var in vp.all_variables():
                wanted.add(Moment.single(var, goal.k))
        else:
            wanted.add(goal.moment)
    return sorted(wanted, key=Moment.sort_key)


@dataclass(frozen=True)
class VerifyEntry:
    """Comparison of one closed form against its simulation estimate."""

    moment: Moment
    expected: float
    mean: float
    sd: float
    se: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class VerifyReport:
    iterations: int
    trials: int
    seed: int
    z: float
    bindings: tuple[tuple[str, str], ...]  # parameter -> exact rational, as text
    entries: tuple[VerifyEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)


@dataclass(frozen=True, eq=False)
class InvariantReport:
    """Everything the analysis produced, ready for rendering.

    ``validated`` and ``equations`` are working state for follow-up stages
    (the simulation verifier); they are excluded from equality so reports
    survive serialization round-trips.
    """

    program_name: str
    variables: tuple[str, ...]
    parameters: tuple[str, ...]
    goals: tuple[Goal, ...]
    invariants: Mapping[Moment, ExpPoly]
    initial_moments: Mapping[Moment, Poly]
    symbolic_initials: tuple[str, ...]
    side_conditions: tuple[str, ...]
    elapsed_seconds: float
    verification: VerifyReport | None = None
    validated: ValidatedProgram | None = field(default=None, compare=False, repr=False)
    equations: Mapping[Moment, MomentEquation] | None = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self):
        object.__setattr__(self, "invariants", dict(self.invariants))
        object.__setattr__(self, "initial_moments", dict(self.initial_moments))

    def __eq__(self, other) -> bool:
        if not isinstance(other, InvariantReport):
            return NotImplemented
        return (
            self.program_name == other.program_name
            and self.variables == other.variables
            and self.parameters == other.parameters
            and self.goals == other.goals
            and dict(self.invariants) == dict(other.invariants)
            and dict(self.initial_moments) == dict(other.initial_moments)
            and self.symbolic_initials == other.symbolic_initials
            and self.side_conditions == other.side_conditions
            and self.elapsed_seconds == other.elapsed_seconds
            and self.verification == other.verification
        )

    def with_verification(self, verification: VerifyReport) -> "InvariantReport":
        return replace(self, verification=verification)


def analyze(
    source_text: str,
    goals: Sequence[Union[Goal, str, int]],
    *,
    name: str = "<input>",
    max_closure: int = 10_000,
) -> InvariantReport:
    """Compute closed-form moments of a loop program for the given goals."""
    started = time.perf_counter()
    program = parse_program(source_text)
    vp = validate_program(program)

    parsed_goals: list[Goal] = []
    for goal in goals:
        if isinstance(goal, (AllVarsGoal, MomentGoal)):
            if isinstance(goal, MomentGoal):
                unknown = sorted(set(goal.moment.variables()) - set(vp.all_variables()))
                if unknown:
                    raise GoalError(
                        f"goal {goal} mentions unknown variable(s): {', '.join(unknown)}"
                    )
            parsed_goals.append(goal)
        else:
            parsed_goals.extend(parse_goals([goal], vp.all_variables()))
    if not parsed_goals:
        raise GoalError("at least one goal is required")

    table = MomentTable()
    targets = goal_moments(parsed_goals, vp)
    equations = moment_closure(targets, vp, table, cap=max_closure)
    order = topo_order(equations)
    init_moments = {m: initial_moment(vp, m, table) for m in equations}
    solved, side_conditions = solve_all(order, equations, init_moments)

    symbolic_initials = sorted(
        {
            sym
            for form in solved.values()
            for sym in form.free_symbols()
            if sym.endswith("(0)")
        }
    )

    elapsed = time.perf_counter() - started
    return InvariantReport(
        program_name=name,
        variables=tuple(vp.all_variables()),
        parameters=tuple(sorted(vp.parameters)),
        goals=tuple(parsed_goals),
        invariants={m: solved[m] for m in sorted(solved, key=Moment.sort_key)},
        initial_moments={
            m: init_moments[m] for m in sorted(init_moments, key=Moment.sort_key)
        },
        symbolic_initials=tuple(symbolic_initials),
        side_conditions=tuple(side_conditions),
        elapsed_seconds=elapsed,
        validated=vp,
        equations=equations,
    )
