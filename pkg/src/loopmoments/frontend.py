"""Input language frontend: parsing and structural validation.

The input language describes a single infinite probabilistic loop::

    x = 0
    while true:
      u = RV(uniform, 0, b)
      g = RV(gauss, 0, 1)
      x = x - u @ 1/2; x + u @ 1/2
      y = y + x + g

Three sections, one assignment per line: initial values before the loop
header, random-variable draws at the top of the body, then probabilistic
updates.  An update line lists branches separated by ``;`` with branch
probabilities after ``@``; a single branch may omit its probability.
Expressions are ``+``/``-``/``*`` combinations of names and numeric
literals (decimals and fractions like ``1/2``, both read exactly).  Names
never assigned anywhere are parameters.  Lines starting with ``#`` are
comments, and only the literal header ``while true:`` is accepted.

:func:`parse_program` builds a :class:`Program`; :func:`validate_program`
checks the structural restrictions that make moment computation possible
and returns a :class:`ValidatedProgram` for the rest of the pipeline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Union

from .symbolic import Poly

# The loop counter name is reserved so reports stay unambiguous.
RESERVED_NAMES = frozenset({"n", "RV"})

DIST_KINDS = ("uniform", "gauss")


class ParseError(Exception):
    """Syntax error, with 1-based line/column when known."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f"line {line}"
            if col is not None:
                where += f", col {col}"
            where = f" ({where})"
        super().__init__(f"{message}{where}")


class UnsupportedProgramError(Exception):
    """The program parses but violates a structural restriction.

    ``restriction`` names which of the three requirements failed:
    ``"distinctness"`` (assigned names pairwise distinct, variables never
    used where only parameters are allowed), ``"probability-sum"``
    (branch probabilities of an update sum to 1), or
    ``"dependency-structure"`` (updates depend on themselves linearly and
    otherwise only on previously assigned variables).
    """

    def __init__(self, restriction: str, message: str, line: int | None = None):
        self.restriction = restriction
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{restriction}: {message}{where}")


@dataclass(frozen=True)
class Distribution:
    """A parametrized sampling distribution.

    ``uniform`` takes lower and upper bound; ``gauss`` takes mean and
    variance.  Both arguments are polynomials over parameters only.
    """

    kind: str
    arg1: Poly
    arg2: Poly

    def __str__(self) -> str:
        return f"RV({self.kind}, {poly_to_source(self.arg1)}, {poly_to_source(self.arg2)})"


@dataclass(frozen=True)
class UpdateBranch:
    expr: Poly
    prob: Poly


@dataclass(frozen=True)
class BranchUpdate:
    branches: tuple[UpdateBranch, ...]


InitValue = Union[Poly, Distribution]


@dataclass(frozen=True)
class InitAssignment:
    var: str
    value: InitValue
    line: int


@dataclass(frozen=True)
class RvAssignment:
    var: str
    dist: Distribution
    line: int


@dataclass(frozen=True)
class UpdateAssignment:
    var: str
    update: BranchUpdate
    line: int


@dataclass(frozen=True)
class Program:
    """A parsed loop, before validation.

    Assignment order is textual order; ``parameters`` holds every symbol
    that is never assigned anywhere in the program.
    """

    init_assignments: tuple[InitAssignment, ...]
    rv_assignments: tuple[RvAssignment, ...]
    update_assignments: tuple[UpdateAssignment, ...]
    parameters: frozenset[str]

    @property
    def source_span_map(self) -> dict[tuple[str, str], int]:
        spans: dict[tuple[str, str], int] = {}
        for a in self.init_assignments:
            spans[("init", a.var)] = a.line
        for r in self.rv_assignments:
            spans[("rv", r.var)] = r.line
        for u in self.update_assignments:
            spans[("update", u.var)] = u.line
        return spans

    def assigned_variables(self) -> list[str]:
        names = [a.var for a in self.init_assignments]
        names += [r.var for r in self.rv_assignments]
        names += [u.var for u in self.update_assignments]
        seen: dict[str, None] = {}
        for n in names:
            seen.setdefault(n)
        return list(seen)


@dataclass(frozen=True, eq=False)
class ValidatedProgram:
    """A :class:`Program` that passed :func:`validate_program`, plus views
    the moment engine needs repeatedly."""

    program: Program
    rv_dists: Mapping[str, Distribution]
    init_values: Mapping[str, InitValue]
    # update-assigned variables in textual order
    update_vars: tuple[str, ...]
    # variables assigned only in the init section (constants through the loop)
    const_vars: tuple[str, ...]

    @property
    def parameters(self) -> frozenset[str]:
        return self.program.parameters

    @property
    def update_assignments(self) -> tuple[UpdateAssignment, ...]:
        return self.program.update_assignments

    def state_vars(self) -> frozenset[str]:
        """Variables carried from iteration to iteration."""
        return frozenset(self.update_vars) | frozenset(self.const_vars)

    def all_variables(self) -> tuple[str, ...]:
        """Every assigned variable, in program order."""
        ordered = [r.var for r in self.program.rv_assignments]
        ordered += list(self.update_vars)
        ordered += list(self.const_vars)
        return tuple(ordered)


# ---------------------------------------------------------------------------
# Tokenizing and expression parsing
# ---------------------------------------------------------------------------

_NUM_RE = re.compile(r"\d+\.?\d*(?:/[1-9]\d*)?")
_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9]*")


@dataclass(frozen=True)
class _Token:
    kind: str  # "num" | "name" | "op"
    text: str
    col: int


def _tokenize(text: str, line: int, col_offset: int = 0) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        col = col_offset + i + 1
        if ch.isdigit():
            m = _NUM_RE.match(text, i)
            assert m is not None
            tokens.append(_Token("num", m.group(), col))
            i = m.end()
        elif ch.isalpha():
            m = _NAME_RE.match(text, i)
            assert m is not None
            tokens.append(_Token("name", m.group(), col))
            i = m.end()
        elif ch in "+-*":
            tokens.append(_Token("op", ch, col))
            i += 1
        else:
            raise ParseError(f"unexpected character {ch!r}", line, col)
    return tokens


def _literal_to_fraction(text: str) -> Fraction:
    # Decimal part and optional /denominator are both exact.
    if "/" in text:
        num, den = text.split("/", 1)
        return Fraction(Fraction(num), int(den))
    return Fraction(text)


class _ExprParser:
    """Recursive descent over +, -, * with unary minus; no parentheses,
    no powers -- exactly the input expression language."""

    def __init__(self, tokens: list[_Token], line: int):
        self.tokens = tokens
        self.line = line
        self.pos = 0

    def _peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self) -> _Token:
        tok = self._peek()
        if tok is None:
            raise ParseError("unexpected end of expression", self.line)
        self.pos += 1
        return tok

    def parse(self) -> Poly:
        value = self._sum()
        tok = self._peek()
        if tok is not None:
            raise ParseError(f"unexpected {tok.text!r}", self.line, tok.col)
        return value

    def _sum(self) -> Poly:
        value = self._product()
        while True:
            tok = self._peek()
            if tok is None or tok.text not in "+-":
                return value
            self._next()
            rhs = self._product()
            value = value + rhs if tok.text == "+" else value - rhs

    def _product(self) -> Poly:
        value = self._factor()
        while True:
            tok = self._peek()
            if tok is None or tok.text != "*":
                return value
            self._next()
            value = value * self._factor()

    def _factor(self) -> Poly:
        tok = self._next()
        if tok.kind == "op" and tok.text == "-":
            return -self._factor()
        if tok.kind == "num":
            return Poly.const(_literal_to_fraction(tok.text))
        if tok.kind == "name":
            if tok.text in RESERVED_NAMES:
                raise ParseError(f"{tok.text!r} is a reserved name", self.line, tok.col)
            return Poly.var(tok.text)
        raise ParseError(f"unexpected {tok.text!r}", self.line, tok.col)


def parse_expression(text: str, line: int = 0, col_offset: int = 0) -> Poly:
    tokens = _tokenize(text, line, col_offset)
    if not tokens:
        raise ParseError("empty expression", line, col_offset + 1)
    return _ExprParser(tokens, line).parse()


# ---------------------------------------------------------------------------
# Program parsing
# ---------------------------------------------------------------------------

_HEADER = "while true:"
_RV_PREFIX = re.compile(r"^RV\s*\(")


def _parse_distribution(text: str, line: int) -> Distribution:
    body = text.strip()
    if not body.endswith(")"):
        raise ParseError("random-variable expression must end with ')'", line)
    inner = _RV_PREFIX.sub("", body, count=1)[:-1]
    parts = inner.split(",")
    if len(parts) != 3:
        raise ParseError("RV(...) takes a distribution name and two arguments", line)
    kind = parts[0].strip()
    if kind not in DIST_KINDS:
        raise ParseError(
            f"unknown distribution {kind!r}; expected one of {', '.join(DIST_KINDS)}", line
        )
    arg1 = parse_expression(parts[1], line)
    arg2 = parse_expression(parts[2], line)
    return Distribution(kind, arg1, arg2)


def _split_assignment(text: str, line: int) -> tuple[str, str]:
    if "=" not in text:
        raise ParseError("expected an assignment 'var = expression'", line)
    lhs, rhs = text.split("=", 1)
    var = lhs.strip()
    if not _NAME_RE.fullmatch(var):
        raise ParseError(f"bad variable name {var!r}", line)
    if var in RESERVED_NAMES:
        raise ParseError(f"{var!r} is a reserved name", line)
    return var, rhs


def _parse_update(rhs: str, line: int) -> BranchUpdate:
    chunks = rhs.split(";")
    branches: list[UpdateBranch] = []
    for chunk in chunks:
        if "@" in chunk:
            expr_text, prob_text = chunk.split("@", 1)
            if "@" in prob_text:
                raise ParseError("multiple '@' in one branch", line)
            expr = parse_expression(expr_text, line)
            prob = parse_expression(prob_text, line)
        else:
            if len(chunks) > 1:
                raise ParseError(
                    "'@' probability missing on a multi-branch update", line
                )
            expr = parse_expression(chunk, line)
            prob = Poly.const(1)
        branches.append(UpdateBranch(expr, prob))
    return BranchUpdate(tuple(branches))


def parse_program(source_text: str) -> Program:
    """Parse loop source text into a :class:`Program`.

    Raises :class:`ParseError` on malformed input; structural restrictions
    are checked separately by :func:`validate_program`.
    """
    lines: list[tuple[int, str]] = []
    for no, raw in enumerate(source_text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        lines.append((no, stripped))

    header_at = [i for i, (_, text) in enumerate(lines) if text == _HEADER]
    if not header_at:
        for no, text in lines:
            if text.startswith("while"):
                raise ParseError(
                    f"only the literal loop header {_HEADER!r} is supported", no
                )
        raise ParseError(f"missing loop header {_HEADER!r}")
    if len(header_at) > 1:
        raise ParseError("duplicate loop header", lines[header_at[1]][0])
    split = header_at[0]

    inits: list[InitAssignment] = []
    for no, text in lines[:split]:
        var, rhs = _split_assignment(text, no)
        if _RV_PREFIX.match(rhs.strip()):
            value: InitValue = _parse_distribution(rhs, no)
        else:
            value = parse_expression(rhs, no)
        inits.append(InitAssignment(var, value, no))

    rvs: list[RvAssignment] = []
    updates: list[UpdateAssignment] = []
    for no, text in lines[split + 1 :]:
        var, rhs = _split_assignment(text, no)
        if _RV_PREFIX.match(rhs.strip()):
            if updates:
                raise ParseError(
                    "random-variable assignments must precede update assignments", no
                )
            rvs.append(RvAssignment(var, _parse_distribution(rhs, no), no))
        else:
            updates.append(UpdateAssignment(var, _parse_update(rhs, no), no))

    if not updates:
        raise ParseError("the loop body must contain at least one update assignment")

    assigned = {a.var for a in inits} | {r.var for r in rvs} | {u.var for u in updates}
    mentioned: set[str] = set()
    for a in inits:
        if isinstance(a.value, Distribution):
            mentioned |= a.value.arg1.symbols() | a.value.arg2.symbols()
        else:
            mentioned |= a.value.symbols()
    for r in rvs:
        mentioned |= r.dist.arg1.symbols() | r.dist.arg2.symbols()
    for u in updates:
        for br in u.update.branches:
            mentioned |= br.expr.symbols() | br.prob.symbols()
    parameters = frozenset(mentioned - assigned)

    return Program(tuple(inits), tuple(rvs), tuple(updates), parameters)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _check_parameter_only(
    expr: Poly, program_vars: set[str], what: str, line: int
) -> None:
    clash = sorted(expr.symbols() & program_vars)
    if clash:
        raise UnsupportedProgramError(
            "distinctness",
            f"{what} must not reference program variables (found {', '.join(clash)})",
            line,
        )


def validate_program(p: Program) -> ValidatedProgram:
    """Confirm the restrictions that guarantee solvable moment recurrences.

    Checked in order: assigned names are pairwise distinct and variables
    never occur in parameter-only positions (distribution arguments,
    branch probabilities); branch probabilities of each update sum to the
    constant 1; every update is linear in its own variable with a
    parameter-only self-coefficient and otherwise references only
    variables assigned earlier.  Violations raise
    :class:`UnsupportedProgramError` with the restriction named.
    """
    seen: dict[str, int] = {}
    for a in p.init_assignments:
        if a.var in seen:
            raise UnsupportedProgramError(
                "distinctness", f"variable {a.var!r} initialized twice", a.line
            )
        seen[a.var] = a.line
    loop_seen: dict[str, int] = {}
    for r in p.rv_assignments:
        if r.var in loop_seen:
            raise UnsupportedProgramError(
                "distinctness", f"variable {r.var!r} assigned twice in the body", r.line
            )
        loop_seen[r.var] = r.line
    for u in p.update_assignments:
        if u.var in loop_seen:
            raise UnsupportedProgramError(
                "distinctness", f"variable {u.var!r} assigned twice in the body", u.line
            )
        loop_seen[u.var] = u.line

    rv_dists = {r.var: r.dist for r in p.rv_assignments}
    update_vars = tuple(u.var for u in p.update_assignments)
    init_values: dict[str, InitValue] = {a.var: a.value for a in p.init_assignments}
    const_vars = tuple(
        a.var for a in p.init_assignments if a.var not in loop_seen
    )
    program_vars = set(rv_dists) | set(update_vars) | set(const_vars)

    for a in p.init_assignments:
        if isinstance(a.value, Distribution):
            _check_parameter_only(a.value.arg1, program_vars, "distribution argument", a.line)
            _check_parameter_only(a.value.arg2, program_vars, "distribution argument", a.line)
        else:
            _check_parameter_only(a.value, program_vars, "initial value", a.line)
    for r in p.rv_assignments:
        _check_parameter_only(r.dist.arg1, program_vars, "distribution argument", r.line)
        _check_parameter_only(r.dist.arg2, program_vars, "distribution argument", r.line)

    for u in p.update_assignments:
        total = Poly()
        for br in u.update.branches:
            _check_parameter_only(br.prob, program_vars, "branch probability", u.line)
            if br.prob.is_const() and br.prob.const_value() < 0:
                raise UnsupportedProgramError(
                    "probability-sum",
                    f"negative branch probability {br.prob} in update of {u.var!r}",
                    u.line,
                )
            total = total + br.prob
        if total != Poly.const(1):
            raise UnsupportedProgramError(
                "probability-sum",
                f"branch probabilities of {u.var!r} sum to {total}, not 1",
                u.line,
            )

    # Dependency structure: linear in self, polynomial only in variables
    # assigned earlier (random draws, earlier updates, init-only constants).
    visible = set(rv_dists) | set(const_vars)
    for u in p.update_assignments:
        for br in u.update.branches:
            by_power = br.expr.coefficients_by_power(u.var)
            if any(d > 1 for d in by_power):
                raise UnsupportedProgramError(
                    "dependency-structure",
                    f"update of {u.var!r} is nonlinear in itself",
                    u.line,
                )
            self_coeff = by_power.get(1)
            if self_coeff is not None:
                bad = sorted(self_coeff.symbols() & program_vars)
                if bad:
                    raise UnsupportedProgramError(
                        "dependency-structure",
                        f"self-coefficient of {u.var!r} references program "
                        f"variable(s) {', '.join(bad)}",
                        u.line,
                    )
            rest = by_power.get(0)
            if rest is not None:
                forward = sorted(rest.symbols() & (program_vars - visible))
                if forward:
                    raise UnsupportedProgramError(
                        "dependency-structure",
                        f"update of {u.var!r} references {', '.join(forward)} "
                        "before assignment in the body",
                        u.line,
                    )
        visible.add(u.var)

    return ValidatedProgram(
        program=p,
        rv_dists=rv_dists,
        init_values=init_values,
        update_vars=update_vars,
        const_vars=const_vars,
    )


def initial_value_symbol(var: str) -> str:
    """The parameter name standing for an unspecified initial value."""
    return f"{var}(0)"


def resolve_initial_value(vp: ValidatedProgram, var: str) -> InitValue:
    """Symbolic description of ``var`` before the first iteration.

    An explicit init assignment wins; a random-variable draw without one is
    described by its own distribution (measurements of it see the latest
    draw); anything else becomes the symbolic parameter ``var(0)``.
    """
    if var in vp.init_values:
        return vp.init_values[var]
    if var in vp.rv_dists:
        return vp.rv_dists[var]
    if var in vp.update_vars:
        return Poly.var(initial_value_symbol(var))
    raise ValueError(f"{var!r} is not an assigned variable of the program")


# ---------------------------------------------------------------------------
# Pretty printing (round-trips through parse_program)
# ---------------------------------------------------------------------------


def poly_to_source(p: Poly) -> str:
    """Render a polynomial in input-language syntax (no powers, fractions as
    numeric literals), so the output parses back to an equal polynomial."""
    if p.is_zero():
        return "0"
    parts: list[str] = []
    for mono, coeff in p.sorted_terms():
        factors: list[str] = []
        num = abs(coeff.numerator)
        if num != 1 or coeff.denominator != 1 or not mono:
            lit = str(num)
            if coeff.denominator != 1:
                lit += f"/{coeff.denominator}"
            factors.append(lit)
        for name, exp in mono:
            factors.extend([name] * exp)
        body = "*".join(factors)
        if not parts:
            parts.append(body if coeff >= 0 else f"-{body}")
        else:
            parts.append(f"+ {body}" if coeff >= 0 else f"- {body}")
    return " ".join(parts)


def _init_value_to_source(value: InitValue) -> str:
    if isinstance(value, Distribution):
        return (
            f"RV({value.kind}, {poly_to_source(value.arg1)}, "
            f"{poly_to_source(value.arg2)})"
        )
    return poly_to_source(value)


def format_program(p: Program) -> str:
    """Source text for a parsed program; parsing it back yields an equal
    :class:`Program` (up to line numbers)."""
    out: list[str] = []
    for a in p.init_assignments:
        out.append(f"{a.var} = {_init_value_to_source(a.value)}")
    out.append(_HEADER)
    for r in p.rv_assignments:
        out.append(f"{r.var} = {_init_value_to_source(r.dist)}")
    for u in p.update_assignments:
        branches = []
        for br in u.update.branches:
            if len(u.update.branches) == 1 and br.prob == Poly.const(1):
                branches.append(poly_to_source(br.expr))
            else:
                branches.append(f"{poly_to_source(br.expr)} @ {poly_to_source(br.prob)}")
        out.append(f"{u.var} = {'; '.join(branches)}")
    return "\n".join(out) + "\n"


def structurally_equal(a: Program, b: Program) -> bool:
    """Equality ignoring source line numbers (for round-trip checks)."""
    return (
        [(x.var, x.value) for x in a.init_assignments]
        == [(x.var, x.value) for x in b.init_assignments]
        and [(r.var, r.dist) for r in a.rv_assignments]
        == [(r.var, r.dist) for r in b.rv_assignments]
        and [(u.var, u.update) for u in a.update_assignments]
        == [(u.var, u.update) for u in b.update_assignments]
        and a.parameters == b.parameters
    )
