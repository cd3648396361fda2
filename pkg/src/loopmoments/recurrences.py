"""First-order linear recurrences over tracked moments and their closed forms.

Each moment equation becomes, once its non-self dependencies are solved,

    f(n+1) = c * f(n) + inhom(n)

with a constant ``c`` and an exponential-polynomial inhomogeneity.  Such
recurrences are solved exactly by undetermined coefficients: every base of
the inhomogeneity contributes an ansatz polynomial of matching degree (one
higher when the base equals ``c``), and the homogeneous term absorbs the
initial value.  The resulting triangular systems are solved top-down over
exact polynomial coefficients.

Every closed form is verified symbolically before it is returned:
``f(n+1) - c*f(n) - inhom(n)`` must normalize to zero and ``f(0)`` must
equal the initial moment.  A failure of that check is a bug, never an
approximation.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Mapping

from .moments import MomentEquation
from .symbolic import ExpPoly, Moment, Poly


class CyclicDependencyError(Exception):
    """Moment equations depend on each other in a cycle (other than the
    usual self-loop); unreachable for validated programs."""

    def __init__(self, cycle: list[Moment]):
        super().__init__(
            "cyclic dependency between moments: " + " -> ".join(f"E[{m}]" for m in cycle)
        )
        self.cycle = cycle


class SolverError(Exception):
    """The solver could not produce (or verify) a closed form."""


class UnresolvedBaseError(SolverError):
    """A parameterized base comparison or division could not be resolved.

    Raised when deciding whether a base equals the self-coefficient -- or
    dividing by their difference -- would require reasoning about parameter
    values.  The honest outcome is an error naming both quantities, not a
    guess.
    """

    def __init__(self, numerator: Poly, divisor: Poly):
        super().__init__(
            f"cannot divide {numerator} exactly by the parameterized quantity "
            f"{divisor}; closed-form coefficients would leave the polynomial ring"
        )
        self.numerator = numerator
        self.divisor = divisor


@dataclass(frozen=True)
class Recurrence:
    """E[target](n+1) = self_coeff * E[target](n) + inhom(n), with the
    initial moment E[target](0) = init."""

    target: Moment
    self_coeff: Poly
    inhom: ExpPoly
    init: Poly


def topo_order(equations: Mapping[Moment, MomentEquation]) -> list[Moment]:
    """Moments ordered so every non-self dependency precedes its user.

    Deterministic: ties are broken by the canonical moment order, with
    dependency-free moments (the constant draw moments among them) first.
    """
    moments = set(equations)
    deps: dict[Moment, set[Moment]] = {}
    for m, eq in equations.items():
        missing = eq.dependencies() - moments
        if missing:
            raise SolverError(
                f"equation for E[{m}] mentions unsolved moment(s) "
                + ", ".join(f"E[{d}]" for d in sorted(missing, key=Moment.sort_key))
            )
        deps[m] = eq.dependencies()

    users: dict[Moment, set[Moment]] = {m: set() for m in moments}
    for m, ds in deps.items():
        for d in ds:
            users[d].add(m)

    def ready_key(m: Moment) -> tuple:
        # Constant equations (no linear part at all, e.g. raw draw moments)
        # go first; the canonical moment order breaks the remaining ties.
        constant_first = 0 if not equations[m].linear else 1
        return (constant_first,) + m.sort_key() + (m,)

    remaining = {m: len(ds) for m, ds in deps.items()}
    ready = [ready_key(m) for m, count in remaining.items() if count == 0]
    heapq.heapify(ready)
    order: list[Moment] = []
    while ready:
        m = heapq.heappop(ready)[-1]
        order.append(m)
        for user in users[m]:
            remaining[user] -= 1
            if remaining[user] == 0:
                heapq.heappush(ready, ready_key(user))
    if len(order) != len(moments):
        leftover = [m for m in sorted(moments, key=Moment.sort_key) if m not in set(order)]
        raise CyclicDependencyError(_find_cycle(leftover, deps))
    return order


def _find_cycle(leftover: list[Moment], deps: Mapping[Moment, set[Moment]]) -> list[Moment]:
    stuck = set(leftover)
    start = leftover[0]
    path = [start]
    seen = {start}
    current = start
    while True:
        nxt = min(
            (d for d in deps[current] if d in stuck), key=Moment.sort_key, default=None
        )
        if nxt is None:
            return path
        if nxt in seen:
            return path[path.index(nxt) :] + [nxt]
        path.append(nxt)
        seen.add(nxt)
        current = nxt


def build_recurrence(
    eq: MomentEquation,
    solved: Mapping[Moment, ExpPoly],
    init_moments: Mapping[Moment, Poly],
) -> Recurrence:
    """Fold already-solved dependencies into a single-variable recurrence."""
    inhom = ExpPoly.const(eq.constant)
    for moment, coeff in eq.linear.items():
        if moment == eq.target:
            continue
        if moment not in solved:
            raise SolverError(
                f"missing closed form for E[{moment}] while building E[{eq.target}]"
            )
        inhom = inhom + solved[moment].scale(coeff)
    if eq.target not in init_moments:
        raise SolverError(f"missing initial moment for E[{eq.target}]")
    return Recurrence(
        target=eq.target,
        self_coeff=eq.self_coefficient(),
        inhom=inhom,
        init=init_moments[eq.target],
    )


class _SideConditions:
    """Collects distinctness assumptions made about parameterized bases."""

    def __init__(self):
        self.notes: list[str] = []

    def assume_distinct(self, base: Poly, coeff: Poly) -> None:
        note = f"{base} != {coeff}"
        if note not in self.notes:
            self.notes.append(note)


def _divide(numerator: Poly, divisor: Poly, sides: _SideConditions | None) -> Poly:
    """Exact division in the coefficient ring.

    Rational divisors always succeed; parameterized divisors succeed only
    when the quotient stays polynomial, and record the nonzero-divisor
    assumption as a side condition.
    """
    if divisor.is_zero():
        raise SolverError("internal: division by zero while matching coefficients")
    if divisor.is_const():
        return numerator / divisor.const_value()
    quotient = numerator.exact_div(divisor)
    if quotient is None:
        raise UnresolvedBaseError(numerator, divisor)
    return quotient


def solve_first_order(
    rec: Recurrence, side_conditions: _SideConditions | None = None
) -> ExpPoly:
    """Exact closed form of a first-order constant-coefficient recurrence.

    Per inhomogeneity base rho with polynomial part P of degree d:

    * rho != c: ansatz Q of degree d with rho*Q(n+1) - c*Q(n) = P(n),
      solved top-down (the leading coefficient needs division by rho - c).
    * rho == c (resonance, including the ubiquitous c == 1 with constant
      inhomogeneity): ansatz n*Q with degree d+1 and no constant term,
      satisfying rho*(Q(n+1) - Q(n)) = P(n).

    The homogeneous term alpha*c^n matches the initial value.  A base-0
    term in the result (0^n with 0^0 == 1) carries a one-point correction
    at n = 0; base-0 resonance (c == 0 meeting a base-0 inhomogeneity)
    would need a correction at n = 1, which this representation cannot
    express, so it is reported as an error.
    """
    sides = side_conditions if side_conditions is not None else _SideConditions()
    c = rec.self_coeff
    particular = ExpPoly.zero()

    for base, parts in rec.inhom.by_base().items():
        degree = max(parts)
        coeffs = {d: parts.get(d, Poly()) for d in range(degree + 1)}
        delta = base - c
        if delta.is_zero():
            if base.is_zero():
                raise SolverError(
                    f"E[{rec.target}]: inhomogeneity active only at n = 0 with no "
                    "self-term; the transient at n = 1 has no closed form here"
                )
            # Resonance: Q(n) = sum_{j=1}^{d+1} q_j n^j solves
            # base*(Q(n+1) - Q(n)) = P(n); match n^m top-down.
            q: dict[int, Poly] = {}
            for m in range(degree, -1, -1):
                acc = Poly()
                for j in range(m + 2, degree + 2):
                    if j in q:
                        acc = acc + q[j] * math.comb(j, m)
                target = _divide(coeffs[m], base, sides) - acc
                q[m + 1] = _divide(target, Poly.const(math.comb(m + 1, m)), sides)
            for j, qj in q.items():
                particular = particular + ExpPoly.term(qj, base, j)
        else:
            if not delta.is_const():
                sides.assume_distinct(base, c)
            # Distinct base: Q of degree d with base*Q(n+1) - c*Q(n) = P(n);
            # coefficient of n^m gives (base - c)*q_m + base*sum_{j>m} ...
            q = {}
            for m in range(degree, -1, -1):
                acc = Poly()
                for j in range(m + 1, degree + 1):
                    if j in q:
                        acc = acc + q[j] * math.comb(j, m)
                q[m] = _divide(coeffs[m] - base * acc, delta, sides)
            for j, qj in q.items():
                particular = particular + ExpPoly.term(qj, base, j)

    alpha = rec.init - particular.value_at_zero()
    closed = particular + ExpPoly.term(alpha, c, 0)

    residual = closed.shift() - closed.scale(c) - rec.inhom
    if not residual.is_zero() or closed.value_at_zero() != rec.init:
        raise SolverError(
            f"internal: closed form for E[{rec.target}] failed its defining "
            f"identity (residual {residual})"
        )
    return closed


def solve_all(
    order: list[Moment],
    equations: Mapping[Moment, MomentEquation],
    init_moments: Mapping[Moment, Poly],
) -> tuple[dict[Moment, ExpPoly], list[str]]:
    """Closed forms for every moment along a dependency order.

    Returns the solution map and the side conditions assumed while solving
    (parameterized bases treated as distinct from self-coefficients).
    """
    solved: dict[Moment, ExpPoly] = {}
    sides = _SideConditions()
    for moment in order:
        rec = build_recurrence(equations[moment], solved, init_moments)
        try:
            solved[moment] = solve_first_order(rec, sides)
        except SolverError as exc:
            if f"E[{moment}]" not in str(exc):
                exc.args = (f"E[{moment}]: {exc.args[0]}",)
            raise
    return solved, sides.notes
