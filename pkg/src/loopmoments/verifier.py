"""Monte-Carlo cross-check of closed-form moments.

The simulator runs the validated loop forward under concrete parameter
bindings, estimates the target moments at iteration ``n`` from independent
trials, and compares each estimate against the exact closed form with a
z-score rule.  The symbolic side is exact, so the whole tolerance budget
is statistical: a disagreement beyond ``z`` standard errors flags a real
inconsistency rather than numeric noise.

Trials are grouped into fixed-size blocks; block ``b`` uses the RNG
substream spawned from ``(seed, b)``, so results are bit-for-bit
reproducible and independent of how blocks would be scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .frontend import Distribution, ValidatedProgram, initial_value_symbol
from .pipeline import VerifyEntry, VerifyReport
from .symbolic import ExpPoly, Moment, Poly, UnboundSymbolError

_BLOCK = 4096


class VerifierError(Exception):
    """Bad simulation configuration (unbound parameter, invalid binding)."""


@dataclass(frozen=True)
class SimConfig:
    """Concrete bindings and sampling budget for one verification run."""

    bindings: Mapping[str, Fraction]
    iterations: int
    trials: int
    seed: int

    def __post_init__(self):
        object.__setattr__(
            self, "bindings", {k: Fraction(v) for k, v in dict(self.bindings).items()}
        )
        if self.iterations < 0:
            raise VerifierError("iterations must be >= 0")
        if self.trials < 2:
            raise VerifierError("at least two trials are needed for a standard error")


@dataclass(frozen=True)
class MomentEstimate:
    moment: Moment
    mean: float
    sd: float
    se: float
    trials: int


def required_bindings(vp: ValidatedProgram) -> set[str]:
    """Parameter names the simulator needs bound, including the ``v(0)``
    symbols of update variables without an explicit initial value."""
    needed = set(vp.parameters)
    for var in vp.update_vars:
        if var not in vp.init_values and var not in vp.rv_dists:
            needed.add(initial_value_symbol(var))
    return needed


def _eval_param(poly: Poly, bindings: Mapping[str, Fraction], what: str) -> Fraction:
    try:
        return poly.evaluate(bindings)
    except UnboundSymbolError as exc:
        raise VerifierError(f"parameter {exc.name!r} needed by {what} is unbound") from None


def _compile_poly(poly: Poly, bindings: Mapping[str, Fraction], state_names: frozenset[str]):
    """Fold parameters into float coefficients; keep state factors symbolic."""
    compiled: list[tuple[float, tuple[tuple[str, int], ...]]] = []
    for mono, coeff in poly.terms():
        value = Fraction(coeff)
        factors: list[tuple[str, int]] = []
        for name, exp in mono:
            if name in state_names:
                factors.append((name, exp))
            else:
                if name not in bindings:
                    raise VerifierError(f"parameter {name!r} is unbound")
                value *= bindings[name] ** exp
        compiled.append((float(value), tuple(factors)))

    def evaluate(state: dict[str, np.ndarray], size: int) -> np.ndarray:
        total = np.zeros(size)
        for c, factors in compiled:
            term = np.full(size, c)
            for name, exp in factors:
                term = term * state[name] ** exp
            total += term
        return total

    return evaluate


def _draw(rng: np.random.Generator, dist: Distribution, bindings, size: int) -> np.ndarray:
    a = float(_eval_param(dist.arg1, bindings, "a distribution argument"))
    b = float(_eval_param(dist.arg2, bindings, "a distribution argument"))
    if dist.kind == "uniform":
        lo, hi = min(a, b), max(a, b)
        return rng.uniform(lo, hi, size) if lo != hi else np.full(size, lo)
    if dist.kind == "gauss":
        if b < 0:
            raise VerifierError(f"gauss variance evaluates to the negative value {b}")
        return rng.normal(a, math.sqrt(b), size)
    raise VerifierError(f"cannot sample distribution kind {dist.kind!r}")


def simulate(
    vp: ValidatedProgram, cfg: SimConfig, targets: Sequence[Moment] | set[Moment]
) -> dict[Moment, MomentEstimate]:
    """Estimate the target moments at iteration ``cfg.iterations``.

    Each trial initializes the variables (sampling distribution-valued
    initials, and giving draw variables a fresh initial sample so their
    moments are measurable at n = 0), then runs the body ``iterations``
    times: fresh draws first, then the updates in order, each update
    choosing a branch independently with its bound probabilities.
    """
    missing = sorted(required_bindings(vp) - set(cfg.bindings))
    if missing:
        raise VerifierError(f"unbound parameter(s): {', '.join(missing)}")
    target_list = sorted(set(targets), key=Moment.sort_key)
    for t in target_list:
        unknown = sorted(set(t.variables()) - set(vp.all_variables()))
        if unknown:
            raise VerifierError(f"target E[{t}] mentions unknown {', '.join(unknown)}")

    state_names = frozenset(vp.all_variables())
    bindings = cfg.bindings

    # Pre-compute branch probabilities (exactly) and compile expressions.
    updates = []
    for assignment in vp.update_assignments:
        probs = []
        for branch in assignment.update.branches:
            p = _eval_param(branch.prob, bindings, f"a branch probability of {assignment.var!r}")
            if p < 0 or p > 1:
                raise VerifierError(
                    f"branch probability of {assignment.var!r} evaluates to {p}, "
                    "outside [0, 1]"
                )
            probs.append(p)
        thresholds = np.cumsum([float(p) for p in probs])
        exprs = [
            _compile_poly(branch.expr, bindings, state_names)
            for branch in assignment.update.branches
        ]
        updates.append((assignment.var, thresholds, exprs))

    init_plan = []
    for var in vp.all_variables():
        if var in vp.init_values:
            init_plan.append((var, vp.init_values[var]))
        elif var in vp.rv_dists:
            init_plan.append((var, vp.rv_dists[var]))
        else:
            init_plan.append((var, Poly.var(initial_value_symbol(var))))

    sums = {t: 0.0 for t in target_list}
    sumsq = {t: 0.0 for t in target_list}

    n_blocks = (cfg.trials + _BLOCK - 1) // _BLOCK
    for block in range(n_blocks):
        size = min(_BLOCK, cfg.trials - block * _BLOCK)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg.seed, spawn_key=(block,))
        )
        state: dict[str, np.ndarray] = {}
        for var, desc in init_plan:
            if isinstance(desc, Distribution):
                state[var] = _draw(rng, desc, bindings, size)
            else:
                state[var] = np.full(size, float(_eval_param(desc, bindings, f"init of {var!r}")))

        for _ in range(cfg.iterations):
            for rv in vp.program.rv_assignments:
                state[rv.var] = _draw(rng, rv.dist, bindings, size)
            for var, thresholds, exprs in updates:
                if len(exprs) == 1:
                    state[var] = exprs[0](state, size)
                    continue
                u = rng.random(size)
                choice = np.searchsorted(thresholds, u, side="right")
                np.clip(choice, 0, len(exprs) - 1, out=choice)
                stacked = np.stack([ev(state, size) for ev in exprs])
                state[var] = np.take_along_axis(stacked, choice[None, :], axis=0)[0]

        for t in target_list:
            values = np.ones(size)
            for var, exp in t.powers:
                values = values * state[var] ** exp
            sums[t] += float(values.sum())
            sumsq[t] += float((values * values).sum())

    out = {}
    n = cfg.trials
    for t in target_list:
        mean = sums[t] / n
        variance = max((sumsq[t] - n * mean * mean) / (n - 1), 0.0)
        sd = math.sqrt(variance)
        out[t] = MomentEstimate(t, mean, sd, sd / math.sqrt(n), n)
    return out


def check(
    closed: Mapping[Moment, ExpPoly],
    estimates: Mapping[Moment, MomentEstimate],
    cfg: SimConfig,
    z: float = 5.0,
) -> VerifyReport:
    """Compare closed forms against simulation estimates.

    A moment passes when |exact - mean| <= z*se, with an absolute floor of
    1e-9 reserved for the degenerate sd == 0 case (deterministic programs,
    where the estimate must agree to rounding).  Failures are entries in
    the report, not exceptions.
    """
    entries = []
    for moment in sorted(estimates, key=Moment.sort_key):
        if moment not in closed:
            raise VerifierError(f"no closed form supplied for E[{moment}]")
        est = estimates[moment]
        try:
            exact = closed[moment].evaluate(cfg.iterations, cfg.bindings)
        except UnboundSymbolError as exc:
            raise VerifierError(
                f"parameter {exc.name!r} of the closed form for E[{moment}] is unbound"
            ) from None
        expected = float(exact)
        atol = 1e-9 if est.sd == 0.0 else 0.0
        diff = abs(expected - est.mean)
        allowance = z * est.se + atol
        entries.append(
            VerifyEntry(
                moment=moment,
                expected=expected,
                mean=est.mean,
                sd=est.sd,
                se=est.se,
                margin=allowance - diff,
                passed=diff <= allowance,
            )
        )
    bindings = tuple(
        (name, str(value)) for name, value in sorted(cfg.bindings.items())
    )
    return VerifyReport(
        iterations=cfg.iterations,
        trials=cfg.trials,
        seed=cfg.seed,
        z=z,
        bindings=bindings,
        entries=tuple(entries),
    )
