"""Simulation, estimation, and the statistical check."""

from fractions import Fraction

import pytest

from loopmoments import ExpPoly, Moment, analyze
from loopmoments.verifier import (
    SimConfig,
    VerifierError,
    check,
    required_bindings,
    simulate,
)

from corpus import CORPUS, DISCRETE, WALK, enumerate_moments, load


def M(text: str) -> Moment:
    return Moment.parse(text)


def test_deterministic_program_is_estimated_exactly():
    vp = load("counter")
    cfg = SimConfig(bindings={}, iterations=7, trials=50, seed=1)
    est = simulate(vp, cfg, {M("v^1")})[M("v^1")]
    assert est.mean == 7.0
    assert est.sd == 0.0


def test_iteration_zero_measures_the_initial_state():
    vp = load("walk")
    cfg = SimConfig(bindings={"b": 2, "y(0)": 5}, iterations=0, trials=10, seed=1)
    est = simulate(vp, cfg, {M("x^2"), M("y^1")})
    assert est[M("x^2")].mean == 0.0
    assert est[M("y^1")].mean == 5.0


def test_same_seed_reproduces_bit_for_bit():
    vp = load("walk")
    cfg = SimConfig(bindings={"b": 2, "y(0)": 0}, iterations=10, trials=6000, seed=42)
    targets = {M("x^2"), M("y^2")}
    first = simulate(vp, cfg, targets)
    second = simulate(vp, cfg, targets)
    for t in targets:
        assert first[t].mean == second[t].mean
        assert first[t].sd == second[t].sd


def test_different_seeds_differ():
    vp = load("walk")
    targets = {M("x^2")}
    means = set()
    for seed in (1, 2, 3):
        cfg = SimConfig(bindings={"b": 2, "y(0)": 0}, iterations=10, trials=4000, seed=seed)
        means.add(simulate(vp, cfg, targets)[M("x^2")].mean)
    assert len(means) == 3


def test_unbound_parameter_is_reported():
    vp = load("walk")
    cfg = SimConfig(bindings={"b": 2}, iterations=5, trials=10, seed=0)
    with pytest.raises(VerifierError, match=r"y\(0\)"):
        simulate(vp, cfg, {M("y^1")})
    assert required_bindings(vp) == {"b", "y(0)"}


def test_probability_binding_outside_unit_interval():
    vp = analyze("v=0\nwhile true:\nv = v + 1 @ p; v @ 1 - p\n", [1]).validated
    cfg = SimConfig(bindings={"p": Fraction(3, 2)}, iterations=3, trials=10, seed=0)
    with pytest.raises(VerifierError, match="outside"):
        simulate(vp, cfg, {M("v^1")})


def test_config_sanity():
    with pytest.raises(VerifierError):
        SimConfig(bindings={}, iterations=-1, trials=10, seed=0)
    with pytest.raises(VerifierError):
        SimConfig(bindings={}, iterations=1, trials=1, seed=0)


def test_check_passes_on_matching_estimates():
    report = analyze(WALK, [1, 2])
    cfg = SimConfig(bindings={"b": 2, "y(0)": 0}, iterations=12, trials=20_000, seed=5)
    estimates = simulate(report.validated, cfg, set(report.invariants))
    result = check(report.invariants, estimates, cfg)
    assert result.passed
    assert {str(e.moment) for e in result.entries} == {str(m) for m in report.invariants}
    assert all(e.margin >= 0 for e in result.entries)


def test_check_detects_a_perturbed_closed_form():
    report = analyze(WALK, ["x^2"])
    cfg = SimConfig(bindings={"b": 2, "y(0)": 0}, iterations=20, trials=100_000, seed=9)
    estimates = simulate(report.validated, cfg, {M("x^2")})
    # se of E[x^2] at this budget is about 0.1, so a +1 shift must fail at z=5
    assert estimates[M("x^2")].se < 0.2
    perturbed = {M("x^2"): report.invariants[M("x^2")] + ExpPoly.const(1)}
    result = check(perturbed, estimates, cfg)
    assert not result.passed
    honest = check(report.invariants, estimates, cfg)
    assert honest.passed


def test_deterministic_case_passes_via_absolute_floor():
    vp = load("counter")
    cfg = SimConfig(bindings={}, iterations=7, trials=50, seed=1)
    estimates = simulate(vp, cfg, {M("v^1")})
    closed = {M("v^1"): ExpPoly.term(1, 1, 1)}  # n
    result = check(closed, estimates, cfg)
    assert result.passed
    entry = result.entries[0]
    assert entry.sd == 0.0 and entry.margin <= 1e-9


@pytest.mark.parametrize("name", sorted(DISCRETE))
def test_closed_forms_equal_exact_enumeration(name):
    # For branch-only programs, enumerating every path is an independent
    # semantics oracle; the closed forms must agree with it exactly.
    source, goals, bindings = CORPUS[name]
    report = analyze(source, goals, name=name)
    targets = sorted(report.invariants, key=Moment.sort_key)
    history = enumerate_moments(report.validated, bindings, targets, steps=5)
    for n in range(6):
        for t in targets:
            assert report.invariants[t].evaluate(n, bindings) == history[n][t], (
                name,
                str(t),
                n,
            )


def test_simulation_agrees_with_exact_enumeration():
    # Discrete program: the empirical mean over many trials must sit within
    # five standard errors of the exactly enumerated expectation.
    vp = load("stutter")
    cfg = SimConfig(bindings={}, iterations=5, trials=40_000, seed=13)
    targets = [M("s^1"), M("s^2")]
    estimates = simulate(vp, cfg, targets)
    exact = enumerate_moments(vp, {}, targets, steps=5)[5]
    for t in targets:
        est = estimates[t]
        assert abs(float(exact[t]) - est.mean) <= 5 * est.se + 1e-9


def test_statistical_soundness_across_seeds():
    # With z = 5 a correct closed form essentially never fails; spot-check
    # twenty seeds at a smaller budget.
    report = analyze(WALK, ["x^2"])
    failures = 0
    for seed in range(20):
        cfg = SimConfig(bindings={"b": 2, "y(0)": 0}, iterations=20, trials=8000, seed=seed)
        estimates = simulate(report.validated, cfg, {M("x^2")})
        if not check(report.invariants, estimates, cfg).passed:
            failures += 1
    assert failures == 0


def test_mixed_draw_state_moment_matches_simulation():
    # E[x*u] with x = x + u is a correlated joint moment (n/4 + 1/12 for
    # n >= 1); the measured estimate must match it, not E[x]*E[u].
    source = "x = 0\nwhile true:\nu = RV(uniform, 0, 1)\nx = x + u\n"
    report = analyze(source, ["x^1", "u^1*x^1"])
    cfg = SimConfig(bindings={}, iterations=12, trials=40_000, seed=77)
    estimates = simulate(report.validated, cfg, set(report.invariants))
    result = check(report.invariants, estimates, cfg)
    assert result.passed
    joint = report.invariants[M("u^1*x^1")]
    assert joint.evaluate(12, {}) == Fraction(12, 4) + Fraction(1, 12)


def test_gaussian_program_matches_closed_forms():
    source, goals, bindings = CORPUS["gauss_sum"]
    report = analyze(source, goals)
    cfg = SimConfig(bindings=bindings, iterations=15, trials=30_000, seed=21)
    estimates = simulate(report.validated, cfg, set(report.invariants))
    assert check(report.invariants, estimates, cfg).passed
