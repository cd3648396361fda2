"""Distribution moments, one-step equations, and the moment closure."""

import math
from fractions import Fraction

import pytest

from loopmoments import (
    ClosureOverflowError,
    Moment,
    MomentEquation,
    MomentTable,
    Poly,
    initial_moment,
    moment_closure,
    moment_equation,
    parse_program,
    rv_raw_moment,
    validate_program,
)
from loopmoments.frontend import Distribution

from corpus import CORPUS, FiniteSupportTable, enumerate_moments, load

a, b, mu, var = (Poly.var(s) for s in ("a", "b", "mu", "var"))


def M(text: str) -> Moment:
    return Moment.parse(text)


# -- raw moments ---------------------------------------------------------------


def test_uniform_moments():
    d = Distribution("uniform", Poly.const(0), b)
    assert rv_raw_moment(d, 0) == Poly.const(1)
    assert rv_raw_moment(d, 1) == b / 2
    assert rv_raw_moment(d, 2) == b**2 / 3
    general = Distribution("uniform", a, b)
    assert rv_raw_moment(general, 1) == (a + b) / 2
    assert rv_raw_moment(general, 2) == (a**2 + a * b + b**2) / 3


def test_uniform_point_mass():
    d = Distribution("uniform", a, a)
    for k in range(5):
        assert rv_raw_moment(d, k) == a**k


def test_gauss_moments():
    std = Distribution("gauss", Poly.const(0), Poly.const(1))
    assert rv_raw_moment(std, 2) == Poly.const(1)
    assert rv_raw_moment(std, 3) == Poly.const(0)
    general = Distribution("gauss", mu, var)
    assert rv_raw_moment(general, 2) == mu**2 + var
    # frozen expansion of the recurrence, cross-checked numerically below
    assert rv_raw_moment(general, 4) == mu**4 + 6 * mu**2 * var + 3 * var**2


def test_gauss_fourth_moment_against_quadrature():
    from scipy import integrate

    d = Distribution("gauss", mu, var)
    exact = rv_raw_moment(d, 4).evaluate({"mu": 1, "var": 2})

    def integrand(t):
        return t**4 * math.exp(-((t - 1.0) ** 2) / 4.0) / math.sqrt(4.0 * math.pi)

    numeric, _ = integrate.quad(integrand, -math.inf, math.inf, epsabs=1e-13, epsrel=1e-13)
    assert abs(numeric - float(exact)) <= 1e-9 * abs(float(exact))


def test_moment_table_memoizes():
    table = MomentTable()
    d = Distribution("uniform", Poly.const(0), b)
    first = table.moment(d, 5)
    assert table.moment(d, 5) is first


# -- one-step equations ---------------------------------------------------------


def walk_equation(target: str) -> MomentEquation:
    vp = load("walk")
    return moment_equation(M(target), vp, MomentTable())


def test_walk_first_moment_of_y():
    eq = walk_equation("y^1")
    assert eq.linear == {M("y^1"): Poly.const(1), M("x^1"): Poly.const(1)}
    assert eq.constant == Poly()


def test_walk_second_moment_of_x():
    eq = walk_equation("x^2")
    assert eq.linear == {M("x^2"): Poly.const(1)}
    assert eq.constant == b**2 / 3


def test_walk_cross_moment():
    eq = walk_equation("x^1*y^1")
    assert eq.linear == {M("x^1*y^1"): Poly.const(1), M("x^2"): Poly.const(1)}
    assert eq.constant == b**2 / 3


def test_walk_second_moment_of_y():
    eq = walk_equation("y^2")
    assert eq.linear == {
        M("y^2"): Poly.const(1),
        M("x^2"): Poly.const(1),
        M("x^1*y^1"): Poly.const(2),
    }
    assert eq.constant == b**2 / 3 + 1


def test_identity_update_equation():
    vp = validate_program(parse_program("v=0\nwhile true:\nv = v\n"))
    eq = moment_equation(M("v^1"), vp, MomentTable())
    assert eq.linear == {M("v^1"): Poly.const(1)}
    assert eq.constant == Poly()


def test_draw_variable_equation_is_constant():
    vp = load("walk")
    eq = moment_equation(M("u^2"), vp, MomentTable())
    assert eq.linear == {}
    assert eq.constant == b**2 / 3


def test_mixed_target_on_walk():
    vp = load("walk")
    eq = moment_equation(M("u^1*x^1"), vp, MomentTable())
    # the +u/-u mixture cancels the u^2 cross terms, leaving (b/2) E[x]
    assert eq.linear == {M("x^1"): b / 2}
    assert eq.constant == Poly()


def test_mixed_target_keeps_the_joint_expectation():
    # x = x + u correlates x with the latest draw: E[x*u] picks up the
    # draw's second moment, not the square of its mean.
    source = "x = 0\nwhile true:\nu = RV(uniform, 0, 1)\nx = x + u\n"
    vp = validate_program(parse_program(source))
    eq = moment_equation(M("u^1*x^1"), vp, MomentTable())
    assert eq.linear == {M("x^1"): Poly.const(Fraction(1, 2))}
    assert eq.constant == Poly.const(Fraction(1, 3))

    # cross-checked by exact enumeration with a two-point stand-in
    dist = vp.rv_dists["u"]
    support = [(Fraction(0), Fraction(1, 2)), (Fraction(1), Fraction(1, 2))]
    table = FiniteSupportTable({dist: support})
    eq2 = moment_equation(M("u^1*x^1"), vp, table)
    closure = moment_closure({M("u^1*x^1")}, vp, table)
    history = enumerate_moments(
        vp,
        {},
        sorted(closure, key=Moment.sort_key),
        steps=5,
        rv_supports={"u": support},
    )
    for n in range(1, 5):
        predicted = eq2.constant.evaluate({})
        for dep, coeff in eq2.linear.items():
            predicted += coeff.evaluate({}) * history[n][dep]
        assert predicted == history[n + 1][M("u^1*x^1")], n


def test_probability_mass_conservation():
    # identical branch expressions make the probabilities irrelevant
    template = "v = 1\nwhile true:\nv = 2*v + 1 @ {p1}; 2*v + 1 @ {p2}\n"
    one = validate_program(parse_program(template.format(p1="1/3", p2="2/3")))
    two = validate_program(parse_program(template.format(p1="1/2", p2="1/2")))
    for k in range(1, 4):
        eq_one = moment_equation(M(f"v^{k}"), one, MomentTable())
        eq_two = moment_equation(M(f"v^{k}"), two, MomentTable())
        assert eq_one.linear == eq_two.linear
        assert eq_one.constant == eq_two.constant


def test_deterministic_drift_matches_binomial_expansion():
    vp = validate_program(parse_program("v = 0\nwhile true:\nv = v + c\n"))
    c = Poly.var("c")
    for k in range(1, 5):
        eq = moment_equation(M(f"v^{k}"), vp, MomentTable())
        expected_linear = {
            M(f"v^{j}"): math.comb(k, j) * c ** (k - j) for j in range(1, k + 1)
        }
        assert eq.linear == expected_linear
        assert eq.constant == c**k


# -- closure --------------------------------------------------------------------


def test_closure_of_y_squared():
    vp = load("walk")
    closure = moment_closure({M("y^2")}, vp)
    # x*g and y*g monomials vanish because the gauss mean is 0, so E[x^1]
    # never acquires a nonzero coefficient and stays out of the closure.
    assert set(closure) == {M("y^2"), M("x^1*y^1"), M("x^2")}


def test_closure_of_x_is_self_contained():
    vp = load("walk")
    closure = moment_closure({M("x^1")}, vp)
    assert set(closure) == {M("x^1")}


def test_closure_of_self_contained_counter():
    vp = validate_program(parse_program("v=0\nwhile true:\nv = v + 1\n"))
    closure = moment_closure({M("v^1")}, vp)
    assert set(closure) == {M("v^1")}


def test_closure_cap_is_enforced():
    vp = load("walk")
    with pytest.raises(ClosureOverflowError):
        moment_closure({M("y^2")}, vp, cap=2)


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_closure_degree_bound(name):
    source, goals, _ = CORPUS[name]
    vp = validate_program(parse_program(source))
    max_update_degree = max(
        branch.expr.total_degree()
        for assignment in vp.update_assignments
        for branch in assignment.update.branches
    )
    max_update_degree = max(max_update_degree, 1)
    for k in (g for g in goals if isinstance(g, int)):
        targets = {Moment.single(v, k) for v in vp.all_variables()}
        closure = moment_closure(targets, vp)
        bound = k * max_update_degree ** len(vp.update_assignments)
        assert all(m.degree() <= bound for m in closure)
        if max_update_degree == 1:
            assert all(m.degree() <= k for m in closure)


# -- one-step prediction against exact enumeration ------------------------------


def test_one_step_prediction_matches_enumeration_with_two_point_draws():
    # Swap the uniform draw for a two-point stand-in with the same support
    # bounds; the equation built from the stand-in's moments must agree
    # with brute-force enumeration at every step.
    source = "x = 1\nwhile true:\nu = RV(uniform, 0, 1)\nx = x + u @ 2/3; x - u @ 1/3\n"
    vp = validate_program(parse_program(source))
    dist = vp.rv_dists["u"]
    support = [(Fraction(0), Fraction(1, 2)), (Fraction(1), Fraction(1, 2))]
    table = FiniteSupportTable({dist: support})

    targets = [M("x^1"), M("x^2")]
    equations = {t: moment_equation(t, vp, table) for t in targets}
    closure = moment_closure(set(targets), vp, table)
    history = enumerate_moments(
        vp, {}, sorted(closure, key=Moment.sort_key), steps=6, rv_supports={"u": support}
    )
    for n in range(6):
        for t in targets:
            eq = equations[t]
            predicted = eq.constant.evaluate({})
            for dep, coeff in eq.linear.items():
                predicted += coeff.evaluate({}) * history[n][dep]
            assert predicted == history[n + 1][t], (t, n)


def test_initial_moments_multiply_across_variables():
    vp = load("walk")
    table = MomentTable()
    assert initial_moment(vp, M("x^2"), table) == Poly.const(0)
    assert initial_moment(vp, M("y^2"), table) == Poly.var("y(0)") ** 2
    assert initial_moment(vp, M("u^2"), table) == b**2 / 3
    assert initial_moment(vp, M("u^1*y^1"), table) == b / 2 * Poly.var("y(0)")
