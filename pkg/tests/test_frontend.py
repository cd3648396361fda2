"""Parsing and structural validation of the input language."""

from fractions import Fraction

import pytest

from loopmoments import (
    ParseError,
    Poly,
    UnsupportedProgramError,
    format_program,
    parse_program,
    resolve_initial_value,
    validate_program,
)
from loopmoments.frontend import Distribution, structurally_equal

from corpus import CORPUS, WALK


def test_walk_program_structure():
    p = parse_program(WALK)
    assert [(a.var, a.value) for a in p.init_assignments] == [("x", Poly.const(0))]
    assert [r.var for r in p.rv_assignments] == ["u", "g"]
    u_dist = p.rv_assignments[0].dist
    assert u_dist == Distribution("uniform", Poly.const(0), Poly.var("b"))
    g_dist = p.rv_assignments[1].dist
    assert g_dist == Distribution("gauss", Poly.const(0), Poly.const(1))
    assert [a.var for a in p.update_assignments] == ["x", "y"]

    x_update = p.update_assignments[0].update
    assert len(x_update.branches) == 2
    assert x_update.branches[0].expr == Poly.var("x") - Poly.var("u")
    assert x_update.branches[0].prob == Poly.const(Fraction(1, 2))
    assert x_update.branches[1].expr == Poly.var("x") + Poly.var("u")

    y_update = p.update_assignments[1].update
    assert len(y_update.branches) == 1
    assert y_update.branches[0].prob == Poly.const(1)
    assert p.parameters == frozenset({"b"})


def test_single_rv_identity_update():
    p = parse_program("x=0\nwhile true:\nu = RV(uniform, 0, 1)\nx = x")
    assert len(p.rv_assignments) == 1
    assert p.update_assignments[0].update.branches[0].expr == Poly.var("x")


def test_probability_sum_violation_is_rejected():
    p = parse_program("x=0\nwhile true:\nx = x+1 @ 1/3; x @ 1/3")
    with pytest.raises(UnsupportedProgramError) as err:
        validate_program(p)
    assert err.value.restriction == "probability-sum"
    assert "2/3" in str(err.value)


def test_decimal_literals_become_exact_rationals():
    p = parse_program("v = 0.5\nwhile true:\nv = 0.1*v + 0.25 @ 0.5; v @ 0.5")
    assert p.init_assignments[0].value == Poly.const(Fraction(1, 2))
    branch = p.update_assignments[0].update.branches[0]
    assert branch.expr == Fraction(1, 10) * Poly.var("v") + Fraction(1, 4)
    assert branch.prob == Poly.const(Fraction(1, 2))


def test_fraction_literals_parse_exactly():
    p = parse_program("v = 22/7\nwhile true:\nv = v")
    assert p.init_assignments[0].value == Poly.const(Fraction(22, 7))


def test_comments_and_blank_lines_are_ignored():
    src = "# a counter\n\nv = 0\n  # indented comment\nwhile true:\n\nv = v + 1\n"
    p = parse_program(src)
    assert [a.var for a in p.update_assignments] == ["v"]


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_pretty_print_round_trip(name):
    source, _, _ = CORPUS[name]
    first = parse_program(source)
    again = parse_program(format_program(first))
    assert structurally_equal(first, again)
    # printing is a fixpoint once normalized
    assert format_program(again) == format_program(first)


@pytest.mark.parametrize(
    "source,fragment",
    [
        ("x=0\nx = x + 1\n", "missing loop header"),
        ("x=0\nwhile True:\nx = x\n", "literal loop header"),
        ("x=0\nwhile true:\n", "at least one update"),
        ("x=0\nwhile true:\nx = x + @ 1\n", "unexpected"),
        ("x=0\nwhile true:\nx = x+1 @ 1/2; x\n", "probability missing"),
        ("x=0\nwhile true:\nx = x ^ 2\n", "unexpected character"),
        ("x=0\nwhile true:\nn = n + 1\n", "reserved"),
        ("x=0\nwhile true:\nx = RV(poisson, 1, 2)\n", "unknown distribution"),
        ("x=0\nwhile true:\nx = x\nu = RV(uniform, 0, 1)\n", "must precede"),
        ("x=0\nwhile true:\nwhile true:\nx = x\n", "duplicate loop header"),
        ("x=0\nwhile true:\n3 = x\n", "bad variable name"),
    ],
)
def test_parse_errors(source, fragment):
    with pytest.raises(ParseError) as err:
        parse_program(source)
    assert fragment in str(err.value)


def test_parse_error_carries_line_and_column():
    with pytest.raises(ParseError) as err:
        parse_program("x=0\nwhile true:\nx = x + $\n")
    assert err.value.line == 3
    assert err.value.col is not None


def test_walk_program_is_accepted():
    vp = validate_program(parse_program(WALK))
    assert vp.update_vars == ("x", "y")
    assert set(vp.rv_dists) == {"u", "g"}
    assert vp.all_variables() == ("u", "g", "x", "y")


@pytest.mark.parametrize(
    "source,restriction,fragment",
    [
        # nonlinear self-dependence
        ("x=0\nwhile true:\nx = x*x\n", "dependency-structure", "nonlinear"),
        # forward dependence: y is assigned after x
        ("x=0\ny=0\nwhile true:\nx = y*x + 1\ny = y\n", "dependency-structure", "x"),
        ("x=0\ny=0\nwhile true:\nx = y + 1\ny = y\n", "dependency-structure", "before assignment"),
        # probability mass
        ("x=0\nwhile true:\nx = x+1 @ 1/3; x @ 1/3\n", "probability-sum", "sum to"),
        ("x=0\nwhile true:\nx = x+1 @ 3/2; x @ -1/2\n", "probability-sum", "negative"),
        # distinctness: variables where only parameters may appear
        ("x=0\nwhile true:\nu = RV(uniform, 0, x)\nx = x + u\n", "distinctness", "distribution argument"),
        ("x=0\nwhile true:\nx = x + 1 @ x; x @ 1 - x\n", "distinctness", "branch probability"),
        ("x=0\nwhile true:\nx = x\nx = x + 1\n", "distinctness", "twice"),
        ("x=0\nx=1\nwhile true:\nx = x\n", "distinctness", "twice"),
        ("x=0\nwhile true:\nx = RV(uniform, 0, 1)\nx = x + 1\n", "distinctness", "twice"),
    ],
)
def test_restriction_violations(source, restriction, fragment):
    p = parse_program(source)
    with pytest.raises(UnsupportedProgramError) as err:
        validate_program(p)
    assert err.value.restriction == restriction
    assert fragment in str(err.value)


def test_self_coefficient_may_be_a_parameter():
    vp = validate_program(parse_program("v=1\nwhile true:\nv = p*v + q\n"))
    assert vp.parameters == frozenset({"p", "q"})


def test_dependence_on_init_only_constant_is_allowed():
    vp = validate_program(parse_program("c0 = 5\nx = 0\nwhile true:\nx = x + c0\n"))
    assert vp.const_vars == ("c0",)


def test_resolve_initial_values():
    vp = validate_program(parse_program(WALK))
    assert resolve_initial_value(vp, "x") == Poly.const(0)
    assert resolve_initial_value(vp, "y") == Poly.var("y(0)")
    assert resolve_initial_value(vp, "u") == vp.rv_dists["u"]
    with pytest.raises(ValueError):
        resolve_initial_value(vp, "nope")


def test_distribution_initialized_variable_moments():
    # z starts as a uniform(0, 1) draw; its k-th initial moment is 1/(k+1)
    # (oracle: the integral of z^k over [0, 1]).
    from loopmoments import Moment, MomentTable, initial_moment

    vp = validate_program(parse_program("z = RV(uniform, 0, 1)\nwhile true:\nz = z + 1\n"))
    table = MomentTable()
    for k in range(1, 6):
        value = initial_moment(vp, Moment.single("z", k), table)
        assert value == Poly.const(Fraction(1, k + 1))
