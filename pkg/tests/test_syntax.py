import random

from hypothesis import given, settings, strategies as st

from eqcheck.parser import parse_expr
from eqcheck.syntax import (
    INT, UNIT, AbsName, App, Assign, Deref, Lam, Op, TArrow, Var, abstract_names,
    const, free_locations, free_vars, is_value, pretty, subst,
)

from generators import random_value


def test_subst_replaces_free_variable():
    e = Op("+", (Var("x"), const(1)))
    assert subst(e, "x", const(2)) == Op("+", (const(2), const(1)))


def test_subst_goes_under_other_binders():
    ident = Lam("z", Var("z"))
    assert subst(Lam("y", Var("x")), "x", ident) == Lam("y", ident)


def test_subst_respects_shadowing():
    e = Lam("x", Var("x"))
    assert subst(e, "x", const(5)) == e


def test_subst_respects_recursion_name():
    e = Lam("y", Var("f"), self_name="f")
    assert subst(e, "f", const(5)) == e


def test_free_locations_of_assignment():
    e = Assign("l", Op("+", (Deref("k"), const(1))))
    assert free_locations(e) == {"l", "k"}


def test_free_locations_of_pure_lambda():
    assert free_locations(Lam("x", Var("x"))) == set()


def test_free_locations_skip_bound_references():
    e = parse_expr("ref x = 0 in !x + !y")
    assert free_locations(e) == {"y"}


def test_abstract_names():
    a = AbsName(3, TArrow(INT, INT))
    assert abstract_names(Lam("x", App(a, Var("x")))) == {3}


def test_values_are_classified_syntactically():
    assert is_value(const(1))
    assert is_value(parse_expr("(fun x -> x, 3)"))
    assert not is_value(parse_expr("(1 + 2, 3)"))
    assert not is_value(parse_expr("!x"))


def test_unit_constant_prints_as_unit():
    assert pretty(const(None)) == "()"
    assert const(None).ty == UNIT


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=2**32), st.sampled_from(["x", "y", "f"]))
def test_subst_free_locations_bounded(seed, name):
    rng = random.Random(seed)
    v = random_value(rng, 2)
    body = parse_expr(f"fun q -> {name} := !{name} + 1; ({name}, !k, q)") if rng.random() < 0.5 \
        else parse_expr(f"({name}, !k)")
    out = subst(body, name, v)
    assert free_locations(out) <= free_locations(body) | free_locations(v)
    assert name not in free_vars(out)
