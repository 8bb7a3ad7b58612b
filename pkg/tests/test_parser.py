import pytest

from eqcheck.parser import (
    ParseError, parse_annotation, parse_expr, parse_header, parse_program_pair, split_pair,
)
from eqcheck.syntax import (
    INT, TRUE, App, Bot, Const, Lam, LetTuple, NewRef, Op, TArrow, TProd, UNIT, Var,
    const, pretty,
)

from generators import corpus_files


def test_meyer_sieber_pair():
    p = parse_program_pair("fun f -> ref x = 0 in f () ||| fun f -> f ()")
    assert isinstance(p.left, Lam) and isinstance(p.left.body, NewRef)
    assert isinstance(p.right.body, App)
    assert p.ty == TArrow(TArrow(UNIT, UNIT), UNIT)


def test_constant_pair():
    p = parse_program_pair("0 ||| 0")
    assert p.left == const(0) and p.right == const(0)


def test_separator_line():
    p = parse_program_pair("(* expect: eq *)\n1 + 1\n|||\n2\n")
    assert p.left == Op("+", (const(1), const(1)))
    assert p.header == {"expect": "eq"}


def test_error_on_right_side():
    with pytest.raises(ParseError) as exc:
        parse_program_pair("fun x -> x ||| fun x")
    assert "right" in str(exc.value)


def test_error_position_counts_lines_of_second_half():
    with pytest.raises(ParseError) as exc:
        parse_program_pair("0\n|||\n1 +\n")
    assert exc.value.pos[0] >= 3


def test_missing_separator():
    with pytest.raises(ParseError):
        split_pair("1 + 2")


def test_annotation_with_invariant():
    a = parse_annotation("{w | x as w | w mod 2 == 0}")
    assert a.sym_names == ("w",)
    assert a.loc_patterns == (("x", Var("w")),)
    assert a.formula == Op("=", (Op("mod", (Var("w"), const(2))), const(0)))


def test_empty_annotation():
    a = parse_annotation("{}")
    assert a.is_empty and a.formula == TRUE


def test_duplicate_location_rejected():
    with pytest.raises(ParseError):
        parse_annotation("{w | x as w, x as w | true}")


def test_unknown_invariant_variable_rejected():
    with pytest.raises(ParseError):
        parse_annotation("{w | x as v | true}")
    with pytest.raises(ParseError):
        parse_annotation("{w | x as w | v > 0}")


def test_tuple_pattern_annotation():
    a = parse_annotation("{a, b | x as (a, b) | a < b}")
    assert a.loc_patterns[0][1].items == (Var("a"), Var("b"))


def test_annotation_attached_to_lambda():
    e = parse_expr("ref x = 0 in fun y {} -> !x")
    lam = e.body
    assert isinstance(lam, Lam) and lam.annot is not None and lam.annot.is_empty


def test_sugar():
    assert isinstance(parse_expr("let (a, b) = (1, 2) in a"), LetTuple)
    rec = parse_expr("let rec f x = f x in f")
    assert isinstance(rec, Lam) and rec.self_name == "f"
    assert isinstance(parse_expr("_bot_"), Bot)
    seq = parse_expr("(); 1")
    assert isinstance(seq, App)


def test_both_equalities_accepted():
    assert parse_expr("1 == 2") == parse_expr("1 = 2")


def test_precedence():
    assert parse_expr("1 + 2 * 3") == Op("+", (const(1), Op("*", (const(2), const(3)))))
    assert parse_expr("f x y") == App(App(Var("f"), Var("x")), Var("y"))


def test_nested_comments():
    assert parse_expr("(* a (* b *) c *) 4") == Const(4, INT)


def test_positions_recorded():
    e = parse_expr("\n  x")
    assert e.pos == (2, 3)


def test_header():
    assert parse_header("(* expect: ineq bound: 12 *) 0 ||| 1") == {"expect": "ineq", "bound": 12}
    assert parse_header("0 ||| 1") == {}


def test_tuple_types():
    p = parse_program_pair("(1, true) ||| (2, false)")
    assert p.ty.__class__ is TProd


@pytest.mark.parametrize("path", corpus_files(), ids=lambda p: f"{p.parent.name}/{p.stem}")
def test_corpus_parses_and_round_trips(path):
    text = path.read_text()
    pair = parse_program_pair(text)
    assert parse_header(text)["expect"] in ("eq", "ineq")
    left, right, _ = split_pair(text)
    for half in (left, right):
        e = parse_expr(half)
        assert parse_expr(pretty(e)) == e
    assert pair.ty is not None
