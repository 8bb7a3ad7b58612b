"""Abstract syntax of the checked language.

The language is a simply typed call-by-value lambda calculus with tuples,
base constants, first-order arithmetic and local references.  On top of
the source syntax there are three runtime-only forms:

* ``AbsName`` -- an opaque function supplied by the environment,
* ``Sym``     -- a symbolic first-order constant,
* ``Bot``     -- a diverging computation,
* ``Hole``    -- the hole of a continuation kept on the game stack.

All nodes are immutable; every rewrite builds new nodes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional


# --------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class TBase:
    name: str

    def __str__(self):
        return self.name


BOOL = TBase("bool")
INT = TBase("int")
UNIT = TBase("unit")


@dataclass(frozen=True)
class TArrow:
    dom: "Type"
    cod: "Type"

    def __str__(self):
        d = f"({self.dom})" if isinstance(self.dom, (TArrow, TProd)) else str(self.dom)
        return f"{d} -> {self.cod}"


@dataclass(frozen=True)
class TProd:
    items: tuple

    def __post_init__(self):
        if len(self.items) < 2:
            raise ValueError("product types need at least two components")

    def __str__(self):
        return " * ".join(
            f"({t})" if isinstance(t, (TArrow, TProd)) else str(t) for t in self.items
        )


Type = object  # TBase | TArrow | TProd (| TVar during inference)


def is_base(t) -> bool:
    return isinstance(t, TBase)


# --------------------------------------------------------------------------
# Expressions

_pos = dict(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Const:
    value: object  # bool | int | None (unit)
    ty: TBase
    pos: Optional[tuple] = field(**_pos)


TRUE = Const(True, BOOL)
FALSE = Const(False, BOOL)
UNIT_V = Const(None, UNIT)


def const(value) -> Const:
    if value is None:
        return UNIT_V
    if isinstance(value, bool):
        return TRUE if value else FALSE
    return Const(int(value), INT)


@dataclass(frozen=True)
class Var:
    name: str
    pos: Optional[tuple] = field(**_pos)


@dataclass(frozen=True)
class Annotation:
    """State-invariant / re-entry annotation on a function.

    ``loc_patterns`` pairs a location name with a value pattern whose
    ``Var`` leaves name entries of ``sym_names``.
    """

    sym_names: tuple = ()
    loc_patterns: tuple = ()
    formula: object = TRUE

    @property
    def is_empty(self):
        return not self.sym_names and not self.loc_patterns


@dataclass(frozen=True)
class Lam:
    param: str
    body: object
    self_name: Optional[str] = None
    annot: Optional[Annotation] = None
    ty: Optional[TArrow] = None
    pos: Optional[tuple] = field(**_pos)


@dataclass(frozen=True)
class Tuple:
    items: tuple
    pos: Optional[tuple] = field(**_pos)


@dataclass(frozen=True)
class Op:
    op: str
    args: tuple
    pos: Optional[tuple] = field(**_pos)


@dataclass(frozen=True)
class App:
    fn: object
    arg: object
    pos: Optional[tuple] = field(**_pos)


@dataclass(frozen=True)
class If:
    cond: object
    then: object
    els: object
    pos: Optional[tuple] = field(**_pos)


@dataclass(frozen=True)
class NewRef:
    loc: str
    init: object
    body: object
    pos: Optional[tuple] = field(**_pos)


@dataclass(frozen=True)
class Deref:
    loc: str
    pos: Optional[tuple] = field(**_pos)


@dataclass(frozen=True)
class Assign:
    loc: str
    rhs: object
    pos: Optional[tuple] = field(**_pos)


@dataclass(frozen=True)
class LetTuple:
    names: tuple
    rhs: object
    body: object
    pos: Optional[tuple] = field(**_pos)


@dataclass(frozen=True)
class AbsName:
    name: int
    ty: TArrow


@dataclass(frozen=True)
class Sym:
    name: int
    ty: TBase


@dataclass(frozen=True)
class Bot:
    pos: Optional[tuple] = field(**_pos)


BOT = Bot()


@dataclass(frozen=True)
class Hole:
    """The hole of a stored continuation; ``ty`` is the type it expects."""

    ty: object = None

ARITH_OPS = {"+", "-", "*", "/", "mod"}
COMPARE_OPS = {"<", "<=", ">", ">="}
EQ_OPS = {"=", "<>"}
BOOL_OPS = {"&&", "||"}
UNARY_OPS = {"not", "neg"}
ALL_OPS = ARITH_OPS | COMPARE_OPS | EQ_OPS | BOOL_OPS | UNARY_OPS


def is_value(e) -> bool:
    if isinstance(e, (Const, Lam, AbsName, Sym)):
        return True
    if isinstance(e, Tuple):
        return all(is_value(x) for x in e.items)
    return False


def is_symbolic_leaf(e) -> bool:
    return isinstance(e, Sym)


# --------------------------------------------------------------------------
# Generic traversal


def children(e) -> tuple:
    if isinstance(e, Lam):
        return (e.body,)
    if isinstance(e, Tuple):
        return e.items
    if isinstance(e, Op):
        return e.args
    if isinstance(e, App):
        return (e.fn, e.arg)
    if isinstance(e, If):
        return (e.cond, e.then, e.els)
    if isinstance(e, NewRef):
        return (e.init, e.body)
    if isinstance(e, Assign):
        return (e.rhs,)
    if isinstance(e, LetTuple):
        return (e.rhs, e.body)
    return ()


def rebuild(e, kids):
    """Return ``e`` with its immediate subexpressions replaced by ``kids``."""
    kids = tuple(kids)
    if isinstance(e, Lam):
        return Lam(e.param, kids[0], e.self_name, e.annot, e.ty, pos=e.pos)
    if isinstance(e, Tuple):
        return Tuple(kids, pos=e.pos)
    if isinstance(e, Op):
        return Op(e.op, kids, pos=e.pos)
    if isinstance(e, App):
        return App(kids[0], kids[1], pos=e.pos)
    if isinstance(e, If):
        return If(kids[0], kids[1], kids[2], pos=e.pos)
    if isinstance(e, NewRef):
        return NewRef(e.loc, kids[0], kids[1], pos=e.pos)
    if isinstance(e, Assign):
        return Assign(e.loc, kids[0], pos=e.pos)
    if isinstance(e, LetTuple):
        return LetTuple(e.names, kids[0], kids[1], pos=e.pos)
    return e


def iter_subterms(e) -> Iterable:
    stack = [e]
    while stack:
        t = stack.pop()
        yield t
        stack.extend(reversed(children(t)))


# --------------------------------------------------------------------------
# Substitution


def subst(e, x: str, v):
    """Capture-avoiding ``e{v/x}`` for a closed value ``v``."""
    return subst_many(e, {x: v})


def subst_many(e, mapping: dict):
    if not mapping:
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Lam):
        bound = {e.param, e.self_name}
        inner = {k: v for k, v in mapping.items() if k not in bound}
        if not inner:
            return e
        return Lam(e.param, subst_many(e.body, inner), e.self_name, e.annot, e.ty, pos=e.pos)
    if isinstance(e, LetTuple):
        inner = {k: v for k, v in mapping.items() if k not in e.names}
        return LetTuple(e.names, subst_many(e.rhs, mapping), subst_many(e.body, inner), pos=e.pos)
    kids = children(e)
    if not kids:
        return e
    return rebuild(e, (subst_many(k, mapping) for k in kids))


def free_vars(e, bound=frozenset()) -> set:
    if isinstance(e, Var):
        return set() if e.name in bound else {e.name}
    if isinstance(e, Lam):
        return free_vars(e.body, bound | {e.param, e.self_name})
    if isinstance(e, LetTuple):
        return free_vars(e.rhs, bound) | free_vars(e.body, bound | set(e.names))
    out = set()
    for k in children(e):
        out |= free_vars(k, bound)
    return out


# --------------------------------------------------------------------------
# Locations, abstract names, symbolic constants


def free_locations(e) -> set:
    """Free locations of an expression (``NewRef`` binds its location)."""
    if isinstance(e, dict):
        out = set(e)
        for v in e.values():
            out |= free_locations(v)
        return out
    if isinstance(e, (list, tuple)) and not hasattr(e, "__dataclass_fields__"):
        out = set()
        for x in e:
            out |= free_locations(x)
        return out
    return _fl(e)


def _fl(e) -> set:
    if isinstance(e, Deref):
        return {e.loc}
    if isinstance(e, Assign):
        return {e.loc} | _fl(e.rhs)
    if isinstance(e, NewRef):
        return _fl(e.init) | (_fl(e.body) - {e.loc})
    if isinstance(e, Lam):
        out = _fl(e.body)
        if e.annot is not None:
            out |= {loc for loc, _ in e.annot.loc_patterns}
        return out
    out = set()
    for k in children(e):
        out |= _fl(k)
    return out


def rename_locations(e, mapping: dict):
    """Rename free locations according to ``mapping``."""
    if not mapping:
        return e
    if isinstance(e, Deref):
        return Deref(mapping.get(e.loc, e.loc), pos=e.pos) if e.loc in mapping else e
    if isinstance(e, Assign):
        return Assign(mapping.get(e.loc, e.loc), rename_locations(e.rhs, mapping), pos=e.pos)
    if isinstance(e, NewRef):
        inner = {k: v for k, v in mapping.items() if k != e.loc}
        return NewRef(e.loc, rename_locations(e.init, mapping), rename_locations(e.body, inner), pos=e.pos)
    if isinstance(e, Lam):
        annot = e.annot
        if annot is not None and annot.loc_patterns:
            annot = Annotation(
                annot.sym_names,
                tuple((mapping.get(l, l), p) for l, p in annot.loc_patterns),
                annot.formula,
            )
        return Lam(e.param, rename_locations(e.body, mapping), e.self_name, annot, e.ty, pos=e.pos)
    kids = children(e)
    if not kids:
        return e
    return rebuild(e, (rename_locations(k, mapping) for k in kids))


def abstract_names(e) -> set:
    if isinstance(e, dict):
        return set().union(*(abstract_names(v) for v in e.values())) if e else set()
    if isinstance(e, (list, tuple)) and not hasattr(e, "__dataclass_fields__"):
        return set().union(*(abstract_names(x) for x in e)) if e else set()
    return {t.name for t in iter_subterms(e) if isinstance(t, AbsName)}


def symbols(e) -> set:
    """Symbolic constants (by name) occurring in ``e``."""
    return {t.name for t in iter_subterms(e) if isinstance(t, Sym)}


def map_leaves(e, fn: Callable):
    """Rebuild ``e`` applying ``fn`` to every ``Sym``/``AbsName`` leaf."""
    if isinstance(e, (Sym, AbsName)):
        return fn(e)
    kids = children(e)
    if not kids:
        return e
    new = tuple(map_leaves(k, fn) for k in kids)
    if all(a is b for a, b in zip(new, kids)):
        return e
    return rebuild(e, new)


def instantiate_syms(e, assignment: dict):
    """Replace symbolic constants by concrete constants from ``assignment``."""
    def leaf(t):
        if isinstance(t, Sym) and t.name in assignment:
            return const(assignment[t.name])
        return t
    return map_leaves(e, leaf)


# --------------------------------------------------------------------------
# Fresh names


class Fresh:
    """Per-run supply of fresh locations, names, symbols and indices."""

    def __init__(self):
        self._counters = {}

    def next(self, kind: str) -> int:
        c = self._counters.setdefault(kind, itertools.count())
        return next(c)

    def loc(self, base: str) -> str:
        return f"{base.split('#')[0]}#{self.next('loc')}"

    def sym(self, ty) -> Sym:
        return Sym(self.next("sym"), ty)

    def absname(self, ty) -> AbsName:
        return AbsName(self.next("abs"), ty)

    def index(self) -> int:
        return self.next("idx")


# --------------------------------------------------------------------------
# Pretty printing (surface syntax)

_PREC = {
    "||": 2, "&&": 3,
    "=": 4, "<>": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5, "*": 6, "/": 6, "mod": 6,
}


def pretty(e) -> str:
    if isinstance(e, Const):
        if e.ty == UNIT:
            return "()"
        if e.ty == BOOL:
            return "true" if e.value else "false"
        return str(e.value) if e.value >= 0 else f"(-{-e.value})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Sym):
        return f"_k#{e.name}"
    if isinstance(e, AbsName):
        return f"a#{e.name}"
    if isinstance(e, Bot):
        return "_bot_"
    if isinstance(e, Hole):
        return "[]"
    if isinstance(e, Lam):
        head = f"fun {e.param}"
        if e.annot is not None:
            head += " " + pretty_annotation(e.annot)
        text = f"{head} -> {pretty(e.body)}"
        if e.self_name is not None:
            text = f"let rec {e.self_name} {e.param}" + (
                " " + pretty_annotation(e.annot) if e.annot is not None else ""
            ) + f" = {pretty(e.body)} in {e.self_name}"
        return f"({text})"
    if isinstance(e, Tuple):
        return "(" + ", ".join(pretty(x) for x in e.items) + ")"
    if isinstance(e, Op):
        if e.op == "not":
            return f"(not {pretty(e.args[0])})"
        if e.op == "neg":
            return f"(- {pretty(e.args[0])})"
        return f"({pretty(e.args[0])} {e.op} {pretty(e.args[1])})"
    if isinstance(e, App):
        return f"({pretty(e.fn)} {pretty(e.arg)})"
    if isinstance(e, If):
        return f"(if {pretty(e.cond)} then {pretty(e.then)} else {pretty(e.els)})"
    if isinstance(e, NewRef):
        return f"(ref {e.loc} = {pretty(e.init)} in {pretty(e.body)})"
    if isinstance(e, Deref):
        return f"!{e.loc}"
    if isinstance(e, Assign):
        return f"({e.loc} := {pretty(e.rhs)})"
    if isinstance(e, LetTuple):
        return f"(let ({', '.join(e.names)}) = {pretty(e.rhs)} in {pretty(e.body)})"
    raise TypeError(f"cannot print {e!r}")


def pretty_annotation(a: Annotation) -> str:
    if a.is_empty and a.formula == TRUE:
        return "{}"
    locs = ", ".join(f"{l} as {pretty(p)}" for l, p in a.loc_patterns)
    return "{" + f"{', '.join(a.sym_names)} | {locs} | {pretty(a.formula)}" + "}"
