"""Game configurations and their transitions.

A live configuration holds the abstract names known to the program, the
knowledge environment (functions disclosed to the context, by index),
the stack of suspended continuations, the store, and, for proponent
configurations, the running expression.  ``BOTTOM`` is the sink that
answers every move except termination.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .semantics import (
    DEFAULT_FUEL, FuelExhausted, ProponentCall, StuckBot, Terminal,
    fill_hole, reduce_to_interaction,
)
from .syntax import (
    UNIT, UNIT_V,
    AbsName, App, Const, Hole, Lam, Sym, TArrow, TBase, TProd, Tuple,
    abstract_names, free_locations, free_vars, iter_subterms,
    pretty, subst_many,
)


# --------------------------------------------------------------------------
# Configurations


@dataclass(frozen=True)
class Config:
    names: frozenset = frozenset()  # AbsName values
    gamma: tuple = ()  # ((index, value), ...) sorted by index
    stack: tuple = ()  # continuations, top last
    store: dict = field(default_factory=dict, compare=False)
    expr: Optional[object] = None

    @property
    def is_proponent(self):
        return self.expr is not None

    @property
    def gamma_map(self) -> dict:
        return dict(self.gamma)

    def indices(self):
        return [i for i, _ in self.gamma]

    def replace(self, **kw) -> "Config":
        d = dict(names=self.names, gamma=self.gamma, stack=self.stack, store=self.store, expr=self.expr)
        d.update(kw)
        return Config(**d)

    def same(self, other) -> bool:
        return (
            isinstance(other, Config) and self.gamma == other.gamma and self.stack == other.stack
            and self.store == other.store and self.expr == other.expr
        )


class _Bottom:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "BOTTOM"

    is_proponent = False


BOTTOM = _Bottom()


def initial_config(e) -> Config:
    return Config(expr=e)


# --------------------------------------------------------------------------
# Patterns


@dataclass(frozen=True)
class FnHole:
    """A numbered hole standing for a disclosed function."""

    index: int


def ulpatt_value(v, start: int):
    """Split a value into a function-free skeleton and the functions.

    Functions (lambdas and abstract names) are replaced left to right by
    holes numbered from ``start``.  Returns ``(skeleton, bindings)`` with
    ``bindings`` a list of ``(index, function)``.
    """
    binds = []

    def go(w):
        if isinstance(w, (Lam, AbsName)):
            i = start + len(binds)
            binds.append((i, w))
            return FnHole(i)
        if isinstance(w, Tuple):
            return Tuple(tuple(go(x) for x in w.items))
        if isinstance(w, (Const, Sym)):
            return w
        raise ValueError(f"not a closed value: {w!r}")

    return go(v), binds


def plug_pattern(skeleton, binds):
    table = dict(binds)

    def go(w):
        if isinstance(w, FnHole):
            return table[w.index]
        if isinstance(w, Tuple):
            return Tuple(tuple(go(x) for x in w.items))
        return w

    return go(skeleton)


def ulpatt_type(ty, fresh):
    """The opponent value of type ``ty`` built from fresh names.

    Arrow leaves become fresh abstract names, integer and boolean leaves
    fresh symbolic constants, unit leaves ``()``.  Returns
    ``(value, new_names, new_syms)``.
    """
    names, syms = [], []

    def go(t):
        if isinstance(t, TArrow):
            a = fresh.absname(t)
            names.append(a)
            return a
        if isinstance(t, TProd):
            return Tuple(tuple(go(x) for x in t.items))
        if t == UNIT:
            return UNIT_V
        if isinstance(t, TBase):
            k = fresh.sym(t)
            syms.append(k)
            return k
        raise ValueError(f"cannot build a value of type {t}")

    return go(ty), names, syms


def value_type(v):
    if isinstance(v, (Lam, AbsName)):
        return v.ty
    if isinstance(v, (Const, Sym)):
        return v.ty
    if isinstance(v, Tuple):
        return TProd(tuple(value_type(x) for x in v.items))
    raise ValueError(f"not a value: {v!r}")


def hole_type(ctx):
    for t in iter_subterms(ctx):
        if isinstance(t, Hole):
            return t.ty
    raise ValueError("continuation without a hole")


# --------------------------------------------------------------------------
# Moves


@dataclass(frozen=True)
class PropApp:
    alpha: AbsName
    pattern: object


@dataclass(frozen=True)
class PropRet:
    pattern: object


@dataclass(frozen=True)
class OpApp:
    index: int
    value: object


@dataclass(frozen=True)
class OpRet:
    value: object


@dataclass(frozen=True)
class Term:
    pass


TERM = Term()


def pattern_text(p) -> str:
    if isinstance(p, FnHole):
        return f"_fn#{p.index}"
    if isinstance(p, Tuple):
        return "(" + ", ".join(pattern_text(x) for x in p.items) + ")"
    return pretty(p)


def move_text(m) -> str:
    if isinstance(m, OpApp):
        return f"app(g#{m.index}, {pattern_text(m.value)})"
    if isinstance(m, OpRet):
        return f"ret({pattern_text(m.value)})"
    if isinstance(m, PropApp):
        return f"_app(a#{m.alpha.name}, {pattern_text(m.pattern)})"
    if isinstance(m, PropRet):
        return f"_ret({pattern_text(m.pattern)})"
    if isinstance(m, Term):
        return "TERM"
    raise ValueError(f"not a move: {m!r}")


def pattern_leaves(p) -> list:
    """Base-type leaves of a skeleton, left to right."""
    if isinstance(p, Tuple):
        out = []
        for x in p.items:
            out.extend(pattern_leaves(x))
        return out
    if isinstance(p, FnHole):
        return []
    return [p]


def pattern_shape(p):
    """Skeleton with leaves erased; equal shapes can be matched."""
    if isinstance(p, Tuple):
        return ("tuple", tuple(pattern_shape(x) for x in p.items))
    if isinstance(p, FnHole):
        return ("fn", p.index)
    return ("leaf", p.ty)


# --------------------------------------------------------------------------
# Transitions


@dataclass(frozen=True)
class PropStep:
    """One proponent branch: the move (None when silent) and the target."""

    env: object
    move: object
    config: object
    exhausted: bool = False
    store_after: dict = field(default=None, compare=False)


def proponent_moves(env, c: Config, fresh, solver, next_index: int, fuel=DEFAULT_FUEL):
    """Chase ``c``'s running expression to its next moves.

    Holes introduced by a move are numbered from ``next_index``.
    """
    out = []
    for br in reduce_to_interaction(env, c.store, c.expr, fresh, solver, fuel):
        o = br.outcome
        if isinstance(o, Terminal):
            skel, binds = ulpatt_value(o.value, next_index)
            new = c.replace(gamma=c.gamma + tuple(binds), store=br.store, expr=None)
            out.append(PropStep(br.env, PropRet(skel), new))
        elif isinstance(o, ProponentCall):
            skel, binds = ulpatt_value(o.arg, next_index)
            new = c.replace(
                gamma=c.gamma + tuple(binds), stack=c.stack + (o.ctx,), store=br.store, expr=None,
            )
            out.append(PropStep(br.env, PropApp(o.alpha, skel), new))
        elif isinstance(o, StuckBot):
            out.append(PropStep(br.env, None, BOTTOM))
        elif isinstance(o, FuelExhausted):
            out.append(PropStep(br.env, None, BOTTOM, exhausted=True))
    return out


def apply_function(fn, v):
    """Application as seen by the context: beta-reduce lambdas at once,
    keep calls to abstract names for the proponent to issue."""
    if isinstance(fn, Lam):
        mapping = {fn.param: v}
        if fn.self_name is not None:
            mapping[fn.self_name] = fn
        return subst_many(fn.body, mapping)
    return App(fn, v)


def op_app(c: Config, index: int, v, new_names=()) -> Config:
    fn = c.gamma_map[index]
    return c.replace(names=c.names | frozenset(new_names), expr=apply_function(fn, v))


def op_ret(c: Config, v, new_names=()) -> Config:
    return c.replace(
        names=c.names | frozenset(new_names), stack=c.stack[:-1], expr=fill_hole(c.stack[-1], v),
    )


def argument_type(c: Config, index: int):
    ty = value_type(c.gamma_map[index])
    return ty.dom


def opponent_moves(env, c: Config, fresh):
    """All opponent moves from ``c``: one application per index, a return
    when the stack is nonempty, termination when it is empty."""
    out = []
    for i, fn in c.gamma:
        v, names, syms = ulpatt_type(value_type(fn).dom, fresh)
        out.append((OpApp(i, v), env.declare(*syms), op_app(c, i, v, names)))
    if c.stack:
        v, names, syms = ulpatt_type(hole_type(c.stack[-1]), fresh)
        out.append((OpRet(v), env.declare(*syms), op_ret(c, v, names)))
    else:
        out.append((TERM, env, BOTTOM))
    return out


# --------------------------------------------------------------------------
# Well-formedness


def wellformed(c) -> bool:
    if c is BOTTOM:
        return True
    if not isinstance(c, Config):
        return False
    known = {a.name for a in c.names}
    parts = [v for _, v in c.gamma] + list(c.stack) + list(c.store.values())
    if c.expr is not None:
        parts.append(c.expr)
    idx = [i for i, _ in c.gamma]
    if len(set(idx)) != len(idx) or idx != sorted(idx):
        return False
    for _, v in c.gamma:
        if not isinstance(v, (Lam, AbsName)):
            return False
    for p in parts:
        if free_vars(p):
            return False
        if not abstract_names(p) <= known:
            return False
        if not free_locations(p) <= set(c.store):
            return False
    for k in c.stack:
        if sum(isinstance(t, Hole) for t in iter_subterms(k)) != 1:
            return False
    return True
