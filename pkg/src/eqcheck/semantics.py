"""Small-step reduction, concrete and symbolic.

Evaluation is call-by-value, left to right.  ``decompose`` splits a term
into a stack of evaluation frames and the part in evaluation position;
the steppers reduce that part and plug the result back.

Symbolic reduction threads a ``SymbolicEnv``: arithmetic on symbolic
arguments introduces a fresh constant defined by an atom, and a symbolic
guard splits into the satisfiable branches.
"""
from __future__ import annotations

from dataclasses import dataclass

from .constraints import DivisionByZero, SolverUnknown, Sat, Unknown, apply_op
from .syntax import (
    ARITH_OPS, BOOL, BOT, INT, UNIT_V,
    AbsName, App, Assign, Bot, Const, Deref, Hole, If, Lam, LetTuple, NewRef,
    Op, Sym, Tuple, children, const, is_value, rebuild, rename_locations,
    subst_many,
)

DEFAULT_FUEL = 10_000


class MalformedTerm(Exception):
    pass


# --------------------------------------------------------------------------
# Frames


@dataclass(frozen=True)
class AppFn:
    arg: object

    def plug(self, e):
        return App(e, self.arg)


@dataclass(frozen=True)
class AppArg:
    fn: object

    def plug(self, e):
        return App(self.fn, e)


@dataclass(frozen=True)
class TupleFrame:
    done: tuple
    rest: tuple

    def plug(self, e):
        return Tuple(self.done + (e,) + self.rest)


@dataclass(frozen=True)
class OpFrame:
    op: str
    done: tuple
    rest: tuple

    def plug(self, e):
        return Op(self.op, self.done + (e,) + self.rest)


@dataclass(frozen=True)
class CondFrame:
    then: object
    els: object

    def plug(self, e):
        return If(e, self.then, self.els)


@dataclass(frozen=True)
class AssignFrame:
    loc: str

    def plug(self, e):
        return Assign(self.loc, e)


@dataclass(frozen=True)
class NewRefFrame:
    loc: str
    body: object

    def plug(self, e):
        return NewRef(self.loc, e, self.body)


@dataclass(frozen=True)
class LetTupleFrame:
    names: tuple
    body: object

    def plug(self, e):
        return LetTuple(self.names, e, self.body)


@dataclass(frozen=True)
class Decomp:
    kind: str  # "value" | "stuck" | "call" | "redex"
    frames: tuple = ()  # outermost first
    redex: object = None


def _first_nonvalue(items):
    for k, x in enumerate(items):
        if not is_value(x):
            return k
    return -1


def decompose(e) -> Decomp:
    """Unique decomposition ``e = E[r]``.

    ``kind`` is ``value`` when ``e`` is a value, ``stuck`` when ``_bot_``
    is in evaluation position, ``call`` when the redex applies an
    abstract name, and ``redex`` otherwise.
    """
    if is_value(e):
        return Decomp("value")
    frames = []
    while True:
        if isinstance(e, App):
            if not is_value(e.fn):
                frames.append(AppFn(e.arg))
                e = e.fn
                continue
            if not is_value(e.arg):
                frames.append(AppArg(e.fn))
                e = e.arg
                continue
            if isinstance(e.fn, AbsName):
                return Decomp("call", tuple(frames), e)
            if not isinstance(e.fn, Lam):
                raise MalformedTerm(f"application of a non-function {e.fn!r}")
            return Decomp("redex", tuple(frames), e)
        if isinstance(e, Tuple):
            k = _first_nonvalue(e.items)
            frames.append(TupleFrame(e.items[:k], e.items[k + 1:]))
            e = e.items[k]
            continue
        if isinstance(e, Op):
            k = _first_nonvalue(e.args)
            if k < 0:
                return Decomp("redex", tuple(frames), e)
            frames.append(OpFrame(e.op, e.args[:k], e.args[k + 1:]))
            e = e.args[k]
            continue
        if isinstance(e, If):
            if not is_value(e.cond):
                frames.append(CondFrame(e.then, e.els))
                e = e.cond
                continue
            return Decomp("redex", tuple(frames), e)
        if isinstance(e, Assign):
            if not is_value(e.rhs):
                frames.append(AssignFrame(e.loc))
                e = e.rhs
                continue
            return Decomp("redex", tuple(frames), e)
        if isinstance(e, NewRef):
            if not is_value(e.init):
                frames.append(NewRefFrame(e.loc, e.body))
                e = e.init
                continue
            return Decomp("redex", tuple(frames), e)
        if isinstance(e, LetTuple):
            if not is_value(e.rhs):
                frames.append(LetTupleFrame(e.names, e.body))
                e = e.rhs
                continue
            return Decomp("redex", tuple(frames), e)
        if isinstance(e, Deref):
            return Decomp("redex", tuple(frames), e)
        if isinstance(e, Bot):
            return Decomp("stuck", tuple(frames), e)
        raise MalformedTerm(f"cannot decompose {e!r}")


def plug(frames, e):
    for f in reversed(frames):
        e = f.plug(e)
    return e


def fill_hole(ctx, v):
    """Replace the (unique) ``Hole`` of a continuation by ``v``."""
    if isinstance(ctx, Hole):
        return v
    kids = children(ctx)
    if not kids:
        return ctx
    return rebuild(ctx, (fill_hole(k, v) for k in kids))


# --------------------------------------------------------------------------
# Base steps


def _result_type(op):
    return INT if op in ARITH_OPS or op == "neg" else BOOL


def _feasible(env, atom, solver):
    if solver is None:
        raise SolverUnknown("symbolic branch without a solver")
    res = solver.sat(env, [atom])
    if isinstance(res, Unknown):
        raise SolverUnknown(res.reason)
    return isinstance(res, Sat)


def _branch(env, atom_true, atom_false, solver):
    """Feasible sides of a two-way symbolic split, true side first."""
    out = []
    t = _feasible(env, atom_true, solver)
    if t:
        out.append(True)
    # σ itself is satisfiable, so if the true side is not, the false side is.
    if not t or _feasible(env, atom_false, solver):
        out.append(False)
    return out


def _reduce(env, store, r, fresh, solver):
    """Reduce redex ``r``.  Returns a list of (env, store, expr)."""
    if isinstance(r, App):
        fn = r.fn
        mapping = {fn.param: r.arg}
        if fn.self_name is not None:
            mapping[fn.self_name] = fn
        return [(env, store, subst_many(fn.body, mapping))]
    if isinstance(r, Op):
        args = r.args
        if not any(isinstance(a, Sym) for a in args):
            try:
                return [(env, store, const(apply_op(r.op, [a.value for a in args])))]
            except DivisionByZero:
                return [(env, store, BOT)]
        out = []
        k_env = env
        if r.op in ("/", "mod"):
            d = args[1]
            if isinstance(d, Const):
                if d.value == 0:
                    return [(env, store, BOT)]
            else:
                nz = Op("<>", (d, const(0)))
                z = Op("=", (d, const(0)))
                sides = _branch(env, nz, z, solver)
                if False in sides:
                    out.append((env.add(z), store, BOT))
                if True not in sides:
                    return out
                k_env = env.add(nz)
        k = fresh.sym(_result_type(r.op))
        res = (k_env.add(Op("=", (k, Op(r.op, args)))), store, k)
        return [res] + out
    if isinstance(r, If):
        c = r.cond
        if isinstance(c, Const):
            return [(env, store, r.then if c.value else r.els)]
        if not isinstance(c, Sym):
            raise MalformedTerm(f"non-boolean guard {c!r}")
        neg = Op("not", (c,))
        out = []
        for side in _branch(env, c, neg, solver):
            out.append((env.add(c if side else neg), store, r.then if side else r.els))
        return out
    if isinstance(r, NewRef):
        loc = fresh.loc(r.loc)
        new_store = dict(store)
        new_store[loc] = r.init
        return [(env, new_store, rename_locations(r.body, {r.loc: loc}))]
    if isinstance(r, Deref):
        if r.loc not in store:
            raise MalformedTerm(f"dangling location {r.loc}")
        return [(env, store, store[r.loc])]
    if isinstance(r, Assign):
        if r.loc not in store:
            raise MalformedTerm(f"dangling location {r.loc}")
        new_store = dict(store)
        new_store[r.loc] = r.rhs
        return [(env, new_store, UNIT_V)]
    if isinstance(r, LetTuple):
        v = r.rhs
        if not isinstance(v, Tuple) or len(v.items) != len(r.names):
            raise MalformedTerm(f"tuple pattern mismatch on {v!r}")
        return [(env, store, subst_many(r.body, dict(zip(r.names, v.items))))]
    raise MalformedTerm(f"not a redex: {r!r}")


def step_concrete(store, e, fresh):
    """One reduction step, or None for values, stuck terms and calls."""
    d = decompose(e)
    if d.kind != "redex":
        return None
    [(_, s2, r2)] = _reduce(None, store, d.redex, fresh, None)
    return s2, plug(d.frames, r2)


def step_symbolic(env, store, e, fresh, solver):
    """All symbolic successors of ``e`` (empty for values/stuck/calls)."""
    d = decompose(e)
    if d.kind != "redex":
        return []
    return [(env2, s2, plug(d.frames, r2)) for env2, s2, r2 in _reduce(env, store, d.redex, fresh, solver)]


# --------------------------------------------------------------------------
# Chasing to the next interaction point


@dataclass(frozen=True)
class Terminal:
    value: object


@dataclass(frozen=True)
class StuckBot:
    pass


@dataclass(frozen=True)
class ProponentCall:
    ctx: object  # continuation with a Hole
    alpha: AbsName
    arg: object


@dataclass(frozen=True)
class FuelExhausted:
    pass


@dataclass(frozen=True)
class Branch:
    env: object
    store: dict
    outcome: object
    steps: int = 0


def reduce_to_interaction(env, store, e, fresh, solver=None, fuel=DEFAULT_FUEL):
    """Reduce until a value, ``_bot_``, a call to an abstract name, or
    until ``fuel`` steps are used, once per symbolic branch."""
    out = []
    stack = [(env, store, e, 0)]
    while stack:
        env, store, e, used = stack.pop()
        d = decompose(e)
        if d.kind == "value":
            out.append(Branch(env, store, Terminal(e), used))
            continue
        if d.kind == "stuck":
            out.append(Branch(env, store, StuckBot(), used))
            continue
        if d.kind == "call":
            alpha = d.redex.fn
            ctx = plug(d.frames, Hole(alpha.ty.cod))
            out.append(Branch(env, store, ProponentCall(ctx, alpha, d.redex.arg), used))
            continue
        if used >= fuel:
            out.append(Branch(env, store, FuelExhausted(), used))
            continue
        succ = _reduce(env, store, d.redex, fresh, solver)
        for env2, s2, r2 in reversed(succ):
            stack.append((env2, s2, plug(d.frames, r2), used + 1))
    return out
