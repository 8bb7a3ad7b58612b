"""Monomorphic type inference and checking.

Source programs carry no type annotations, so checking is done by
unification.  The elaborated program records the resolved arrow type of
every lambda (``Lam.ty``); the game needs those types to build opponent
arguments and return values.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

from .syntax import (
    ARITH_OPS, BOOL, COMPARE_OPS, EQ_OPS, INT, UNIT,
    AbsName, Annotation, App, Assign, Bot, Const, Deref, If, Lam, LetTuple,
    NewRef, Op, Sym, TArrow, TBase, TProd, Tuple, Var, children, rebuild,
)


class TypeCheckError(Exception):
    def __init__(self, message, term=None, expected=None, actual=None):
        pos = getattr(term, "pos", None)
        where = f" at line {pos[0]}, column {pos[1]}" if pos else ""
        super().__init__(message + where)
        self.term = term
        self.expected = expected
        self.actual = actual


@dataclass(frozen=True)
class TVar:
    id: int

    def __str__(self):
        return f"'t{self.id}"


class _Solver:
    def __init__(self):
        self.parent = {}
        self.ids = itertools.count()
        self.eq_vars = []

    def fresh(self):
        return TVar(next(self.ids))

    def find(self, t):
        while isinstance(t, TVar) and t in self.parent:
            t = self.parent[t]
        return t

    def resolve(self, t):
        t = self.find(t)
        if isinstance(t, TArrow):
            return TArrow(self.resolve(t.dom), self.resolve(t.cod))
        if isinstance(t, TProd):
            return TProd(tuple(self.resolve(x) for x in t.items))
        return t

    def occurs(self, v, t):
        t = self.find(t)
        if t == v:
            return True
        if isinstance(t, TArrow):
            return self.occurs(v, t.dom) or self.occurs(v, t.cod)
        if isinstance(t, TProd):
            return any(self.occurs(v, x) for x in t.items)
        return False

    def unify(self, a, b, term):
        a, b = self.find(a), self.find(b)
        if a == b:
            return
        if isinstance(a, TVar):
            if self.occurs(a, b):
                raise TypeCheckError("recursive type", term, a, b)
            self.parent[a] = b
            return
        if isinstance(b, TVar):
            self.unify(b, a, term)
            return
        if isinstance(a, TArrow) and isinstance(b, TArrow):
            self.unify(a.dom, b.dom, term)
            self.unify(a.cod, b.cod, term)
            return
        if isinstance(a, TProd) and isinstance(b, TProd) and len(a.items) == len(b.items):
            for x, y in zip(a.items, b.items):
                self.unify(x, y, term)
            return
        raise TypeCheckError(
            f"type mismatch: expected {self.resolve(b)}, got {self.resolve(a)}",
            term, self.resolve(b), self.resolve(a),
        )

    def default(self, t, fallback=UNIT):
        """Resolve ``t`` and ground every leftover variable."""
        t = self.resolve(t)
        if isinstance(t, TVar):
            self.parent[t] = fallback
            return fallback
        if isinstance(t, TArrow):
            return TArrow(self.default(t.dom), self.default(t.cod))
        if isinstance(t, TProd):
            return TProd(tuple(self.default(x) for x in t.items))
        return t


def _op_sig(op, solver):
    if op in ARITH_OPS:
        return (INT, INT), INT
    if op in COMPARE_OPS:
        return (INT, INT), BOOL
    if op in EQ_OPS:
        v = solver.fresh()
        solver.eq_vars.append(v)
        return (v, v), BOOL
    if op in ("&&", "||"):
        return (BOOL, BOOL), BOOL
    if op == "not":
        return (BOOL,), BOOL
    if op == "neg":
        return (INT,), INT
    raise TypeCheckError(f"unknown operator {op}")


class _Inferencer:
    def __init__(self):
        self.s = _Solver()
        self.lam_types = {}  # id(Lam) -> type term

    def infer(self, delta, sigma, e):
        s = self.s
        if isinstance(e, Const):
            return e.ty
        if isinstance(e, Var):
            if e.name not in delta:
                raise TypeCheckError(f"unbound variable {e.name}", e)
            return delta[e.name]
        if isinstance(e, Sym):
            return e.ty
        if isinstance(e, AbsName):
            return e.ty
        if isinstance(e, Bot):
            return s.fresh()
        if isinstance(e, Lam):
            dom, cod = s.fresh(), s.fresh()
            if e.param == "()":
                s.unify(dom, UNIT, e)
            if e.ty is not None:
                s.unify(TArrow(dom, cod), e.ty, e)
            inner = dict(delta)
            if e.self_name is not None:
                inner[e.self_name] = TArrow(dom, cod)
            inner[e.param] = dom
            s.unify(self.infer(inner, sigma, e.body), cod, e.body)
            if e.annot is not None:
                self.check_annotation(e.annot, sigma, e)
            self.lam_types[id(e)] = TArrow(dom, cod)
            return TArrow(dom, cod)
        if isinstance(e, Tuple):
            return TProd(tuple(self.infer(delta, sigma, x) for x in e.items))
        if isinstance(e, Op):
            params, result = _op_sig(e.op, s)
            if len(params) != len(e.args):
                raise TypeCheckError(f"operator {e.op} expects {len(params)} arguments", e)
            for p, a in zip(params, e.args):
                s.unify(self.infer(delta, sigma, a), p, a)
            return result
        if isinstance(e, App):
            tf = self.infer(delta, sigma, e.fn)
            ta = self.infer(delta, sigma, e.arg)
            r = s.fresh()
            s.unify(tf, TArrow(ta, r), e)
            return r
        if isinstance(e, If):
            s.unify(self.infer(delta, sigma, e.cond), BOOL, e.cond)
            t1 = self.infer(delta, sigma, e.then)
            t2 = self.infer(delta, sigma, e.els)
            s.unify(t2, t1, e.els)
            return t1
        if isinstance(e, NewRef):
            ti = self.infer(delta, sigma, e.init)
            return self.infer(delta, {**sigma, e.loc: ti}, e.body)
        if isinstance(e, Deref):
            if e.loc not in sigma:
                raise TypeCheckError(f"unknown location {e.loc}", e)
            return sigma[e.loc]
        if isinstance(e, Assign):
            if e.loc not in sigma:
                raise TypeCheckError(f"unknown location {e.loc}", e)
            s.unify(self.infer(delta, sigma, e.rhs), sigma[e.loc], e.rhs)
            return UNIT
        if isinstance(e, LetTuple):
            tr = self.infer(delta, sigma, e.rhs)
            parts = tuple(s.fresh() for _ in e.names)
            s.unify(tr, TProd(parts), e.rhs)
            inner = dict(delta)
            inner.update(zip(e.names, parts))
            return self.infer(inner, sigma, e.body)
        raise TypeCheckError(f"cannot type {type(e).__name__}", e)

    def check_annotation(self, annot: Annotation, sigma, where):
        s = self.s
        kenv = {k: s.fresh() for k in annot.sym_names}
        for loc, pat in annot.loc_patterns:
            if loc not in sigma:
                raise TypeCheckError(f"annotation names unknown location {loc}", where)
            s.unify(self.infer(kenv, {}, pat), sigma[loc], where)
        s.unify(self.infer(kenv, {}, annot.formula), BOOL, where)
        self.annot_envs = getattr(self, "annot_envs", [])
        self.annot_envs.append((kenv, where))


def _elaborate(inf: _Inferencer, e):
    if isinstance(e, Lam):
        ty = inf.s.default(inf.lam_types[id(e)])
        return Lam(e.param, _elaborate(inf, e.body), e.self_name, e.annot, ty, pos=e.pos)
    kids = children(e)
    if not kids:
        return e
    return rebuild(e, (_elaborate(inf, k) for k in kids))


def _finish(inf: _Inferencer, t):
    for v in inf.s.eq_vars:
        r = inf.s.resolve(v)
        if isinstance(r, TVar):
            inf.s.parent[r] = INT
        elif not isinstance(r, TBase):
            raise TypeCheckError(f"equality is only defined on base types, not {r}")
    for kenv, where in getattr(inf, "annot_envs", []):
        for k, v in kenv.items():
            if not isinstance(inf.s.default(v, INT), TBase):
                raise TypeCheckError(f"invariant variable {k} must have base type", where)
    return inf.s.default(t)


def typecheck(delta: dict, sigma: dict, e, expected=None):
    """Return the type of ``e`` under ``delta`` (variables) and ``sigma`` (store)."""
    inf = _Inferencer()
    t = inf.infer(dict(delta), dict(sigma), e)
    if expected is not None:
        inf.s.unify(t, expected, e)
    return _finish(inf, t)


def infer_program(e, expected=None):
    """Infer the type of a closed source program and elaborate lambda types.

    Returns ``(elaborated_expr, type)``.
    """
    inf = _Inferencer()
    t = inf.infer({}, {}, e)
    if expected is not None:
        inf.s.unify(t, expected, e)
    t = _finish(inf, t)
    return _elaborate(inf, e), t


def infer_pair(e1, e2):
    """Infer both sides of a program pair at one common type."""
    inf = _Inferencer()
    t1 = inf.infer({}, {}, e1)
    t2 = inf.infer({}, {}, e2)
    try:
        inf.s.unify(t2, t1, e2)
    except TypeCheckError as exc:
        raise TypeMismatchBetweenSides(str(exc)) from exc
    t = _finish(inf, t1)
    return _elaborate(inf, e1), _elaborate(inf, e2), t


class TypeMismatchBetweenSides(TypeCheckError):
    pass


def value_type(v):
    """Type of a closed runtime value (lambdas carry their elaborated type)."""
    if isinstance(v, (Const, Sym)):
        return v.ty
    if isinstance(v, (Lam, AbsName)):
        return v.ty
    if isinstance(v, Tuple):
        return TProd(tuple(value_type(x) for x in v.items))
    raise TypeCheckError(f"not a value: {v!r}", v)
