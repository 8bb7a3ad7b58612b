"""Symbolic environments and the SMT-LIB solver client.

A symbolic environment is a conjunction of boolean atoms over symbolic
constants.  Satisfiability of ground atoms is decided by evaluation; all
other queries go to an external SMT-LIB v2 process (``z3 -in`` by
default) over pipes, one ``push``/``pop`` frame per query.
"""
from __future__ import annotations

import logging
import shlex
import subprocess
import threading
from dataclasses import dataclass

from .syntax import (
    BOOL, UNIT, Const, If, Op, Sym, const, iter_subterms, map_leaves,
)

log = logging.getLogger(__name__)


class SolverUnknown(Exception):
    """Raised when a query that must be decided comes back unknown."""


# --------------------------------------------------------------------------
# Concrete evaluation (shared with the interpreter)


def euclid_div(a: int, b: int) -> int:
    # SMT-LIB integer division: a = b*q + r with 0 <= r < |b|.
    r = a % abs(b)
    return (a - r) // b


def euclid_mod(a: int, b: int) -> int:
    return a % abs(b)


class DivisionByZero(Exception):
    pass


def apply_op(op: str, args: list):
    """Apply an operator to Python values.  Raises DivisionByZero."""
    if op == "+":
        return args[0] + args[1]
    if op == "-":
        return args[0] - args[1]
    if op == "*":
        return args[0] * args[1]
    if op in ("/", "mod"):
        if args[1] == 0:
            raise DivisionByZero()
        return euclid_div(*args) if op == "/" else euclid_mod(*args)
    if op == "<":
        return args[0] < args[1]
    if op == "<=":
        return args[0] <= args[1]
    if op == ">":
        return args[0] > args[1]
    if op == ">=":
        return args[0] >= args[1]
    if op == "=":
        return args[0] == args[1]
    if op == "<>":
        return args[0] != args[1]
    if op == "&&":
        return args[0] and args[1]
    if op == "||":
        return args[0] or args[1]
    if op == "not":
        return not args[0]
    if op == "neg":
        return -args[0]
    raise ValueError(f"unknown operator {op}")


def evaluate(e, model: dict):
    """Evaluate a first-order expression under ``model`` (κ name -> value).

    Division by zero raises DivisionByZero; callers decide what it means.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Sym):
        return model[e.name]
    if isinstance(e, Op):
        if e.op in ("&&", "||"):
            a = evaluate(e.args[0], model)
            if (e.op == "&&") != bool(a):
                return a
            return evaluate(e.args[1], model)
        return apply_op(e.op, [evaluate(a, model) for a in e.args])
    if isinstance(e, If):
        return evaluate(e.then if evaluate(e.cond, model) else e.els, model)
    raise ValueError(f"cannot evaluate {e!r}")


def holds(atom, model: dict) -> bool:
    try:
        return bool(evaluate(atom, model))
    except DivisionByZero:
        # The solver treats x/0 as an unspecified total function; we only
        # call this on atoms whose divisors are constrained nonzero.
        return False


# --------------------------------------------------------------------------
# Symbolic environments


_SYMS_CACHE: dict = {}


def syms_of(e) -> frozenset:
    """Names of the symbolic constants in ``e`` (memoised per object)."""
    hit = _SYMS_CACHE.get(id(e))
    if hit is not None and hit[0] is e:
        return hit[1]
    out = frozenset(t.name for t in iter_subterms(e) if isinstance(t, Sym))
    if len(_SYMS_CACHE) > 200_000:
        _SYMS_CACHE.clear()
    _SYMS_CACHE[id(e)] = (e, out)
    return out


@dataclass(frozen=True)
class SymbolicEnv:
    """Conjunction of atoms plus the declared symbolic constants."""

    atoms: tuple = ()
    decls: tuple = ()  # sorted tuple of (name, type)

    def declare(self, *syms) -> "SymbolicEnv":
        d = dict(self.decls)
        for s in syms:
            d[s.name] = s.ty
        return SymbolicEnv(self.atoms, tuple(sorted(d.items())))

    def add(self, *atoms) -> "SymbolicEnv":
        d = dict(self.decls)
        new = list(self.atoms)
        for a in atoms:
            for t in iter_subterms(a):
                if isinstance(t, Sym):
                    d[t.name] = t.ty
            new.append(a)
        return SymbolicEnv(tuple(new), tuple(sorted(d.items())))

    @property
    def types(self) -> dict:
        return dict(self.decls)

    def symbols(self) -> set:
        return {n for n, _ in self.decls}

    def __len__(self):
        return len(self.atoms)


TOP = SymbolicEnv()


def conj(atoms):
    atoms = list(atoms)
    if not atoms:
        return Const(True, BOOL)
    out = atoms[0]
    for a in atoms[1:]:
        out = Op("&&", (out, a))
    return out


def negate(atom):
    if isinstance(atom, Op) and atom.op == "not":
        return atom.args[0]
    return Op("not", (atom,))


# --------------------------------------------------------------------------
# SMT-LIB text


def to_smt(e, names=None) -> str:
    if isinstance(e, Const):
        if e.ty == BOOL:
            return "true" if e.value else "false"
        if e.ty == UNIT:
            return "0"
        return str(e.value) if e.value >= 0 else f"(- {-e.value})"
    if isinstance(e, Sym):
        return f"k{names[e.name] if names else e.name}"
    if isinstance(e, Op):
        a = [to_smt(x, names) for x in e.args]
        if e.op == "<>":
            return f"(not (= {a[0]} {a[1]}))"
        if e.op == "neg":
            return f"(- {a[0]})"
        sym = {"/": "div", "&&": "and", "||": "or"}.get(e.op, e.op)
        return f"({sym} {' '.join(a)})"
    if isinstance(e, If):
        return f"(ite {to_smt(e.cond, names)} {to_smt(e.then, names)} {to_smt(e.els, names)})"
    raise ValueError(f"not a first-order term: {e!r}")


def is_nonlinear(e) -> bool:
    for t in iter_subterms(e):
        if isinstance(t, Op) and t.op in ("*", "/", "mod"):
            if t.op == "*":
                if not (isinstance(t.args[0], Const) or isinstance(t.args[1], Const)):
                    return True
            elif not isinstance(t.args[1], Const):
                return True
    return False


def _parse_sexp(text: str):
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    stack = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    return stack[0]


def _model_value(v):
    if isinstance(v, list):
        if len(v) == 2 and v[0] == "-":
            return -_model_value(v[1])
        raise ValueError(f"unsupported model value {v}")
    if v == "true":
        return True
    if v == "false":
        return False
    return int(v)


# --------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class Sat:
    model: dict = None


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Unknown:
    reason: str = ""


UNSAT = Unsat()


# --------------------------------------------------------------------------
# Solver process


class SolverProcess:
    """One long-lived SMT-LIB process.  Not thread-safe on its own."""

    def __init__(self, cmd: str = "z3 -in", logic: str = "QF_LIA"):
        self.cmd = cmd
        self.logic = logic
        self.proc = None

    def start(self):
        try:
            self.proc = subprocess.Popen(
                shlex.split(self.cmd), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1,
            )
        except OSError as exc:
            self.proc = None
            raise SolverUnknown(f"cannot start solver {self.cmd!r}: {exc}") from exc
        self._send(f"(set-logic {self.logic})")

    def _send(self, text):
        self.proc.stdin.write(text + "\n")
        self.proc.stdin.flush()

    def _readline(self):
        line = self.proc.stdout.readline()
        if not line:
            raise SolverUnknown("solver process terminated")
        return line.strip()

    def query(self, decls, asserts, want_model=True):
        """Run one check-sat.  ``decls`` is a list of (smt_name, sort)."""
        if self.proc is None or self.proc.poll() is not None:
            self.start()
        lines = ["(push 1)"]
        lines += [f"(declare-const {n} {s})" for n, s in decls]
        lines += [f"(assert {a})" for a in asserts]
        lines.append("(check-sat)")
        try:
            self._send("\n".join(lines))
            errors = []
            while True:
                line = self._readline()
                if line in ("sat", "unsat", "unknown"):
                    break
                if line:
                    errors.append(line)
            model = None
            if line == "sat" and want_model and not errors:
                self._send("(get-model)")
                model = self._read_model()
            self._send("(pop 1)")
        except (OSError, SolverUnknown) as exc:
            self.close()
            return Unknown(str(exc))
        if errors:
            return Unknown("; ".join(errors))
        if line == "unsat":
            return UNSAT
        if line == "unknown":
            return Unknown("solver returned unknown")
        return Sat(model)

    def _read_model(self):
        depth, buf = 0, []
        while True:
            line = self._readline()
            buf.append(line)
            depth += line.count("(") - line.count(")")
            if depth <= 0 and "".join(buf).strip():
                break
        parsed = _parse_sexp(" ".join(buf))
        model = {}
        for item in parsed[0] if parsed else []:
            if isinstance(item, list) and item and item[0] == "define-fun":
                model[item[1]] = _model_value(item[4])
        return model

    def close(self):
        if self.proc is not None:
            try:
                self.proc.kill()
                self.proc.wait(timeout=5)
            except Exception:  # pragma: no cover
                pass
        self.proc = None


@dataclass
class SolverStats:
    queries: int = 0
    cache_hits: int = 0
    ground: int = 0
    unknown: int = 0


class Solver:
    """Satisfiability front end: slicing, ground evaluation, caching."""

    def __init__(self, cmd: str = "z3 -in"):
        self.cmd = cmd
        self.linear = SolverProcess(cmd, "QF_LIA")
        self.nonlinear = SolverProcess(cmd, "QF_NIA")
        self.cache = {}
        self.stats = SolverStats()
        self.lock = threading.Lock()

    def close(self):
        self.linear.close()
        self.nonlinear.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- public API -----------------------------------------------------

    def sat(self, env: SymbolicEnv, extra=(), want_model=False, slice_=True):
        """Decide ``env ∧ extra``.

        With ``slice_`` the environment is assumed satisfiable and only the
        atoms connected to ``extra`` are sent; the returned model (if any)
        then covers only those constants.
        """
        atoms = list(env.atoms)
        extra = list(extra)
        if slice_ and extra:
            atoms = slice_atoms(atoms, set().union(*(syms_of(a) for a in extra)))
        return self.check(atoms + extra, env.types, want_model)

    def check(self, atoms, types=None, want_model=False):
        types = dict(types or {})
        live = []
        for a in atoms:
            if not syms_of(a):
                ok = holds(a, {})
                self.stats.ground += 1
                if not ok:
                    return UNSAT
                continue
            live.append(a)
        if not live:
            return Sat({})
        order = {}
        for a in live:
            for t in iter_subterms(a):
                if isinstance(t, Sym) and t.name not in order:
                    order[t.name] = len(order)
                    types.setdefault(t.name, t.ty)
        asserts = [to_smt(a, order) for a in live]
        decls = [(f"k{order[n]}", "Bool" if types[n] == BOOL else "Int") for n in order]
        key = (tuple(decls), tuple(asserts))
        with self.lock:
            res = self.cache.get(key)
            if res is not None and (not want_model or not isinstance(res, Sat) or res.model is not None):
                self.stats.cache_hits += 1
            else:
                self.stats.queries += 1
                proc = self.nonlinear if any(is_nonlinear(a) for a in live) else self.linear
                res = proc.query(decls, asserts, want_model=want_model)
                self.cache[key] = res
        if isinstance(res, Unknown):
            self.stats.unknown += 1
            return res
        if isinstance(res, Sat) and res.model is not None:
            model = {}
            for n, i in order.items():
                v = res.model.get(f"k{i}")
                if v is None:
                    v = False if types[n] == BOOL else 0
                model[n] = v
            if not all(holds(a, model) for a in live):
                return Unknown("model does not satisfy the query")
            return Sat(model)
        return res

    def model(self, env: SymbolicEnv):
        """A total model of ``env`` (over its declared constants) or None."""
        res = self.check(list(env.atoms), env.types, want_model=True)
        if not isinstance(res, Sat):
            return None
        model = dict(res.model or {})
        for n, ty in env.decls:
            model.setdefault(n, False if ty == BOOL else (None if ty == UNIT else 0))
        return model

    def entails(self, env: SymbolicEnv, phi):
        """True iff ``env`` implies ``phi`` and ``env ∧ phi`` is satisfiable.

        Returns None when the solver cannot decide.
        """
        neg = self.sat(env, [negate(phi)])
        if isinstance(neg, Unknown):
            return None
        if isinstance(neg, Sat):
            return False
        pos = self.sat(env, [phi])
        if isinstance(pos, Unknown):
            return None
        return isinstance(pos, Sat)


def slice_atoms(atoms, seeds: set):
    """Atoms connected to ``seeds`` through shared symbolic constants."""
    atoms = list(atoms)
    syms = [syms_of(a) for a in atoms]
    reach = set(seeds)
    taken = [False] * len(atoms)
    changed = True
    while changed:
        changed = False
        for k, s in enumerate(syms):
            if not taken[k] and s & reach:
                taken[k] = True
                reach |= s
                changed = True
    return [a for k, a in enumerate(atoms) if taken[k] or not syms[k]]


# --------------------------------------------------------------------------
# Normalisation


def substitute_sym(e, name: int, by):
    return map_leaves(e, lambda t: by if isinstance(t, Sym) and t.name == name else t)


def _is_definition(atom, name):
    """``κ = e`` (either orientation) with κ not occurring in ``e``."""
    if isinstance(atom, Op) and atom.op == "=":
        for a, b in (atom.args, atom.args[::-1]):
            if isinstance(a, Sym) and a.name == name and name not in syms_of(b):
                return b
    return None


def _fold(e):
    """Constant-fold ground subterms."""
    if isinstance(e, Op):
        args = tuple(_fold(a) for a in e.args)
        if all(isinstance(a, Const) for a in args):
            try:
                return const(apply_op(e.op, [a.value for a in args]))
            except DivisionByZero:
                pass
        return Op(e.op, args)
    if isinstance(e, If):
        c = _fold(e.cond)
        if isinstance(c, Const):
            return _fold(e.then if c.value else e.els)
        return If(c, _fold(e.then), _fold(e.els))
    return e


def eliminate(atoms, live: set):
    """Drop and substitute away constraints on dead symbolic constants.

    The result has the same satisfying assignments restricted to ``live``
    as the input, provided the input is satisfiable.
    """
    live = set(live)
    # Components not touching live constants are independent: drop first.
    atoms = slice_atoms(atoms, live)
    # Substitute dead κ defined by κ = e.
    changed = True
    while changed:
        changed = False
        for k, a in enumerate(atoms):
            # Occurrence order, so the result does not depend on the names.
            dead = syms_of(a) - live
            for n in dict.fromkeys(t.name for t in iter_subterms(a) if isinstance(t, Sym) and t.name in dead):
                rhs = _is_definition(a, n)
                if rhs is None:
                    continue
                rest = atoms[:k] + atoms[k + 1:]
                atoms = [_fold(substitute_sym(b, n, rhs)) for b in rest]
                changed = True
                break
            if changed:
                break
    # Drop components not touching live constants.
    kept = slice_atoms(atoms, live)
    out, seen = [], set()
    for a in kept:
        a = _fold(a)
        if isinstance(a, Const) and a.value is True:
            continue
        key = repr(a)
        if key not in seen:
            seen.add(key)
            out.append(a)
    return out


def normalize(env: SymbolicEnv, live, rename: bool = True):
    """σ-normalisation relative to the live symbolic constants.

    Returns a new environment; with ``rename`` surviving constants are
    renamed ``0, 1, ...`` by first occurrence.
    """
    atoms = eliminate(env.atoms, set(live))
    types = env.types
    for a in atoms:
        for t in iter_subterms(a):
            if isinstance(t, Sym):
                types.setdefault(t.name, t.ty)
    if not rename:
        keep = set(live) | set().union(*(syms_of(a) for a in atoms)) if atoms else set(live)
        return SymbolicEnv(tuple(atoms), tuple(sorted((n, types[n]) for n in keep if n in types)))
    order = {}
    for a in atoms:
        for t in iter_subterms(a):
            if isinstance(t, Sym) and t.name not in order:
                order[t.name] = len(order)
    for n in sorted(live):
        if n not in order and n in types:
            order[n] = len(order)
    renamed = [map_leaves(a, lambda t: Sym(order[t.name], t.ty) if isinstance(t, Sym) else t) for a in atoms]
    return SymbolicEnv(tuple(renamed), tuple(sorted((order[n], types[n]) for n in order)))
