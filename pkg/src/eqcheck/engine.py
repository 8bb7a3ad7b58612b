"""Bounded exploration of the synchronised game between two programs.

The search is depth first.  Proponent nodes pair up the moves of the two
sides, splitting on whether their first-order leaves agree; opponent
nodes apply the up-to rewrites, consult the memo table and enumerate
the context's moves, feeding the same fresh names to both sides.  A
side that cannot answer a challenge is replaced by ``BOTTOM``; if the
other side can then terminate, the path is a candidate witness and is
replayed concretely before it is believed.
"""
from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field, replace
from typing import Optional

from .constraints import Sat, Solver, SolverUnknown, TOP, Unknown, conj, negate
from .lts import (
    BOTTOM, TERM, FnHole, OpApp, OpRet, PropApp, PropRet, Term,
    apply_function, hole_type, initial_config, move_text, op_app, op_ret,
    pattern_leaves, pattern_shape, proponent_moves, ulpatt_type, value_type,
)
from .semantics import (
    DEFAULT_FUEL, FuelExhausted, StuckBot, Terminal, fill_hole,
    reduce_to_interaction,
)
from .syntax import (
    BOOL, AbsName, Const, Fresh, Lam, Op, Sym, Tuple, instantiate_syms,
    iter_subterms,
)
from .upto import (
    CallEntry, Node, apply_invariant, canonical_key, dedup, drop_unreachable_blocks,
    duplicates, gc_node, key_hash, lam_key, separate, signatures_agree,
    store_signature,
)

BOUND_EXHAUSTED = "BoundExhausted"
FUEL_EXHAUSTED = "FuelExhausted"
SOLVER_UNKNOWN = "SolverUnknown"
REENTRY_VIOLATED = "ReentryViolated"
INVARIANT_FAILED = "InvariantFailed"
REPLAY_FAILED = "ReplayFailed"


# --------------------------------------------------------------------------
# Options, traces, verdicts


@dataclass(frozen=True)
class Options:
    bound: int = 6
    timeout: float = 150.0
    separation: bool = True
    annotations: bool = True
    reentry: bool = True
    all_upto: bool = True
    gc: bool = True  # garbage collection and duplicate-knowledge removal
    solver_cmd: str = "z3 -in"
    explain: bool = False
    json: bool = False
    fuel: int = DEFAULT_FUEL

    def effective(self) -> "Options":
        """Apply the implications between toggles."""
        o = self
        if not o.all_upto:
            o = replace(o, separation=False, annotations=False, reentry=False, gc=False)
        if not o.annotations:
            o = replace(o, reentry=False)
        return o


@dataclass(frozen=True)
class TraceStep:
    move: object
    side: str = "both"  # "both" | "left" | "right"
    atoms: tuple = ()  # constraints added since the previous step


@dataclass(frozen=True)
class Trace:
    steps: tuple = ()
    survivor: Optional[str] = None  # side that completes the trace

    def __iter__(self):
        return iter(self.steps)

    def __len__(self):
        return len(self.steps)

    def lines(self):
        return [move_text(s.move) for s in self.steps]

    def text(self) -> str:
        return "\n".join(self.lines())


@dataclass
class Stats:
    nodes: int = 0
    opponent_nodes: int = 0
    memo_hits: int = 0
    solver_queries: int = 0
    max_depth: int = 0
    sep_splits: int = 0
    sep_fallbacks: int = 0
    reentry_skips: int = 0
    reentry_violations: int = 0
    inv_applied: int = 0
    inv_failed: int = 0
    dedups: int = 0
    witness_candidates: int = 0
    replay_rejects: int = 0
    elapsed: float = 0.0

    def as_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class Equivalent:
    nodes_explored: int
    memo_hits: int
    stats: Stats = field(default=None, compare=False)
    kind = "eq"


@dataclass(frozen=True)
class Inequivalent:
    witness: Trace
    model: dict
    stats: Stats = field(default=None, compare=False)
    kind = "ineq"


@dataclass(frozen=True)
class Inconclusive:
    reasons: frozenset
    stats: Stats = field(default=None, compare=False)
    kind = "inconclusive"


class _Witness(Exception):
    def __init__(self, trace, model):
        self.trace = trace
        self.model = model


class _Detached(Exception):
    """A sibling block could terminate, which the whole node cannot."""


class _Timeout(Exception):
    pass


# --------------------------------------------------------------------------
# Engine


class Engine:
    def __init__(self, left, right, opts: Options = Options(), solver: Optional[Solver] = None,
                 log=None):
        self.left_src = left
        self.right_src = right
        self.opts = opts.effective()
        self.own_solver = solver is None
        self.solver = solver or Solver(self.opts.solver_cmd)
        self.fresh = Fresh()
        self.next_index = 0
        self.memo = {}
        self.stats = Stats()
        self.skipped = set()
        self.violated = set()
        self.explain_lines = []
        self.log = log
        self.deadline = None

    # -- diagnostics ----------------------------------------------------

    def note(self, line: str):
        if self.opts.explain:
            self.explain_lines.append(line)
            if self.log is not None:
                self.log(line)

    def tick(self, n: Node):
        self.stats.nodes += 1
        self.stats.max_depth = max(self.stats.max_depth, len(n.trace))
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Timeout()

    # -- entry point ----------------------------------------------------

    def run(self):
        start = time.monotonic()
        self.deadline = start + self.opts.timeout if self.opts.timeout else None
        root = Node(TOP, initial_config(self.left_src), initial_config(self.right_src), self.opts.bound)
        q0 = self.solver.stats.queries
        limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(limit, 20000))
        try:
            try:
                reasons = set(self.proponent(root))
            except _Witness as w:
                self._finish(start, q0)
                return Inequivalent(w.trace, w.model, self.stats)
            except _Timeout:
                reasons = {BOUND_EXHAUSTED}
            except SolverUnknown:
                reasons = {SOLVER_UNKNOWN}
        finally:
            sys.setrecursionlimit(limit)
            if self.own_solver:
                self.solver.close()
        if self.skipped & self.violated:
            reasons.add(REENTRY_VIOLATED)
        self._finish(start, q0)
        if not reasons:
            return Equivalent(self.stats.opponent_nodes, self.stats.memo_hits, self.stats)
        return Inconclusive(frozenset(reasons), self.stats)

    def _finish(self, start, q0):
        self.stats.elapsed = time.monotonic() - start
        self.stats.solver_queries = self.solver.stats.queries - q0

    # -- proponent nodes ------------------------------------------------

    def _moves(self, env, c, start):
        return proponent_moves(env, c, self.fresh, self.solver, start, self.opts.fuel)

    def proponent(self, n: Node) -> set:
        self.tick(n)
        reasons = set()
        start = self.next_index
        try:
            if not n.live_live:
                side = "left" if n.right is BOTTOM else "right"
                live = n.left if side == "left" else n.right
                for st in self._moves(n.env, live, start):
                    if st.exhausted:
                        reasons.add(FUEL_EXHAUSTED)
                    elif st.move is not None:
                        pair = (st.config, BOTTOM) if side == "left" else (BOTTOM, st.config)
                        reasons |= self.after_proponent(n, st.env, st.move, pair, side, start)
                return reasons
            for lb in self._moves(n.env, n.left, start):
                for rb in self._moves(lb.env, n.right, start):
                    reasons |= self._pair(n, lb, rb, start)
        except SolverUnknown:
            reasons.add(SOLVER_UNKNOWN)
        return reasons

    def _pair(self, n, lb, rb, start) -> set:
        env = rb.env
        if lb.exhausted or rb.exhausted:
            return {FUEL_EXHAUSTED}
        if lb.move is None and rb.move is None:
            return set()  # both diverge
        if lb.move is None:
            return self.after_proponent(n, env, rb.move, (BOTTOM, rb.config), "right", start)
        if rb.move is None:
            return self.after_proponent(n, env, lb.move, (lb.config, BOTTOM), "left", start)
        ml, mr = lb.move, rb.move
        if not _compatible(ml, mr):
            return self._split(n, env, lb, rb, start)
        eqs = [Op("=", (a, b)) for a, b in zip(pattern_leaves(_pat(ml)), pattern_leaves(_pat(mr))) if a != b]
        reasons = set()
        if not eqs:
            return self.after_proponent(n, env, ml, (lb.config, rb.config), "both", start)
        phi = conj(eqs)
        same = self.solver.sat(env, [phi])
        if isinstance(same, Unknown):
            reasons.add(SOLVER_UNKNOWN)
        elif isinstance(same, Sat):
            reasons |= self.after_proponent(n, env.add(*eqs), ml, (lb.config, rb.config), "both", start)
        diff = self.solver.sat(env, [negate(phi)])
        if isinstance(diff, Unknown):
            reasons.add(SOLVER_UNKNOWN)
        elif isinstance(diff, Sat):
            reasons |= self._split(n, env.add(negate(phi)), lb, rb, start)
        return reasons

    def _split(self, n, env, lb, rb, start) -> set:
        """The two sides disagree: each must now be driven alone."""
        reasons = set(self.after_proponent(n, env, lb.move, (lb.config, BOTTOM), "left", start))
        reasons |= self.after_proponent(n, env, rb.move, (BOTTOM, rb.config), "right", start)
        return reasons

    def after_proponent(self, n, env, move, pair, side, start) -> set:
        left, right = pair
        holes = _count_holes(_pat(move))
        self.next_index = max(self.next_index, start + holes)
        step = TraceStep(move, side, env.atoms[len(n.env.atoms):])
        child = replace(n, env=env, left=left, right=right, trace=n.trace + (step,))
        if isinstance(move, PropApp):
            if n.bound <= 0:
                return {BOUND_EXHAUSTED}
            child = replace(child, bound=n.bound - 1)
            top = child.calls[-1] if child.calls else None
            if top is not None and top.has_invariant and self.opts.annotations:
                child, _ = self._invariant(child, top, "call-out")
        else:
            if child.calls:
                top = child.calls[-1]
                child = replace(child, calls=child.calls[:-1])
                child = self._exit_call(child, top)
        if holes:
            new = set(range(start, start + holes))
            dup = duplicates(child) if self.opts.gc else {}
            if new - set(dup) and child.calls:
                child = replace(child, calls=tuple(replace(c, grew=True) for c in child.calls))
        return self.opponent(child)

    def _exit_call(self, child: Node, top: CallEntry) -> Node:
        placeholders = {}
        if top.has_invariant and self.opts.annotations:
            child, syms = self._invariant(child, top, "exit")
            placeholders = {s.name: k for k, s in enumerate(syms)}
        if top.flagged and self.opts.reentry:
            ok = not top.grew
            for c, snap in zip((child.left, child.right), top.snapshot):
                if ok and c is not BOTTOM and snap is not None:
                    ok = signatures_agree(snap, store_signature(c, placeholders))
            if not ok:
                self.stats.reentry_violations += 1
                self.violated |= set(top.lam_keys)
                self.note(f"REENTRY violated {top.index}")
        return child

    def _invariant(self, n: Node, entry: CallEntry, phase: str):
        res = apply_invariant(n, entry.annots, self.fresh, self.solver)
        if res.node is None:
            self.stats.inv_failed += 1
            self.note(f"INV failed {entry.index}: {res.reason}")
            return n, ()
        self.stats.inv_applied += 1
        self.note(f"INV applied {entry.index}")
        return res.node, res.fresh_syms

    # -- opponent nodes -------------------------------------------------

    def opponent(self, n: Node, split: bool = True) -> set:
        self.tick(n)
        self.stats.opponent_nodes += 1
        if n.live_live:
            assert len(n.left.stack) == len(n.right.stack), "stack heights diverged"
        if self.opts.gc:
            n = gc_node(n)
            d = dedup(n)
            if d is not n:
                self.stats.dedups += 1
                n = d
        if self.opts.separation:
            if not n.live_live:
                n = drop_unreachable_blocks(n)
            elif split:
                focus, sibs = separate(n)
                pieces = len(sibs) + (focus is not None)
                if pieces > 1:
                    return self._separated(n, focus, sibs)
        key = canonical_key(n)
        hit = self.memo.get(key)
        if hit is not None and hit[0] >= n.bound:
            self.stats.memo_hits += 1
            self.note(f"MEMO hit {key_hash(key)}")
            return set(hit[1])
        self.memo[key] = (n.bound, frozenset())  # in progress: closes cycles
        reasons = self._opponent_moves(n)
        self.memo[key] = (n.bound, frozenset(reasons))
        return reasons

    def _separated(self, n, focus, sibs) -> set:
        self.stats.sep_splits += 1
        self.note(f"SEP split {len(sibs) + (focus is not None)} blocks")
        reasons = set()
        if focus is None:
            for s in sibs:
                reasons |= self.opponent(s)
            return reasons
        # With calls pending, a sibling's termination is not a real move of
        # the whole node: a sibling witness sends us back to the unsplit node.
        before = set(self.memo)
        try:
            for s in sibs:
                reasons |= self.opponent(s)
        except _Detached:
            for k in set(self.memo) - before:
                del self.memo[k]
            self.stats.sep_fallbacks += 1
            return self.opponent(n, split=False)
        return reasons | self.opponent(focus)

    def _opponent_moves(self, n: Node) -> set:
        reasons = set()
        live = [c for _, c in n.sides()]
        base = live[0]
        active = {c.index: c for c in n.calls if c.flagged}
        if not n.live_live and not base.stack:
            # Shortest witnesses first: try terminating before anything else.
            reasons |= self._candidate(n)
        for i, fn in base.gamma:
            if self.opts.reentry and i in active:
                self.stats.reentry_skips += 1
                self.skipped |= set(active[i].lam_keys)
                self.note(f"REENTRY skip {i}")
                continue
            if n.bound <= 0:
                reasons.add(BOUND_EXHAUSTED)
                continue
            v, names, syms = ulpatt_type(value_type(fn).dom, self.fresh)
            env = n.env.declare(*syms)
            left = op_app(n.left, i, v, names) if n.left is not BOTTOM else BOTTOM
            right = op_app(n.right, i, v, names) if n.right is not BOTTOM else BOTTOM
            annots = (None, None)
            if self.opts.annotations:
                annots = tuple(
                    c.gamma_map[i].annot if c is not BOTTOM and isinstance(c.gamma_map[i], Lam) else None
                    for c in (n.left, n.right)
                )
            keys = tuple(k for k in (lam_key(c.gamma_map[i]) if c is not BOTTOM else None
                                     for c in (n.left, n.right)) if k is not None)
            entry = CallEntry(i, annots, keys if any(a is not None for a in annots) else ())
            step = TraceStep(OpApp(i, v), self._side(n))
            child = replace(n, env=env, left=left, right=right, bound=n.bound - 1,
                            calls=n.calls + (entry,), trace=n.trace + (step,))
            placeholders = {}
            if entry.has_invariant:
                child, fresh = self._invariant(child, entry, "entry")
                placeholders = {s.name: k for k, s in enumerate(fresh)}
            if entry.flagged and self.opts.reentry:
                snap = tuple(store_signature(c, placeholders) for c in (child.left, child.right))
                child = replace(child, calls=child.calls[:-1] + (replace(entry, snapshot=snap),))
            reasons |= self.proponent(child)
        if base.stack:
            v, names, syms = ulpatt_type(hole_type(base.stack[-1]), self.fresh)
            env = n.env.declare(*syms)
            left = op_ret(n.left, v, names) if n.left is not BOTTOM else BOTTOM
            right = op_ret(n.right, v, names) if n.right is not BOTTOM else BOTTOM
            step = TraceStep(OpRet(v), self._side(n))
            reasons |= self.proponent(replace(n, env=env, left=left, right=right, trace=n.trace + (step,)))
        return reasons

    @staticmethod
    def _side(n: Node) -> str:
        if n.live_live:
            return "both"
        return "left" if n.right is BOTTOM else "right"

    # -- witnesses ------------------------------------------------------

    def _candidate(self, n: Node) -> set:
        if n.detached:
            raise _Detached()
        self.stats.witness_candidates += 1
        survivor = self._side(n)
        trace = Trace(n.trace + (TraceStep(TERM, survivor),), survivor)
        model = self.solver.model(n.env)
        if model is None:
            return {SOLVER_UNKNOWN}
        outcome = replay_outcome(self.left_src, self.right_src, trace, model, self.opts.fuel)
        if outcome == "confirmed":
            raise _Witness(trace, model)
        self.stats.replay_rejects += 1
        self.note(f"REPLAY {outcome} at depth {len(trace)}")
        if outcome == "unknown":
            return {FUEL_EXHAUSTED}
        return {INVARIANT_FAILED if n.approx else REPLAY_FAILED}


def _pat(move):
    if isinstance(move, PropApp):
        return move.pattern
    if isinstance(move, PropRet):
        return move.pattern
    return None


def _count_holes(p) -> int:
    if isinstance(p, FnHole):
        return 1
    if isinstance(p, Tuple):
        return sum(_count_holes(x) for x in p.items)
    return 0


def _compatible(ml, mr) -> bool:
    if type(ml) is not type(mr):
        return False
    if isinstance(ml, PropApp) and ml.alpha != mr.alpha:
        return False
    return pattern_shape(_pat(ml)) == pattern_shape(_pat(mr))


# --------------------------------------------------------------------------
# Concrete replay


class _Stop(Exception):
    def __init__(self, outcome):
        self.outcome = outcome  # "diverged" | "mismatch" | "exhausted"


def _match_pattern(expected, value, gamma: dict):
    """Compare a concrete value with an instantiated trace pattern,
    binding its functions to the pattern's hole indices."""
    if isinstance(expected, FnHole):
        if not isinstance(value, (Lam, AbsName)):
            return False
        gamma[expected.index] = value
        return True
    if isinstance(expected, Tuple):
        if not isinstance(value, Tuple) or len(value.items) != len(expected.items):
            return False
        return all(_match_pattern(e, v, gamma) for e, v in zip(expected.items, value.items))
    if isinstance(value, Const) and isinstance(expected, Const):
        return value.value == expected.value
    return False


class _Replayer:
    """One side of a concrete replay."""

    def __init__(self, expr, fresh, fuel):
        self.gamma = {}
        self.stack = []
        self.store = {}
        self.expr = expr
        self.fresh = fresh
        self.fuel = fuel

    def proponent(self, expected, model):
        [br] = reduce_to_interaction(TOP, self.store, self.expr, self.fresh, None, self.fuel)
        self.store = br.store
        self.expr = None
        o = br.outcome
        if isinstance(o, StuckBot):
            raise _Stop("diverged")
        if isinstance(o, FuelExhausted):
            raise _Stop("exhausted")
        pat = instantiate_syms(_pat(expected), model)
        found = {}
        if isinstance(o, Terminal):
            if not isinstance(expected, PropRet) or not _match_pattern(pat, o.value, found):
                raise _Stop("mismatch")
        else:
            if not isinstance(expected, PropApp) or o.alpha != expected.alpha:
                raise _Stop("mismatch")
            if not _match_pattern(pat, o.arg, found):
                raise _Stop("mismatch")
            self.stack.append(o.ctx)
        self.gamma.update(found)

    def opponent(self, move, model):
        if isinstance(move, Term):
            if self.stack:
                raise _Stop("mismatch")
            return True
        v = instantiate_syms(move.value, model)
        if isinstance(move, OpApp):
            if move.index not in self.gamma:
                raise _Stop("mismatch")
            self.expr = apply_function(self.gamma[move.index], v)
        else:
            if not self.stack:
                raise _Stop("mismatch")
            self.expr = fill_hole(self.stack.pop(), v)
        return False


def _drive(expr, steps, model, fuel):
    """Run one side along ``steps``; returns "terminated" or a stop outcome."""
    r = _Replayer(expr, Fresh(), fuel)
    try:
        for st in steps:
            m = st.move
            if isinstance(m, (PropApp, PropRet)):
                r.proponent(m, model)
            elif r.opponent(m, model):
                return "terminated"
    except _Stop as s:
        return s.outcome
    except SolverUnknown:
        return "exhausted"
    return "incomplete"


def replay_outcome(left, right, trace: Trace, model: dict, fuel: int = DEFAULT_FUEL) -> str:
    """Check a witness concretely.

    The surviving side must follow the moves tagged for it and terminate;
    the other side, driven by the same moves, must fail to produce them.
    Returns "confirmed", "rejected" or "unknown" (fuel ran out).
    """
    survivor = trace.survivor
    if survivor not in ("left", "right"):
        return "rejected"
    steps = [s for s in trace.steps if s.side in ("both", survivor)]
    model = _total_model(trace, model)
    src = left if survivor == "left" else right
    other = right if survivor == "left" else left
    first = _drive(src, steps, model, fuel)
    if first == "exhausted":
        return "unknown"
    if first != "terminated":
        return "rejected"
    second = _drive(other, steps, model, fuel)
    if second == "exhausted":
        return "unknown"
    if second == "terminated":
        return "rejected"
    return "confirmed"


def _total_model(trace: Trace, model: dict) -> dict:
    out = dict(model or {})
    for st in trace.steps:
        m = st.move
        val = getattr(m, "value", None) if not isinstance(m, (PropApp, PropRet)) else _pat(m)
        if val is None:
            continue
        for t in iter_subterms(val) if not isinstance(val, FnHole) else ():
            if isinstance(t, Sym) and t.name not in out:
                out[t.name] = False if t.ty == BOOL else 0
    return out


def replay(pair, witness: Trace, model: dict, fuel: int = DEFAULT_FUEL) -> bool:
    left, right = (pair.left, pair.right) if hasattr(pair, "left") else pair
    return replay_outcome(left, right, witness, model, fuel) == "confirmed"


# --------------------------------------------------------------------------
# Public API


def check_equiv(pair, opts: Options = Options(), solver: Optional[Solver] = None, log=None):
    """Decide (up to the bound) whether the two programs of ``pair`` are
    contextually equivalent.  ``pair`` is a ``ProgramPair`` or a tuple of
    two typed expressions."""
    left, right = (pair.left, pair.right) if hasattr(pair, "left") else pair
    eng = Engine(left, right, opts, solver, log)
    verdict = eng.run()
    return verdict


def explore_stats(verdict) -> dict:
    return verdict.stats.as_dict() if verdict.stats is not None else {}
