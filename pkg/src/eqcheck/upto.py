"""Up-to techniques as rewrites on configuration pairs.

Every function here is pure: it takes a ``Node`` (or a configuration)
and returns a new one.  The engine decides where each rewrite applies.
"""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, replace
from typing import Optional

from .constraints import conj, eliminate
from .lts import BOTTOM, Config
from .syntax import (
    AbsName, App, Assign, Bot, Const, Deref, Hole, If, Lam,
    LetTuple, NewRef, Op, Sym, Tuple, Var, abstract_names, free_locations,
    map_leaves, pretty_annotation, subst_many,
)


# --------------------------------------------------------------------------
# Pair nodes


@dataclass(frozen=True)
class CallEntry:
    """An opponent call in progress (pushed at app, popped at ret)."""

    index: int
    annots: tuple = (None, None)  # annotation of the function on each side
    lam_keys: tuple = ()  # identities of the annotated lambdas
    snapshot: tuple = (None, None)
    grew: bool = False

    @property
    def flagged(self):
        return any(a is not None for a in self.annots)

    @property
    def has_invariant(self):
        return any(a is not None and not a.is_empty for a in self.annots)


@dataclass(frozen=True)
class Node:
    env: object
    left: object
    right: object
    bound: int
    calls: tuple = ()
    trace: tuple = ()
    approx: bool = False
    detached: bool = False  # a sibling split off while calls were pending

    @property
    def live_live(self):
        return self.left is not BOTTOM and self.right is not BOTTOM

    def sides(self):
        return [(k, c) for k, c in (("L", self.left), ("R", self.right)) if c is not BOTTOM]

    def with_sides(self, left, right, **kw):
        return replace(self, left=left, right=right, **kw)


# --------------------------------------------------------------------------
# Reachability and garbage collection


def location_closure(store: dict, seeds) -> set:
    seen = set()
    todo = [l for l in seeds if l in store]
    while todo:
        l = todo.pop()
        if l in seen:
            continue
        seen.add(l)
        for m in free_locations(store[l]):
            if m not in seen and m in store:
                todo.append(m)
    return seen


def roots(c: Config) -> list:
    out = [v for _, v in c.gamma] + list(c.stack)
    if c.expr is not None:
        out.append(c.expr)
    return out


def gc(c):
    """Drop unreachable store entries and unused abstract names."""
    if c is BOTTOM:
        return c
    rs = roots(c)
    seeds = set()
    for r in rs:
        seeds |= free_locations(r)
    live = location_closure(c.store, seeds)
    store = {l: v for l, v in c.store.items() if l in live}
    used = abstract_names(rs) | abstract_names(store)
    names = frozenset(a for a in c.names if a.name in used)
    if len(store) == len(c.store) and names == c.names:
        return c
    return c.replace(store=store, names=names)


def gc_node(n: Node) -> Node:
    return n.with_sides(gc(n.left), gc(n.right))


# --------------------------------------------------------------------------
# Knowledge-environment rewrites


def weaken(n: Node, drop) -> Node:
    """Forget the indices in ``drop`` on both sides."""
    drop = set(drop)
    if not drop:
        return n

    def cut(c):
        if c is BOTTOM:
            return c
        return c.replace(gamma=tuple((i, v) for i, v in c.gamma if i not in drop))

    return n.with_sides(cut(n.left), cut(n.right))


def duplicates(n: Node) -> dict:
    """Indices whose related values repeat an earlier index: ``{j: i}``."""
    first = {}
    dup = {}
    lm = n.left.gamma_map if n.left is not BOTTOM else {}
    rm = n.right.gamma_map if n.right is not BOTTOM else {}
    for i in sorted(set(lm) | set(rm)):
        key = (lm.get(i), rm.get(i))
        if key in first:
            dup[i] = first[key]
        else:
            first[key] = i
    return dup


def dedup(n: Node) -> Node:
    dup = duplicates(n)
    if not dup:
        return n
    n = weaken(n, dup)
    calls = tuple(replace(c, index=dup.get(c.index, c.index)) for c in n.calls)
    return replace(n, calls=calls)


# --------------------------------------------------------------------------
# Separation


def footprint(c: Config, e) -> set:
    return location_closure(c.store, free_locations(e))


def stack_footprint(c: Config) -> set:
    seeds = set()
    for k in c.stack:
        seeds |= free_locations(k)
    if c.expr is not None:
        seeds |= free_locations(c.expr)
    return location_closure(c.store, seeds)


def blocks(n: Node):
    """Partition the shared indices into footprint-connected components.

    Returns ``(focus, others)``: ``focus`` is the set of indices tied to
    the stack (``None`` when both stacks are empty) and ``others`` the
    remaining components, each a sorted list.
    """
    sides = [c for _, c in n.sides()]
    idx = sorted(set().union(*(set(c.indices()) for c in sides)))
    parent = {i: i for i in idx}
    parent["stack"] = "stack"

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    has_stack = any(c.stack or c.expr is not None for c in sides)
    for c in sides:
        owner = {}
        if has_stack:
            for l in stack_footprint(c):
                owner[l] = "stack"
        for i, v in c.gamma:
            for l in footprint(c, v):
                if l in owner:
                    union(owner[l], i)
                else:
                    owner[l] = i
    groups = {}
    for i in idx:
        groups.setdefault(find(i), []).append(i)
    focus = None
    if has_stack:
        focus = sorted(groups.pop(find("stack"), []))
    others = sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])
    return focus, others


def restrict(c, keep_idx, with_stack: bool):
    if c is BOTTOM:
        return c
    gamma = tuple((i, v) for i, v in c.gamma if i in keep_idx)
    stack = c.stack if with_stack else ()
    expr = c.expr if with_stack else None
    return gc(c.replace(gamma=gamma, stack=stack, expr=expr))


def separate(n: Node):
    """Split a node into independent obligations.

    Returns ``(focused, siblings)``.  ``focused`` keeps the stack (and the
    calls in progress) together with every index sharing store with it;
    it is ``None`` when both stacks are empty.  No split gives
    ``(n, [])`` or ``(None, [n])``.
    """
    focus, others = blocks(n)
    pieces = (1 if focus is not None else 0) + len(others)
    if pieces <= 1:
        return (n, []) if focus is not None else (None, [n])
    focused = None
    if focus is not None:
        keep = set(focus)
        focused = n.with_sides(restrict(n.left, keep, True), restrict(n.right, keep, True))
    sibs = []
    for g in others:
        keep = set(g)
        sibs.append(n.with_sides(
            restrict(n.left, keep, False), restrict(n.right, keep, False),
            calls=(), detached=n.detached or focus is not None,
        ))
    return focused, sibs


def drop_unreachable_blocks(n: Node) -> Node:
    """With one side failed, knowledge unrelated to the stack cannot help
    the live side terminate; forget it."""
    focus, others = blocks(n)
    if focus is None or not others:
        return n
    keep = set(focus)
    return n.with_sides(restrict(n.left, keep, True), restrict(n.right, keep, True))


# --------------------------------------------------------------------------
# Canonical keys


class _Renamer:
    def __init__(self):
        self.loc = {"L": {}, "R": {}}
        self.alpha = {}
        self.kappa = {}
        self.idx = {}

    def name(self, table, key):
        if key not in table:
            table[key] = len(table)
        return table[key]


def _ser(e, r: Optional[_Renamer], side: str, out: list):
    """Serialise ``e`` into ``out``; ``r=None`` erases names."""
    if isinstance(e, Const):
        out.append(f"c{e.value!r}")
    elif isinstance(e, Var):
        out.append(f"v{e.name}")
    elif isinstance(e, Sym):
        out.append("k" if r is None else f"k{r.name(r.kappa, e.name)}")
        out.append(e.ty.name[0])
    elif isinstance(e, AbsName):
        out.append("a" if r is None else f"a{r.name(r.alpha, e.name)}")
        out.append(f":{e.ty}")
    elif isinstance(e, Lam):
        out.append(f"L{e.param},{e.self_name},{e.ty},")
        if e.annot is not None:
            out.append("{")
            for l, p in e.annot.loc_patterns:
                _loc(l, r, side, out)
                _ser(p, r, side, out)
            _ser(e.annot.formula, r, side, out)
            out.append(",".join(e.annot.sym_names) + "}")
        _ser(e.body, r, side, out)
        out.append(")")
    elif isinstance(e, (Deref, Assign)):
        out.append("D" if isinstance(e, Deref) else "S")
        _loc(e.loc, r, side, out)
        if isinstance(e, Assign):
            _ser(e.rhs, r, side, out)
    elif isinstance(e, NewRef):
        out.append(f"N{e.loc},")
        _ser(e.init, r, side, out)
        _ser(e.body, r, side, out)
        out.append(")")
    elif isinstance(e, LetTuple):
        out.append("P" + ",".join(e.names) + ",")
        _ser(e.rhs, r, side, out)
        _ser(e.body, r, side, out)
        out.append(")")
    elif isinstance(e, (Tuple, Op, App, If)):
        tag = {Tuple: "T", App: "A", If: "I"}.get(type(e), None) or f"O{e.op}"
        out.append(tag + "(")
        kids = e.items if isinstance(e, Tuple) else e.args if isinstance(e, Op) else (
            (e.fn, e.arg) if isinstance(e, App) else (e.cond, e.then, e.els))
        for k in kids:
            _ser(k, r, side, out)
            out.append(",")
        out.append(")")
    elif isinstance(e, Bot):
        out.append("B")
    elif isinstance(e, Hole):
        out.append("H")
    else:
        raise ValueError(f"cannot serialise {e!r}")


def _loc(l, r, side, out):
    if "#" not in l:  # bound by an enclosing ref
        out.append(f"@{l}")
    elif r is None:
        out.append("@")
    else:
        out.append(f"@{r.name(r.loc[side], l)}")


def ser(e, r=None, side="L") -> str:
    out = []
    _ser(e, r, side, out)
    return "".join(out)


def _gamma_groups(n: Node):
    lm = n.left.gamma_map if n.left is not BOTTOM else {}
    rm = n.right.gamma_map if n.right is not BOTTOM else {}
    idx = sorted(set(lm) | set(rm))
    shapes = {}
    for i in idx:
        s = (ser(lm[i]) if i in lm else "-") + "|" + (ser(rm[i]) if i in rm else "-")
        shapes.setdefault(s, []).append(i)
    return [shapes[s] for s in sorted(shapes)]


def _key_for_order(n: Node, order, with_calls=True) -> str:
    r = _Renamer()
    out = ["LL" if n.live_live else ("L_" if n.right is BOTTOM else "_R"), "|"]
    sides = n.sides()
    for i in order:
        r.name(r.idx, i)
        for side, c in sides:
            v = c.gamma_map.get(i)
            if v is None:
                out.append("-")
            else:
                _ser(v, r, side, out)
            out.append(";")
    out.append("|")
    for side, c in sides:
        for k in c.stack:
            _ser(k, r, side, out)
            out.append(";")
        if c.expr is not None:
            out.append("E")
            _ser(c.expr, r, side, out)
        out.append("|")
    for side, c in sides:
        # Store entries in discovery order; serialising may discover more.
        table = r.loc[side]
        done = 0
        while True:
            pending = [l for l, k in sorted(table.items(), key=lambda x: x[1]) if k >= done]
            if not pending:
                break
            for l in pending:
                done = max(done, table[l] + 1)
                out.append(f"{table[l]}=")
                if l in c.store:
                    _ser(c.store[l], r, side, out)
                out.append(";")
        # Unreachable cells (only present when gc is off): order by content.
        rest = sorted((l for l in c.store if l not in table), key=lambda l: (ser(c.store[l]), l))
        for l in rest:
            out.append(f"{r.name(table, l)}=")
            _ser(c.store[l], r, side, out)
            out.append(";")
        out.append("|")
    if with_calls:
        # Only calls on flagged functions influence what may be skipped.
        active = sorted(str(r.idx.get(ce.index, "-")) for ce in n.calls if ce.flagged)
        out.append(",".join(active) + "|")
    atoms = eliminate(n.env.atoms, set(r.kappa))
    atoms = sorted(atoms, key=ser)
    texts = []
    for a in atoms:
        texts.append(ser(a, r, "L"))
    out.append("&".join(sorted(texts)))
    return "".join(out)


MAX_TIE_PERMUTATIONS = 24


def canonical_key(n: Node, with_calls=True) -> str:
    """A string equal for nodes related by renaming locations (per side),
    abstract names, indices and symbolic constants."""
    groups = _gamma_groups(n)
    tied = [g for g in groups if len(g) > 1]
    if not tied or math.prod(math.factorial(len(g)) for g in tied) > MAX_TIE_PERMUTATIONS:
        return _key_for_order(n, [i for g in groups for i in g], with_calls)
    best = None
    options = [itertools.permutations(g) if len(g) > 1 else [tuple(g)] for g in groups]
    for combo in itertools.product(*options):
        k = _key_for_order(n, [i for g in combo for i in g], with_calls)
        if best is None or k < best:
            best = k
    return best


def key_hash(key: str) -> str:
    return hashlib.sha1(key.encode()).hexdigest()[:12]


# --------------------------------------------------------------------------
# State invariants


class InvariantFailure(Exception):
    pass


def _match(pat, val, binds: dict, eqs: list):
    if isinstance(pat, Var):
        if not isinstance(val, (Const, Sym)):
            raise InvariantFailure(f"{pat.name} must match a first-order value")
        if pat.name in binds and binds[pat.name] != val:
            eqs.append(Op("=", (binds[pat.name], val)))
        else:
            binds.setdefault(pat.name, val)
        return
    if isinstance(pat, Tuple):
        if not isinstance(val, Tuple) or len(val.items) != len(pat.items):
            raise InvariantFailure("tuple pattern does not match stored value")
        for p, v in zip(pat.items, val.items):
            _match(p, v, binds, eqs)
        return
    if isinstance(pat, Const):
        if pat != val:
            raise InvariantFailure(f"constant {pat.value!r} does not match stored value")
        return
    raise InvariantFailure("unsupported pattern")


def _fill(pat, table):
    if isinstance(pat, Var):
        return table[pat.name]
    if isinstance(pat, Tuple):
        return Tuple(tuple(_fill(p, table) for p in pat.items))
    return pat


@dataclass(frozen=True)
class InvariantResult:
    node: Optional[Node]
    fresh_syms: tuple = ()
    reason: str = ""


def apply_invariant(n: Node, annots, fresh, solver) -> InvariantResult:
    """Abstract annotated locations by fresh symbolic constants.

    Each side's annotated locations are matched against their patterns;
    the instantiated formulas must be entailed by the environment; then
    the contents are replaced by the patterns over fresh constants and
    the formulas over those constants are added to the environment.
    Invariant variables are shared between the sides by position.
    """
    active = [(side, a) for side, a in zip(("L", "R"), annots)
              if a is not None and not a.is_empty and (n.left if side == "L" else n.right) is not BOTTOM]
    if not active:
        return InvariantResult(n)
    arity = {len(a.sym_names) for _, a in active}
    if len(arity) != 1:
        return InvariantResult(None, reason="annotations disagree on the number of variables")
    npos = arity.pop()
    by_pos = [None] * npos
    eqs = []
    try:
        for side, a in active:
            c = n.left if side == "L" else n.right
            binds = {}
            for loc, pat in a.loc_patterns:
                if loc not in c.store:
                    raise InvariantFailure(f"location {loc.split('#')[0]} is not allocated")
                _match(pat, c.store[loc], binds, eqs)
            for k, name in enumerate(a.sym_names):
                if name in binds:
                    if by_pos[k] is None:
                        by_pos[k] = binds[name]
                    elif by_pos[k] != binds[name]:
                        eqs.append(Op("=", (by_pos[k], binds[name])))
    except InvariantFailure as exc:
        return InvariantResult(None, reason=str(exc))
    if any(v is None for v in by_pos):
        return InvariantResult(None, reason="an invariant variable is not bound by any location")
    inst = []
    for _, a in active:
        inst.append(subst_many(a.formula, dict(zip(a.sym_names, by_pos))))
    verdict = solver.entails(n.env, conj(inst + eqs))
    if verdict is None:
        return InvariantResult(None, reason="solver could not decide the invariant")
    if not verdict:
        return InvariantResult(None, reason="invariant does not hold")
    new = [fresh.sym(v.ty) for v in by_pos]
    env = n.env.declare(*new)
    sides = {"L": n.left, "R": n.right}
    for side, a in active:
        table = dict(zip(a.sym_names, new))
        c = sides[side]
        store = dict(c.store)
        for loc, pat in a.loc_patterns:
            store[loc] = _fill(pat, table)
        sides[side] = c.replace(store=store)
        env = env.add(subst_many(a.formula, table))
    node = replace(n, env=env, left=sides["L"], right=sides["R"], approx=True)
    return InvariantResult(node, tuple(new))


# --------------------------------------------------------------------------
# Re-entry


def store_signature(c, placeholders: dict):
    """Store contents with abstraction constants replaced by their
    invariant position, for comparing a call's entry and exit."""
    if c is BOTTOM:
        return None

    def leaf(t):
        if isinstance(t, Sym) and t.name in placeholders:
            return Sym(-1 - placeholders[t.name], t.ty)
        return t

    return {l: map_leaves(v, leaf) for l, v in c.store.items()}


def signatures_agree(before: dict, after: dict) -> bool:
    if before is None or after is None:
        return True
    common = set(before) & set(after)
    return all(before[l] == after[l] for l in common)


def lam_key(v):
    if isinstance(v, Lam) and v.annot is not None:
        return (v.pos, pretty_annotation(v.annot))
    return None


def collapse_taus(branches):
    """Only interaction points enter the memo table: internal steps are
    chased by ``reduce_to_interaction`` and never become nodes."""
    return [b for b in branches]
