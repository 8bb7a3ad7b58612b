import random
from collections import defaultdict
from dataclasses import replace

import pytest

from eqcheck import Options, check_equiv, parse_program_pair
from eqcheck.constraints import SymbolicEnv
from eqcheck.lts import Config, wellformed
from eqcheck.parser import parse_annotation
from eqcheck.syntax import (
    INT, UNIT, AbsName, Annotation, Deref, Fresh, Lam, Op, TArrow, Var,
    const, rename_locations,
)
from eqcheck.upto import (
    CallEntry, Node, apply_invariant, blocks, canonical_key, collapse_taus, dedup, gc,
    gc_node, separate, weaken,
)

from generators import RecordingEngine, explored_nodes, load_pair, permute_node, CORPUS

TOP = SymbolicEnv()
F = TArrow(UNIT, INT)


def reader(loc):
    return Lam("u", Deref(loc), ty=F)


@pytest.fixture(scope="module")
def nodes():
    return explored_nodes(limit_per_file=200)


# -- garbage collection -------------------------------------------------------


def test_gc_drops_unreachable_location_and_name():
    a = AbsName(0, TArrow(INT, INT))
    c = Config(names=frozenset({a}), gamma=((0, Lam("x", const(0), ty=F)),), store={"l#1": const(5)})
    out = gc(c)
    assert out.names == frozenset() and out.store == {}
    assert out.gamma == c.gamma


def test_gc_keeps_reachable_location():
    c = Config(gamma=((0, reader("l#1")),), store={"l#1": const(5)})
    assert gc(c) is c


def test_gc_follows_store_chains():
    c = Config(gamma=((0, reader("l#1")),),
               store={"l#1": reader("m#2"), "m#2": const(1), "n#3": const(2)})
    assert set(gc(c).store) == {"l#1", "m#2"}


def test_gc_idempotent_on_explored_nodes(nodes):
    for n in nodes:
        for _, c in n.sides():
            once = gc(c)
            twice = gc(once)
            assert twice.same(once) and twice.names == once.names
            if wellformed(c):
                assert wellformed(once)


# -- canonical keys -------------------------------------------------------------


def two_cell_node(v1=0, v2=7):
    left = Config(gamma=((0, reader("a#1")), (1, reader("b#2"))),
                  store={"a#1": const(v1), "b#2": const(v2)})
    right = Config(gamma=((0, Lam("u", const(v1), ty=F)), (1, Lam("u", const(v2), ty=F))))
    return Node(TOP, left, right, 6)


def test_key_invariant_under_index_swap():
    n = two_cell_node()
    swap = {0: 1, 1: 0}

    def sw(c):
        return c.replace(gamma=tuple(sorted((swap[i], v) for i, v in c.gamma)))

    assert canonical_key(n) == canonical_key(n.with_sides(sw(n.left), sw(n.right)))


def test_key_invariant_under_location_renaming():
    n = two_cell_node()
    m = {"a#1": "a#40", "b#2": "b#3"}
    left = n.left.replace(gamma=tuple((i, rename_locations(v, m)) for i, v in n.left.gamma),
                          store={m[l]: v for l, v in n.left.store.items()})
    assert canonical_key(n) == canonical_key(n.with_sides(left, n.right))


def test_key_sees_store_contents():
    assert canonical_key(two_cell_node(0)) != canonical_key(two_cell_node(1))


def test_key_sees_bound_state_of_flagged_calls():
    n = two_cell_node()
    entry = CallEntry(0, (parse_annotation("{}"), None))
    assert canonical_key(n) != canonical_key(replace(n, calls=(entry,)))


def test_key_permutation_invariance_on_explored_nodes(nodes):
    rng = random.Random(2024)
    for n in nodes:
        n = gc_node(n)  # keys are taken after collection
        for _ in range(5):
            assert canonical_key(permute_node(n, rng)) == canonical_key(n)


def test_revisited_state_shares_a_key():
    p = load_pair(CORPUS / "eq" / "reentry.prog")
    eng = RecordingEngine(p.left, p.right, Options())
    eng.run()
    depths = defaultdict(set)
    for n in eng.seen:
        depths[canonical_key(n)].add(len(n.trace))
    assert any(len(d) > 1 for d in depths.values())


# -- separation -----------------------------------------------------------------


def first_node_with_stack(name):
    p = load_pair(CORPUS / "eq" / f"{name}.prog")
    eng = RecordingEngine(p.left, p.right, Options())
    eng.run()
    return next(n for n in eng.seen if n.live_live and n.left.stack)


def test_meyer_sieber_call_block_has_no_knowledge():
    n = gc_node(first_node_with_stack("meyer_sieber_ref"))
    focused, sibs = separate(n)
    assert focused.left.gamma == () and focused.right.gamma == ()
    assert len(sibs) == 1 and sibs[0].left.stack == () and sibs[0].detached
    # weakening the index and collecting reproduces the focused block
    w = gc_node(weaken(n, {i for i, _ in n.left.gamma}))
    assert w.left.same(focused.left) and w.right.same(focused.right)


def test_shared_location_prevents_split():
    left = Config(gamma=((0, reader("a#1")), (1, Lam("u", Deref("a#1"), ty=F))), store={"a#1": const(0)})
    right = Config(gamma=((0, Lam("u", const(0), ty=F)), (1, Lam("u", const(0), ty=F))))
    n = Node(TOP, left, right, 6)
    focus, others = blocks(n)
    assert focus is None and others == [[0, 1]]
    assert separate(n) == (None, [n])


def test_disjoint_footprints_split():
    focused, sibs = separate(two_cell_node())
    assert focused is None and [s.left.indices() for s in sibs] == [[0], [1]]
    assert [set(s.left.store) for s in sibs] == [{"a#1"}, {"b#2"}]


def test_separation_blocks_reconstruct(nodes):
    split = 0
    for n in nodes:
        if not n.live_live:
            continue
        n = gc_node(n)
        focused, sibs = separate(n)
        pieces = ([focused] if focused is not None else []) + list(sibs)
        if len(pieces) < 2:
            continue
        split += 1
        for side in ("left", "right"):
            whole = getattr(n, side)
            parts = [getattr(p, side) for p in pieces]
            gam = [g for c in parts for g in c.gamma]
            assert sorted(gam) == sorted(whole.gamma)
            locs = [l for c in parts for l in c.store]
            assert len(locs) == len(set(locs))  # disjoint stores
            merged = {l: v for c in parts for l, v in c.store.items()}
            assert merged == gc(whole).store
            stacks = [c.stack for c in parts if c.stack]
            assert stacks in ([], [whole.stack])
    assert split > 0


def test_bohr_birkedal_uses_separation():
    p = load_pair(CORPUS / "eq" / "bohr_birkedal.prog")
    v = check_equiv(p, Options())
    assert v.kind == "eq" and v.stats.sep_splits > 0
    assert check_equiv(p, Options(separation=False)).kind == "inconclusive"


# -- weakening and duplicates ----------------------------------------------------


def test_weaken_nothing_is_identity():
    n = two_cell_node()
    assert weaken(n, set()) is n


def test_weaken_keeps_domains_equal():
    n = weaken(two_cell_node(), {1})
    assert n.left.indices() == n.right.indices() == [0]


def test_dedup_merges_repeated_disclosure():
    lam = reader("a#1")
    left = Config(gamma=((0, lam), (1, lam)), store={"a#1": const(0)})
    right = Config(gamma=((0, Lam("u", const(0), ty=F)), (1, Lam("u", const(0), ty=F))))
    n = dedup(Node(TOP, left, right, 6, calls=(CallEntry(1),)))
    assert n.left.indices() == [0] and n.calls[0].index == 0


# -- state invariants --------------------------------------------------------------


def even_node(value):
    annot = Annotation(("w",), (("x#1", Var("w")),),
                       Op("=", (Op("mod", (Var("w"), const(2))), const(0))))
    lam = Lam("u", Deref("x#1"), annot=annot, ty=F)
    left = Config(gamma=((0, lam),), store={"x#1": const(value)})
    right = Config(gamma=((0, Lam("u", const(0), ty=F)),))
    return Node(TOP, left, right, 6), annot


def test_invariant_abstracts_location(solver):
    n, annot = even_node(0)
    fresh = Fresh()
    res = apply_invariant(n, (annot, None), fresh, solver)
    assert res.node is not None and res.node.approx
    [k] = res.fresh_syms
    assert res.node.left.store["x#1"] == k
    assert res.node.env.atoms[-1] == Op("=", (Op("mod", (k, const(2))), const(0)))
    assert res.node.env.atoms[:len(n.env.atoms)] == n.env.atoms


def test_invariant_violation_is_reported(solver):
    n, annot = even_node(1)
    res = apply_invariant(n, (annot, None), Fresh(), solver)
    assert res.node is None and "does not hold" in res.reason


def test_empty_annotation_changes_nothing(solver):
    n, _ = even_node(0)
    res = apply_invariant(n, (parse_annotation("{}"), None), Fresh(), solver)
    assert res.node is n


def test_joint_invariant_shares_variables(solver):
    a_left = parse_annotation("{p, v | y as v | (p mod 2 = 0) || (v = 0)}")
    a_right = parse_annotation("{p, v | q as p; z as v | true}")
    rename = lambda a, m: Annotation(a.sym_names, tuple((m[l], pat) for l, pat in a.loc_patterns), a.formula)
    a_left, a_right = rename(a_left, {"y": "y#1"}), rename(a_right, {"q": "q#2", "z": "z#3"})
    left = Config(store={"y#1": const(5)})
    right = Config(store={"q#2": const(4), "z#3": const(5)})
    res = apply_invariant(Node(TOP, left, right, 6), (a_left, a_right), Fresh(), solver)
    assert res.node is not None
    p, v = res.fresh_syms
    assert res.node.left.store["y#1"] == v and res.node.right.store["z#3"] == v
    assert res.node.right.store["q#2"] == p


def test_cell4_needs_its_annotations():
    p = load_pair(CORPUS / "eq" / "cell4.prog")
    v = check_equiv(p, Options())
    assert v.kind == "eq" and v.stats.inv_applied > 0
    assert check_equiv(p, Options(annotations=False)).kind == "inconclusive"


# -- re-entry --------------------------------------------------------------------------


def test_reentry_skip_on_flagged_function():
    p = load_pair(CORPUS / "eq" / "reentry.prog")
    v = check_equiv(p, Options())
    assert v.kind == "eq" and v.stats.reentry_skips > 0
    assert check_equiv(p, Options(reentry=False)).kind == "inconclusive"


def test_unflagged_function_is_never_skipped():
    p = parse_program_pair("ref x = 0 in fun f -> f (); !x ||| fun f -> f (); 0")
    v = check_equiv(p, Options())
    assert v.stats.reentry_skips == 0 and v.kind == "inconclusive"


def test_state_changing_flagged_function_is_caught():
    p = parse_program_pair("ref x = 0 in fun f {} -> x := !x + 1; f (); !x > 0 ||| fun f -> f (); true")
    v = check_equiv(p, Options())
    assert v.kind == "inconclusive" and "ReentryViolated" in v.reasons
    assert v.stats.reentry_skips > 0 and v.stats.reentry_violations > 0


# -- internal steps --------------------------------------------------------------------------


def test_internal_steps_are_not_nodes():
    long = " + ".join(["1"] * 50)
    a = check_equiv(parse_program_pair(f"fun () -> {long} ||| fun () -> 50"), Options())
    b = check_equiv(parse_program_pair("fun () -> 50 ||| fun () -> 50"), Options())
    assert a.kind == b.kind == "eq"
    assert a.stats.nodes == b.stats.nodes
    assert collapse_taus([1, 2]) == [1, 2]


def test_conjunction_node_count():
    v = check_equiv(load_pair(CORPUS / "eq" / "conjunction.prog"), Options())
    assert v.kind == "eq" and v.stats.nodes < 40
