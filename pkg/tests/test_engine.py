from dataclasses import replace

import pytest

from eqcheck import Options, check_equiv, explore_stats, parse_program_pair, replay
from eqcheck.engine import Trace, replay_outcome
from eqcheck.lts import PropRet
from eqcheck.syntax import const

from generators import CORPUS, load_pair


def check(text, **kw):
    return check_equiv(parse_program_pair(text), Options(**kw))


def test_identical_programs():
    v = check("fun () -> 0 ||| fun () -> 0")
    assert v.kind == "eq"
    assert v.nodes_explored >= 1


def test_swap_is_equivalent():
    assert check_equiv(load_pair(CORPUS / "eq" / "swap.prog")).kind == "eq"


def test_constant_mismatch_witness():
    p = parse_program_pair("fun () -> 0 ||| fun () -> 1")
    v = check_equiv(p)
    assert v.kind == "ineq"
    assert v.witness.lines() == ["_ret(_fn#0)", "app(g#0, ())", "_ret(0)", "TERM"]
    assert v.witness.survivor == "left"
    assert [s.side for s in v.witness.steps] == ["both", "both", "left", "left"]
    assert replay(p, v.witness, v.model)


def test_tampered_witness_fails_replay():
    p = parse_program_pair("fun () -> 0 ||| fun () -> 1")
    v = check_equiv(p)
    steps = list(v.witness.steps)
    steps[2] = replace(steps[2], move=PropRet(const(5)))
    assert not replay(p, Trace(tuple(steps), v.witness.survivor), v.model)
    # claiming the other side survives is also rejected
    assert not replay(p, Trace(v.witness.steps, "right"), v.model)


def test_symbolic_witness_has_model():
    p = load_pair(CORPUS / "ineq" / "threshold.prog")
    v = check_equiv(p)
    assert v.kind == "ineq" and v.model
    assert replay(p, v.witness, v.model)


def test_replay_outcome_reports_fuel():
    good = check_equiv(parse_program_pair("fun () -> 0 ||| fun () -> 1")).witness
    p = parse_program_pair("let rec f x = f x in fun () -> f 0 ||| fun () -> 1")
    assert replay_outcome(p.left, p.right, good, {}, fuel=50) == "unknown"
    q = parse_program_pair("fun () -> 0 ||| fun () -> 0")
    assert replay_outcome(q.left, q.right, good, {}) == "rejected"


def test_well_bracketed_state_is_out_of_reach():
    v = check_equiv(load_pair(CORPUS / "limitations" / "well_bracketed.prog"))
    assert v.kind == "inconclusive"


def test_internal_loop_is_out_of_reach():
    v = check_equiv(load_pair(CORPUS / "limitations" / "internal_loop.prog"))
    assert v.kind == "inconclusive" and "FuelExhausted" in v.reasons


def test_separation_example_is_small():
    v = check_equiv(load_pair(CORPUS / "eq" / "ex_sep.prog"))
    assert v.kind == "eq" and explore_stats(v)["nodes"] <= 20


def test_straight_line_inequivalence_needs_no_memo():
    v = check_equiv(load_pair(CORPUS / "ineq" / "const_mismatch.prog"))
    assert v.kind == "ineq" and explore_stats(v)["memo_hits"] == 0


def test_higher_order_example_needs_no_solver():
    v = check_equiv(load_pair(CORPUS / "eq" / "meyer_sieber_ref.prog"))
    assert v.kind == "eq" and explore_stats(v)["solver_queries"] == 0


def test_stats_fields():
    st = explore_stats(check("fun () -> 0 ||| fun () -> 0"))
    for k in ("nodes", "memo_hits", "solver_queries", "max_depth", "sep_splits",
              "reentry_skips", "inv_applied", "elapsed"):
        assert k in st


def test_timeout_is_bound_exhaustion():
    v = check_equiv(load_pair(CORPUS / "eq" / "swap.prog"), Options(timeout=1e-9))
    assert v.kind == "inconclusive" and v.reasons == {"BoundExhausted"}


def test_bound_zero_is_inconclusive():
    v = check("fun f -> f (); 0 ||| fun f -> f (); 0", bound=0)
    assert v.kind == "inconclusive" and "BoundExhausted" in v.reasons


def test_dead_solver_degrades_to_inconclusive():
    v = check_equiv(load_pair(CORPUS / "eq" / "swap.prog"), Options(solver_cmd="false"))
    assert v.kind == "inconclusive" and "SolverUnknown" in v.reasons


def test_option_implications():
    o = Options(annotations=False).effective()
    assert not o.reentry
    o = Options(all_upto=False).effective()
    assert not (o.separation or o.annotations or o.reentry or o.gc)
    assert Options().effective() == Options()


def test_no_annot_disables_reentry_in_stats():
    p = load_pair(CORPUS / "eq" / "reentry.prog")
    assert explore_stats(check_equiv(p))["reentry_skips"] > 0
    assert explore_stats(check_equiv(p, Options(annotations=False)))["reentry_skips"] == 0


def test_explain_lines():
    lines = []
    check_equiv(load_pair(CORPUS / "eq" / "ex_sep.prog"), Options(explain=True), log=lines.append)
    assert any(l.startswith("SEP split") for l in lines)
    assert any(l.startswith("MEMO hit") for l in lines)


def _fingerprint(v):
    st = {k: x for k, x in explore_stats(v).items() if k != "elapsed"}
    extra = (tuple(v.witness.lines()), tuple(sorted(v.model.items()))) if v.kind == "ineq" else \
        tuple(sorted(getattr(v, "reasons", ())))
    return v.kind, extra, tuple(sorted(st.items()))


@pytest.mark.parametrize("name", ["eq/cell4", "ineq/threshold", "ineq/counter_leak", "eq/location_passing"])
def test_deterministic(name):
    p = load_pair(CORPUS / f"{name}.prog")
    bound = p.header.get("bound", 6)
    a = check_equiv(p, Options(bound=bound))
    b = check_equiv(p, Options(bound=bound))
    assert _fingerprint(a) == _fingerprint(b)


def test_higher_bound_keeps_verdicts():
    for name in ("eq/swap", "eq/ex_sep", "ineq/call_count"):
        p = load_pair(CORPUS / f"{name}.prog")
        kinds = {check_equiv(p, Options(bound=b)).kind for b in (6, 9)}
        assert len(kinds) == 1
