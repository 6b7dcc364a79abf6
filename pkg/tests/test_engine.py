import itertools
import random
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from normrules.engine import (
    EngineConfig, MacroStep, apply_action, check_prv, holds, ignored, macro_step, match_events, run,
)
from normrules.errors import ArityWarning, IstarDisabled, NonGroundFact
from normrules.kernel import EventSet, Num, State, apply_subst, state_add
from normrules.parser import (
    parse_atom, parse_cformula, parse_condition, parse_program, render_atom, render_cformula,
)
from normrules.rules import ECA, Ignore, Prevent, RuleBase

from progen import generate, random_pick


def S(*facts):
    d = State()
    for f in facts:
        d = state_add(d, parse_cformula(f))
    return d


def E(*events):
    return EventSet.of(*(parse_atom(e) for e in events))


def P(text, **kw):
    return parse_program(text, **kw)


def rules_of(rb, kind):
    return [r for _, r in rb.of_kind(kind)]


def facts(delta):
    return [render_cformula(cf) for cf in delta.entries]


# -- holds ---------------------------------------------------------------------


def test_holds_conjunction_threads():
    assert holds(S("p(1)", "p(2)"), parse_condition("p(X) & X>1")) == [{"X": Num(2)}]


def test_holds_negation_as_failure():
    assert holds(S(), parse_condition("not(p(a))")) == [{}]
    assert holds(S("p(a)"), parse_condition("not(p(a))")) == []
    # no bindings leak out of a negation
    assert holds(S("q(1)"), parse_condition("not(p(X))")) == [{}]


def test_holds_time_binds_step():
    assert holds(S(), parse_condition("time(T)"), clock=3) == [{"T": Num(3)}]
    assert holds(S(), parse_condition("time(2)"), clock=3) == []


def test_holds_equality_binds_arithmetic():
    assert holds(S("c(4)"), parse_condition("c(X) & Y=X*2+1")) == [{"X": Num(4), "Y": Num(9)}]


def test_holds_builtin_eval():
    assert holds(S(), parse_condition("builtin(eval, 1/2+1/2, Y)")) == [{"Y": Num(1)}]


# -- actions -------------------------------------------------------------------


def test_add_fact():
    d, rb, _ = apply_action(S(), RuleBase(), P("rule(a, if true do add(p)).").entries[0][1].actions[0], {})
    assert facts(d) == ["p"]


def test_add_rule_and_delete_absent():
    rb0 = RuleBase()
    act = P("rule(a, on x if true do add(rule(r9, if p do add(q)))).").entries[0][1].actions[0]
    d, rb, _ = apply_action(S(), rb0, act, {}, istar=True)
    assert parse_atom("r9") in rb and d == S()
    act = P("rule(a, on x if true do del(rule(r9, _))).").entries[0][1].actions[0]
    assert apply_action(S(), rb0, act, {}, istar=True)[1] == rb0
    assert parse_atom("r9") not in apply_action(S(), rb, act, {}, istar=True)[1]


def test_rule_action_needs_istar():
    act = P("rule(a, on x if true do add(rule(r9, if p do add(q)))).").entries[0][1].actions[0]
    with pytest.raises(IstarDisabled):
        apply_action(S(), RuleBase(), act, {}, istar=False)


def test_nonground_add_is_error():
    act = P("rule(a, if true do add(p(X))).").entries[0][1].actions[0]
    with pytest.raises(NonGroundFact):
        apply_action(S(), RuleBase(), act, {})


def test_del_binds_for_later_actions():
    ((_, r),) = P("rule(a, if true do del(credit(ag1,C)), add(credit(ag1,C2):{C2=C-10})).")
    d, rb = S("credit(ag1,100)"), RuleBase()
    s = {}
    for a in r.actions:
        d, rb, s = apply_action(d, rb, a, s)
    assert facts(d) == ["credit(ag1,90)"]


# -- prevent / ignore ----------------------------------------------------------


def test_check_prv_examples():
    prv = rules_of(P("rule(p1, prevent q1 if true)."), Prevent)
    assert not check_prv(S(), S("q1"), prv)
    assert check_prv(S(), S("p", "r"), prv)
    assert check_prv(S(), S("q1"), [])


def test_check_prv_precondition_read_before():
    prv = rules_of(P("rule(p1, prevent q if open)."), Prevent)
    assert check_prv(S(), S("open", "q"), prv)
    assert not check_prv(S("open"), S("q"), prv)


def test_ignored_examples():
    one = rules_of(P("rule(i, ignore alpha1 if true)."), Ignore)
    both = rules_of(P("rule(i, ignore alpha1, alpha2 if true)."), Ignore)
    a1, a2 = parse_atom("alpha1"), parse_atom("alpha2")
    assert ignored(S(), (a1, a2), (a1, a2), one)
    assert not ignored(S(), (a1,), (a1,), both)
    assert not ignored(S(), (a1, a2), (a1, a2), [])


def test_ignored_needs_intersection_with_trigger():
    one = rules_of(P("rule(i, ignore alpha1 if true)."), Ignore)
    a1, a2 = parse_atom("alpha1"), parse_atom("alpha2")
    assert not ignored(S(), (a1, a2), (a2,), one)


def test_ignored_condition():
    r = rules_of(P("rule(i, ignore bid(X) if banned(X))."), Ignore)
    b = parse_atom("bid(a)")
    assert ignored(S("banned(a)"), (b,), (b,), r)
    assert not ignored(S("banned(b)"), (b,), (b,), r)


# -- if-rule selection and chaining ---------------------------------------------


def _step(rb):
    return MacroStep(rb, EngineConfig(), 0)


def test_select_rule_first_by_declaration():
    m = _step(P("rule(r1, if p do add(a)).\nrule(r2, if p do add(b))."))
    assert render_atom(m.select_rule(S("p"))[0]) == "r1"


def test_select_rule_fresh_substitution():
    m = _step(P("rule(r1, if p(X) do add(q(X)))."))
    rid, _, s, key = m.select_rule(S("p(1)", "p(2)"))
    m.registry.add(key)
    rid2, _, s2, _ = m.select_rule(S("p(1)", "p(2)"))
    assert (render_atom(rid2), s["X"], s2["X"]) == ("r1", Num(1), Num(2))


def test_select_rule_none():
    assert _step(RuleBase()).select_rule(S("p")) is None


def test_chain_if_examples():
    assert facts(_step(P("rule(r, if p do add(q)).")).chain_if(S("p"))) == ["p", "q"]
    m = _step(P("rule(r, if p do add(q)).\nrule(n, prevent q if true)."))
    assert facts(m.chain_if(S("p"))) == ["p"] and [render_atom(x) for x in m.prevented] == ["r"]
    m = _step(P("rule(a, if p do add(q)).\nrule(b, if q do add(r))."))
    assert facts(m.chain_if(S("p"))) == ["p", "q", "r"]


def test_chain_limit_is_a_step_error():
    rb = P("rule(grow, if n(X) & Y=X+1 do add(n(Y))).")
    d, _, rec = macro_step(S("n(0)"), E(), rb, EngineConfig(max_chain_iterations=50))
    assert rec.error.startswith("ChainLimitExceeded") and d == S("n(0)") and rec.state_after == S("n(0)")


def test_rule_action_sets():
    m = _step(RuleBase())
    assert m.apply_rule_action_sets(S("x"), []) == S("x")
    rb = P("rule(a, on go if true do add(p)).\nrule(b, on go if true do add(q)).\nrule(n, prevent q if true).")
    m = _step(rb)
    entries = [(rid, {}, r.actions) for rid, r in rb.of_kind(ECA)]
    assert facts(m.apply_rule_action_sets(S(), entries)) == ["p"]


# -- force and ECA -------------------------------------------------------------


def test_force_adds_events():
    rb = P("rule(f, force pay(ag1,10) on won(ag1,g) if true do []).")
    d, _, rec = macro_step(S(), E("won(ag1,g)"), rb)
    assert [render_atom(a) for a in rec.forced_events] == ["pay(ag1,10)"]


def test_forced_event_triggers_eca_same_step():
    rb = P("rule(f, force pay(A) on won(A) if true do []).\nrule(r, on pay(A) if true do add(paid(A))).")
    assert facts(macro_step(S(), E("won(x)"), rb)[0]) == ["paid(x)"]


def test_force_trigger_ignored():
    base = "rule(f, force pay(ag1,10) on won(ag1,g) if true do []).\n"
    rec = macro_step(S(), E("won(ag1,g)"), P(base + "rule(i, ignore won(A,G) if true)."))[2]
    assert rec.forced_events == () and [render_atom(x) for x in rec.ignored] == ["f"]


def test_no_force_rules():
    d, _, rec = macro_step(S("x"), E("a"), RuleBase())
    assert d == S("x") and rec.forced_events == () and rec.fired == ()


def test_eca_examples():
    rb = P("rule(r, on i(X,1) if true do add(o(X,1))).")
    assert facts(macro_step(S(), E("i(5,1)"), rb)[0]) == ["o(5,1)"]
    assert facts(macro_step(S(), E("i(1,1)", "i(2,1)"), rb)[0]) == ["o(1,1)", "o(2,1)"]
    rb = P("rule(r, on i(X,1) if true do add(o(X,1))).\nrule(n, ignore i(Y,1) if true).")
    assert facts(macro_step(S(), E("i(5,1)"), rb)[0]) == []


def test_registry_resets_between_steps():
    rb = P("rule(r, if p do add(q), del(q)).")
    recs = run(S("p"), [E(), E()], rb)
    assert [len(r.fired) for r in recs] == [1, 1]


def test_run_empty_trace():
    assert run(S("p"), [], RuleBase()) == []


def test_continuity_two_steps():
    rb = P("rule(a, on inp(X) if true do add(seen(X))).\nrule(b, if seen(X) & not(out(X)) do add(out(X))).")
    recs = run(S(), [E("inp(1)"), E("inp(2)")], rb)
    assert recs[0].state_after == recs[1].state_before
    assert facts(recs[1].state_after) == ["seen(1)", "out(1)", "seen(2)", "out(2)"]


def test_istar_new_rule_from_next_step():
    rb = P("rule(a, on x if true do add(rule(r9, on y if true do add(z)))).")
    recs = run(S(), [E("x", "y"), E("y")], rb, EngineConfig(istar_enabled=True))
    assert [[render_atom(i) for i, _ in r.fired] for r in recs] == [["a"], ["r9"]]


def test_istar_error_when_disabled():
    rb = P("rule(a, on x if true do add(rule(r9, on y if true do add(z)))).")
    rec = run(S(), [E("x"), E("x")], rb)
    assert len(rec) == 1 and rec[0].error.startswith("IstarDisabled")


# -- properties ----------------------------------------------------------------


class Instrumented(MacroStep):
    """Asserts prevent-safety and the registry law at every commit."""

    def __init__(self, *a):
        super().__init__(*a)
        self.keys = []

    def check_prv(self, before, after):
        ok = super().check_prv(before, after)
        if ok:
            for r in self.prevent_rules:
                for s in holds(before, r.cond, {}, self.clock):
                    assert not holds(after, r.target, s, self.clock)
        return ok

    def select_rule(self, delta):
        sel = super().select_rule(delta)
        if sel is not None:
            assert sel[3] not in self.keys
            self.keys.append(sel[3])
        return sel


def _quiet_parse(text):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ArityWarning)
        return parse_program(text)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_prevent_safety_and_registry_law(data):
    g = generate(lambda lo, hi: data.draw(st.integers(lo, hi)))
    rb = _quiet_parse(g.program)
    d = S(*g.init)
    for t, evs in enumerate(g.trace):
        m = Instrumented(rb, EngineConfig(), t)
        d = m.chain_if(d)
        xi, d = m.step_force(d, E(*evs).formulas)
        d = m.step_eca(d, xi)
        rb = m.rb


def _eca_program(rng, n_rules):
    rules = []
    for i in range(n_rules):
        evs = rng.sample(["a", "b", "c(1)", "c(2)", "c(X)"], rng.randint(1, 2))
        rules.append(f"rule(r{i}, on {', '.join(evs)} if true do add(hit({i})))")
    return rules


def test_default_permission_brute_force():
    rng = random.Random(5)
    pool = ["a", "b", "c(1)", "c(2)"]
    for _ in range(100):
        rules = _eca_program(rng, rng.randint(1, 4))
        rb = P(".\n".join(rules) + ".")
        xi = rng.sample(pool, rng.randint(0, 4))
        d = macro_step(S(), E(*xi), rb)[0]
        # every rule with any way of finding its events in xi fires
        want = []
        for i, (rid, r) in enumerate(rb):
            pats = [render_atom(e) for e in r.events]
            for combo in itertools.product(xi, repeat=len(pats)):
                if all(p == c or (p == "c(X)" and c.startswith("c(")) for p, c in zip(pats, combo)):
                    if "c(X)" not in pats or len({c for p, c in zip(pats, combo) if p == "c(X)"}) == 1:
                        want.append(f"hit({i})")
                        break
        assert facts(d) == want, (rules, xi)


def test_ignore_antitone():
    rng = random.Random(11)
    ign_pool = ["ignore a if true", "ignore b if true", "ignore c(X) if true", "ignore a, b if true",
                "ignore c(1) if true"]
    for _ in range(100):
        rules = _eca_program(rng, 4)
        small = rng.sample(ign_pool, rng.randint(0, 2))
        big = small + rng.sample(ign_pool, rng.randint(0, 3))
        xi = E(*rng.sample(["a", "b", "c(1)", "c(2)"], rng.randint(0, 4)))

        def passing(ign):
            rb = P(".\n".join(rules + [f"rule(i{k}, {x})" for k, x in enumerate(ign)]) + ".")
            ign_rules = rules_of(rb, Ignore)
            out = set()
            for rid, r in rb.of_kind(ECA):
                for s in match_events(r.events, xi.formulas, {}):
                    if not ignored(S(), xi.formulas, apply_subst(r.events, s), ign_rules):
                        out.add((render_atom(rid), str(sorted(s.items()))))
            return out

        assert passing(big) <= passing(small)


def test_determinism_of_generated_runs():
    for seed in range(30):
        g = generate(random_pick(random.Random(seed)))
        rb = _quiet_parse(g.program)
        trace = [E(*evs) for evs in g.trace]
        assert run(S(*g.init), trace, rb) == run(S(*g.init), trace, rb)
