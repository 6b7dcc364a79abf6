"""Naive reference interpreter used as a differential-testing oracle.

This is a direct, clause-by-clause transcription of the Prolog reading of
the semantics: every query returns a complete list of solutions, the fired
registry is a mutable list that is asserted into, and each if-rule
iteration recomputes all candidates from scratch. It shares only the
term-level primitives (matching, arithmetic, sat) with the main engine.

Prevent-rules are checked on the candidate state alone (the single-state
variant). On programs whose prevent preconditions only read facts that no
rule ever changes, this agrees with the two-state check used by the engine.
"""

from __future__ import annotations

from .constraints import constraint_member, eval_term, holds_constraint, sat, seteq
from .errors import ChainLimitExceeded, InstError, NonGroundEvent
from .kernel import (
    Const, Num, State, Var, apply_subst, is_ground, match_atom, match_cformula, resolve, state_add,
)
from .rules import (
    ECA, Add, Builtin, Conj, Expectation, Fact, Force, If, Ignore, Member, Not, Prevent,
    RuleBase, RuleUnit, Sat, SetEq, Test, Time, TrueCond, expand_expectation, subst,
)
from .engine import TransitionRecord, default_builtins, instantiate_fact


def _holds(delta: list, c, s: dict, t, builtins) -> list:
    if isinstance(c, TrueCond):
        return [s]
    if isinstance(c, Conj):
        out = [s]
        for part in c.parts:
            out = [s2 for s1 in out for s2 in _holds(delta, part, s1, t, builtins)]
        return out
    if isinstance(c, Not):
        return [] if _holds(delta, c.cond, s, t, builtins) else [s]
    if isinstance(c, Fact):
        out = []
        for e in delta:
            m = match_cformula(c.cf, e, s)
            if m is not None:
                out.append(m)
        return out
    if isinstance(c, Test):
        g = apply_subst(c.constraint, s)
        if is_ground(g):
            return [s] if holds_constraint(g) else []
        if g.op == "=":
            if isinstance(g.lhs, Var) and is_ground(g.rhs):
                return [{**s, g.lhs.name: _num_or_term(g.rhs)}]
            if isinstance(g.rhs, Var) and is_ground(g.lhs):
                return [{**s, g.rhs.name: _num_or_term(g.lhs)}]
        return [s] if sat([g]) else []
    if isinstance(c, Sat):
        return [s] if sat(apply_subst(c.constraints, s)) else []
    if isinstance(c, SetEq):
        return [s] if seteq(apply_subst(c.left, s), apply_subst(c.right, s)) else []
    if isinstance(c, Member):
        return [s] if constraint_member(c.constraint, c.constraints, s) else []
    if isinstance(c, Time):
        x = apply_subst(c.term, s)
        if isinstance(x, Var):
            return [{**s, x.name: Num(t)}]
        return [s] if x == Num(t) else []
    if isinstance(c, Builtin):
        r = builtins.call(c.name, c.args, s)
        return [] if r is None else [r]
    raise TypeError(c)


def _num_or_term(e):
    try:
        return Num(eval_term(e))
    except InstError:
        return e


def _events_match(patterns, xi, s) -> list:
    out = [s]
    for p in patterns:
        out = [m for s1 in out for ev in xi for m in [match_atom(p, ev, s1)] if m is not None]
    return out


class Reference:
    def __init__(self, rb, istar=False, builtins=None, max_chain=10_000):
        self.rb = list(rb)
        self.istar = istar
        self.builtins = builtins if builtins is not None else default_builtins()
        self.max_chain = max_chain

    def _rules(self, rb, kind):
        return [(i, r) for i, r in rb if type(r) is kind]

    # s_r
    def _do(self, delta, rb, actions, s):
        delta, rb = list(delta), list(rb)
        for a in actions:
            if isinstance(a, Builtin):
                r = self.builtins.call(a.name, a.args, s)
                if r is not None:
                    s = r
                continue
            u = a.unit
            if isinstance(u, RuleUnit):
                if not self.istar:
                    raise InstError("rule action outside I*")
                rid = apply_subst(u.id, s)
                ids = [i for i, _ in rb]
                if isinstance(a, Add):
                    body = subst(u.rule, s)
                    new = expand_expectation(rid, body) if isinstance(body, Expectation) else [(rid, body)]
                    for i, b in new:
                        if i not in [j for j, _ in rb]:
                            rb.append((i, b))
                elif rid in ids:
                    body = dict(rb)[rid]
                    if u.rule is None or body == subst(u.rule, s):
                        rb = [(i, b) for i, b in rb if i != rid]
                continue
            if isinstance(a, Add):
                cf = instantiate_fact(u, s)
                delta = list(state_add(State(tuple(delta)), cf).entries)
            else:
                g = apply_subst(u, s)
                if is_ground(g):
                    delta = [e for e in delta if e != g]
                else:
                    for e in delta:
                        m = match_cformula(u, e, s)
                        if m is not None:
                            s = m
                            delta = [x for x in delta if x != e]
                            break
        return delta, rb

    def _check_prv(self, after, prv, t):
        for _, r in prv:
            for s in _holds(after, r.cond, {}, t, self.builtins):
                if _holds(after, r.target, s, t, self.builtins):
                    return False
        return True

    def _ignored(self, delta, xi, trigger, ign, t):
        for _, r in ign:
            for s in _events_match(r.events, xi, {}):
                inst = apply_subst(r.events, s)
                if any(e in inst for e in trigger) and _holds(delta, r.cond, s, t, self.builtins):
                    return True
        return False

    def step(self, delta, rb, events, t):
        snapshot = list(rb)
        prv = self._rules(snapshot, Prevent)
        ign = self._rules(snapshot, Ignore)
        fired_reg = [(Const("false"), Const("false"))]
        log = {"fired": [], "ignored": [], "prevented": []}
        count = [0]

        def s_if(delta, rb):
            while True:
                cands = []
                for rid, r in self._rules(snapshot, If):
                    for s in _holds(delta, r.cond, {}, t, self.builtins):
                        pair = (subst(r.cond, s), subst(r.actions, s))
                        if pair not in fired_reg:
                            cands.append((rid, r, s, pair))
                if not cands:
                    return delta, rb
                count[0] += 1
                if count[0] > self.max_chain:
                    raise ChainLimitExceeded("chain limit")
                rid, r, s, pair = cands[0]
                fired_reg.append(pair)
                d2, rb2 = self._do(delta, rb, r.actions, s)
                if self._check_prv(d2, prv, t):
                    delta, rb = d2, rb2
                    log["fired"].append((rid, s))
                else:
                    log["prevented"].append(rid)

        def s_r_prime(delta, rb, items):
            for rid, s, acts in items:
                d2, rb2 = self._do(delta, rb, acts, s)
                if self._check_prv(d2, prv, t):
                    delta, rb = d2, rb2
                    log["fired"].append((rid, s))
                    delta, rb = s_if(delta, rb)
                else:
                    log["prevented"].append(rid)
            return delta, rb

        def collect(delta, xi, kind):
            items, keys, forced = [], [], []
            for rid, r in self._rules(snapshot, kind):
                for s1 in _events_match(r.events, xi, {}):
                    trig = apply_subst(r.events, s1)
                    sols = _holds(delta, r.cond, s1, t, self.builtins)
                    if trig and self._ignored(delta, xi, trig, ign, t):
                        if sols:
                            log["ignored"].append(rid)
                        continue
                    for s in sols:
                        k = subst(r.actions, s)
                        if kind is Force:
                            evs = apply_subst(r.forced, s)
                            for ev in evs:
                                if not is_ground(ev):
                                    raise NonGroundEvent("forced event not ground")
                                if ev not in forced:
                                    forced.append(ev)
                            k = (evs, k)
                        if k not in keys:
                            keys.append(k)
                            items.append((rid, s, r.actions))
            return items, forced

        xi = []
        for _, ev in events.items:
            if ev not in xi:
                xi.append(ev)
        forced = []
        d0, rb0 = delta, rb
        try:
            delta, rb = s_if(delta, rb)
            items, forced = collect(delta, xi, Force)
            xi2 = xi + [e for e in forced if e not in xi]
            delta, rb = s_r_prime(delta, rb, items)
            items, _ = collect(delta, xi2, ECA)
            delta, rb = s_r_prime(delta, rb, items)
            err = None
        except (InstError, RecursionError) as exc:
            err = f"{type(exc).__name__}: {exc}"
            delta, rb = d0, rb0

        def uniq(xs):
            out = []
            for x in xs:
                if x not in out:
                    out.append(x)
            return tuple(out)

        rec = TransitionRecord(
            step=t,
            state_before=State(tuple(d0)),
            events=events,
            forced_events=tuple(forced),
            fired=tuple((rid, resolve(s)) for rid, s in log["fired"]),
            ignored=uniq(log["ignored"]),
            prevented=uniq(log["prevented"]),
            state_after=State(tuple(delta)),
            rule_base=RuleBase(rb) if self.istar else None,
            error=err,
        )
        return delta, rb, rec

    def run(self, delta0, trace) -> list:
        delta, rb, out = list(delta0.entries), list(self.rb), []
        for t, events in enumerate(trace):
            delta, rb, rec = self.step(delta, rb, events, t)
            out.append(rec)
            if rec.error is not None:
                break
        return out
