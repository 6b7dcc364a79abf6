"""Operational semantics: condition solving, actions, prevention, chaining and the macro-step.

A macro-step maps ``(state, events)`` to the next state in a fixed pipeline:
reset the fired registry, chain if-rules to a fixpoint, apply force-rules
(which may add events), then apply ECA-rules to the extended event set.
Rule lists are read from the rule base as it stood when the step began;
rule additions and removals made by actions take effect from the next step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Optional

from .constraints import constraint_member, eval_term, holds_constraint, sat, seteq
from .errors import (
    ArityMismatch, ChainLimitExceeded, InstError, IstarDisabled, NonGroundBuiltinInput, NonGroundEvent,
    NonGroundFact, UnknownBuiltin, UnknownFunctor,
)
from .kernel import (
    Atom, CFormula, Const, Constraint, EventSet, Num, State, Subst, Var, apply_subst, bind, is_ground,
    match_atom, match_cformula, resolve, state_add, state_del, unify,
)
from .rules import (
    ECA, Add, Builtin, Conj, Expectation, Fact, Force, If, Ignore, Member, Not, Prevent,
    RuleBase, RuleUnit, Sat, SetEq, Test, Time, TrueCond, expand_expectation, subst,
)

# ---------------------------------------------------------------------------
# builtins


@dataclass(frozen=True)
class BuiltinSpec:
    fn: Callable
    outputs: int = 0


class BuiltinRegistry:
    """Named host computations.

    A builtin receives its ground input terms positionally and returns
    either a truth value (when it has no outputs) or a tuple with one term
    per output; ``None`` means failure. The trailing ``outputs`` arguments
    of a call site are unified with the returned terms.
    """

    def __init__(self, entries=None):
        self._specs = dict(entries or {})

    def register(self, name: str, fn: Callable, outputs: int = 0) -> "BuiltinRegistry":
        self._specs[name] = BuiltinSpec(fn, outputs)
        return self

    def copy(self) -> "BuiltinRegistry":
        return BuiltinRegistry(self._specs)

    def __contains__(self, name):
        return name in self._specs

    def call(self, name: str, args: tuple, s: Subst) -> Optional[Subst]:
        spec = self._specs.get(name)
        if spec is None:
            raise UnknownBuiltin(f"no builtin named {name!r}")
        args = apply_subst(tuple(args), s)
        if len(args) < spec.outputs:
            raise ArityMismatch(f"builtin {name} needs at least {spec.outputs} arguments")
        n_in = len(args) - spec.outputs
        inputs, outs = args[:n_in], args[n_in:]
        for a in inputs:
            if not is_ground(a):
                raise NonGroundBuiltinInput(f"builtin {name} called with unbound input")
        result = spec.fn(*inputs)
        if spec.outputs == 0:
            return s if result else None
        if result is None:
            return None
        if not isinstance(result, tuple):
            result = (result,)
        for o, r in zip(outs, result):
            s = unify(o, r, s)
            if s is None:
                return None
        return s


def _eval_builtin(expr):
    return Num(eval_term(expr))


def default_builtins() -> BuiltinRegistry:
    return BuiltinRegistry().register("eval", _eval_builtin, outputs=1)


# ---------------------------------------------------------------------------
# configuration and records


@dataclass
class EngineConfig:
    max_chain_iterations: int = 10_000
    max_step_actions: int = 1_000_000
    clock_mode: str = "logical"  # or "injected"
    istar_enabled: bool = False
    builtins: BuiltinRegistry = field(default_factory=default_builtins)
    wall_clock: Optional[Callable[[], Fraction]] = None

    def __post_init__(self):
        if self.max_chain_iterations < 1:
            raise ValueError("max_chain_iterations must be >= 1")
        if self.clock_mode not in ("logical", "injected"):
            raise ValueError(f"unknown clock mode {self.clock_mode!r}")
        if self.clock_mode == "injected" and self.wall_clock is None:
            raise ValueError("injected clock mode needs wall_clock")

    def clock_at(self, step: int):
        return step if self.clock_mode == "logical" else self.wall_clock()


@dataclass(frozen=True)
class TransitionRecord:
    step: int
    state_before: State
    events: EventSet
    forced_events: tuple
    fired: tuple  # (rule id, substitution) pairs in commit order
    ignored: tuple
    prevented: tuple
    state_after: State
    rule_base: Optional[RuleBase] = None
    error: Optional[str] = None


# ---------------------------------------------------------------------------
# conditions


def _value(t):
    try:
        return Num(eval_term(t))
    except UnknownFunctor:
        return t


def _test(c: Constraint, s: Subst) -> Iterator[Subst]:
    c = apply_subst(c, s)
    if is_ground(c):
        if holds_constraint(c):
            yield s
        return
    if c.op == "=":
        for v, e in ((c.lhs, c.rhs), (c.rhs, c.lhs)):
            if isinstance(v, Var) and is_ground(e):
                yield bind(s, v.name, _value(e))
                return
    if sat([c]):
        yield s


def solve(delta: State, c, s: Subst, clock, builtins: BuiltinRegistry) -> Iterator[Subst]:
    """Lazily enumerate the substitutions under which ``c`` holds in ``delta``."""
    if isinstance(c, TrueCond):
        yield s
    elif isinstance(c, Conj):
        yield from _solve_conj(delta, c.parts, s, clock, builtins)
    elif isinstance(c, Not):
        if next(solve(delta, c.cond, s, clock, builtins), None) is None:
            yield s
    elif isinstance(c, Fact):
        for entry in delta.entries:
            m = match_cformula(c.cf, entry, s)
            if m is not None:
                yield m
    elif isinstance(c, Test):
        yield from _test(c.constraint, s)
    elif isinstance(c, Sat):
        if sat(apply_subst(c.constraints, s)):
            yield s
    elif isinstance(c, SetEq):
        if seteq(apply_subst(c.left, s), apply_subst(c.right, s)):
            yield s
    elif isinstance(c, Member):
        if constraint_member(c.constraint, c.constraints, s):
            yield s
    elif isinstance(c, Time):
        t = apply_subst(c.term, s)
        now = Num(clock)
        if isinstance(t, Var):
            yield bind(s, t.name, now)
        elif t == now:
            yield s
    elif isinstance(c, Builtin):
        out = builtins.call(c.name, c.args, s)
        if out is not None:
            yield out
    else:
        raise TypeError(f"not a condition: {c!r}")


def _solve_conj(delta, parts, s, clock, builtins):
    if not parts:
        yield s
        return
    for s1 in solve(delta, parts[0], s, clock, builtins):
        yield from _solve_conj(delta, parts[1:], s1, clock, builtins)


def holds(delta: State, c, s: Optional[Subst] = None, clock=0, builtins: Optional[BuiltinRegistry] = None) -> list:
    """Every substitution (extending ``s``) under which ``c`` holds, in search order."""
    builtins = builtins if builtins is not None else default_builtins()
    return [resolve(x) for x in solve(delta, c, dict(s or {}), clock, builtins)]


# ---------------------------------------------------------------------------
# events, prevention, ignoring


def match_events(patterns, xi, s: Subst) -> Iterator[Subst]:
    """Every way of mapping each pattern onto some occurred event (repeats allowed)."""
    if not patterns:
        yield s
        return
    head, rest = patterns[0], patterns[1:]
    for ev in xi:
        m = match_atom(head, ev, s)
        if m is not None:
            yield from match_events(rest, xi, m)


def check_prv(before: State, after: State, prevent_rules, clock=0, builtins=None) -> bool:
    """True when no ``prevent C if C'`` has ``C'`` holding before and ``C`` after.

    Variables bound while proving ``C'`` carry over into ``C``.
    """
    builtins = builtins if builtins is not None else default_builtins()
    for r in prevent_rules:
        for s in solve(before, r.cond, {}, clock, builtins):
            if next(solve(after, r.target, s, clock, builtins), None) is not None:
                return False
    return True


def ignored(delta: State, xi, trigger, ignore_rules, clock=0, builtins=None) -> bool:
    """True when an ignore-rule whose events all occurred shares an event with ``trigger``."""
    builtins = builtins if builtins is not None else default_builtins()
    trig = set(trigger)
    if not trig:
        return False
    for r in ignore_rules:
        for s in match_events(r.events, xi, {}):
            if trig.isdisjoint(apply_subst(r.events, s)):
                continue
            if next(solve(delta, r.cond, s, clock, builtins), None) is not None:
                return True
    return False


# ---------------------------------------------------------------------------
# actions


def instantiate_fact(cf: CFormula, s: Subst) -> CFormula:
    """Apply ``s`` and then solve ``V = ground-expr`` constraints by substitution."""
    cf = apply_subst(cf, s)
    while True:
        for i, c in enumerate(cf.constraints):
            if c.op != "=":
                continue
            for v, e in ((c.lhs, c.rhs), (c.rhs, c.lhs)):
                if isinstance(v, Var) and is_ground(e):
                    rest = cf.constraints[:i] + cf.constraints[i + 1:]
                    cf = apply_subst(CFormula(cf.atom, rest), {v.name: _value(e)})
                    break
            else:
                continue
            break
        else:
            return cf


def _ground_id(rid: Atom, s: Subst) -> Atom:
    rid = apply_subst(rid, s)
    if not is_ground(rid):
        raise NonGroundFact(f"rule id {rid} is not ground")
    return rid


def apply_action(delta: State, rb: RuleBase, a, s: Subst, istar: bool = False,
                 builtins: Optional[BuiltinRegistry] = None):
    """Apply one action; returns ``(delta, rb, s)``.

    ``s`` can grow: deleting a non-ground formula binds its variables to
    the first matching entry, and builtin actions may bind outputs.
    """
    if isinstance(a, Builtin):
        builtins = builtins if builtins is not None else default_builtins()
        out = builtins.call(a.name, a.args, s)
        return delta, rb, (s if out is None else out)
    unit = a.unit
    if isinstance(unit, RuleUnit):
        if not istar:
            raise IstarDisabled("rule-valued actions need I* mode")
        rid = _ground_id(unit.id, s)
        if isinstance(a, Add):
            body = subst(unit.rule, s)
            pairs = expand_expectation(rid, body) if isinstance(body, Expectation) else [(rid, body)]
            for pid, pbody in pairs:
                if pid not in rb:
                    rb = rb.with_rule(pid, pbody)
        elif rid in rb and (unit.rule is None or rb.get(rid) == subst(unit.rule, s)):
            rb = rb.without(rid)
        return delta, rb, s
    if isinstance(a, Add):
        return state_add(delta, instantiate_fact(unit, s)), rb, s
    cf = apply_subst(unit, s)
    if is_ground(cf):
        return state_del(delta, cf), rb, s
    for entry in delta.entries:
        m = match_cformula(unit, entry, s)
        if m is not None:
            return state_del(delta, entry), rb, m
    return delta, rb, s


def apply_actions(delta, rb, actions, s, istar=False, builtins=None):
    for a in actions:
        delta, rb, s = apply_action(delta, rb, a, s, istar, builtins)
    return delta, rb, s


# ---------------------------------------------------------------------------
# the macro-step

_SENTINEL = (Const("false"), Const("false"))


class MacroStep:
    """State of one macro-step: the fired registry, the evolving rule base and the log."""

    def __init__(self, rb: RuleBase, config: EngineConfig, clock):
        self.config = config
        self.clock = clock
        self.rb = rb
        self.builtins = config.builtins
        self.if_rules = rb.of_kind(If)
        self.eca_rules = rb.of_kind(ECA)
        self.force_rules = rb.of_kind(Force)
        self.ignore_rules = [r for _, r in rb.of_kind(Ignore)]
        self.prevent_rules = [r for _, r in rb.of_kind(Prevent)]
        self.registry = {_SENTINEL}
        self.fired, self.ignored, self.prevented = [], [], []
        self.forced_events = []
        self._actions_done = 0

    # -- helpers ----------------------------------------------------------

    def solve(self, delta, cond, s):
        return solve(delta, cond, s, self.clock, self.builtins)

    def check_prv(self, before, after) -> bool:
        return check_prv(before, after, self.prevent_rules, self.clock, self.builtins)

    def is_ignored(self, delta, xi, trigger) -> bool:
        return ignored(delta, xi, trigger, self.ignore_rules, self.clock, self.builtins)

    def apply(self, delta, actions, s):
        self._actions_done += len(actions)
        if self._actions_done > self.config.max_step_actions:
            raise ChainLimitExceeded("too many action applications in one step")
        delta, rb, _ = apply_actions(delta, self.rb, actions, s, self.config.istar_enabled, self.builtins)
        return delta, rb

    # -- if-rules ---------------------------------------------------------

    def select_rule(self, delta):
        """First if-rule, in declaration order, with an instantiation not yet fired."""
        for rid, r in self.if_rules:
            for s in self.solve(delta, r.cond, {}):
                key = (subst(r.cond, s), subst(r.actions, s))
                if key not in self.registry:
                    return rid, r, s, key
        return None

    def chain_if(self, delta: State) -> State:
        n = 0
        while True:
            sel = self.select_rule(delta)
            if sel is None:
                return delta
            n += 1
            if n > self.config.max_chain_iterations:
                raise ChainLimitExceeded(f"if-rule chaining exceeded {self.config.max_chain_iterations} firings")
            rid, r, s, key = sel
            self.registry.add(key)
            cand, rb = self.apply(delta, r.actions, s)
            if self.check_prv(delta, cand):
                delta, self.rb = cand, rb
                self.fired.append((rid, s))
            else:
                self.prevented.append(rid)

    # -- action sets ------------------------------------------------------

    def apply_rule_action_sets(self, delta: State, entries) -> State:
        """Apply each ``(rule id, substitution, actions)`` atomically, chaining after each."""
        for rid, s, actions in entries:
            cand, rb = self.apply(delta, actions, s)
            if self.check_prv(delta, cand):
                delta, self.rb = cand, rb
                self.fired.append((rid, s))
                delta = self.chain_if(delta)
            else:
                self.prevented.append(rid)
        return delta

    def _collect(self, delta, xi, rules, with_forced=False):
        entries, seen, forced = [], set(), []
        for rid, r in rules:
            for s1 in match_events(r.events, xi, {}):
                trigger = apply_subst(r.events, s1)
                if self.is_ignored(delta, xi, trigger):
                    if next(self.solve(delta, r.cond, s1), None) is not None:
                        self.ignored.append(rid)
                    continue
                for s in self.solve(delta, r.cond, s1):
                    key = subst(r.actions, s)
                    if with_forced:
                        evs = apply_subst(r.forced, s)
                        for ev in evs:
                            if not is_ground(ev):
                                raise NonGroundEvent(f"forced event {ev} is not ground")
                            forced.append(ev)
                        key = (evs, key)
                    if key not in seen:
                        seen.add(key)
                        entries.append((rid, s, r.actions))
        return entries, list(dict.fromkeys(forced))

    def step_force(self, delta: State, xi: tuple):
        entries, forced = self._collect(delta, xi, self.force_rules, with_forced=True)
        self.forced_events = forced
        xi2 = tuple(dict.fromkeys(xi + tuple(forced)))
        return xi2, self.apply_rule_action_sets(delta, entries)

    def step_eca(self, delta: State, xi: tuple) -> State:
        entries, _ = self._collect(delta, xi, self.eca_rules)
        return self.apply_rule_action_sets(delta, entries)


def _dedupe(xs):
    return tuple(dict.fromkeys(xs))


def macro_step(delta: State, events: EventSet, rb: RuleBase, config: Optional[EngineConfig] = None, step: int = 0):
    """One full pipeline; returns ``(delta', rb', record)``.

    Errors do not escape: the record carries the diagnostic and the
    pre-step state and rule base are returned unchanged.
    """
    config = config or EngineConfig()
    if not isinstance(events, EventSet):
        events = EventSet.of(*events)
    m = MacroStep(rb, config, config.clock_at(step))
    error = None
    try:
        d = m.chain_if(delta)
        xi, d = m.step_force(d, events.formulas)
        d = m.step_eca(d, xi)
        new_rb = m.rb
    except (InstError, RecursionError) as exc:
        error = f"{type(exc).__name__}: {exc}"
        d, new_rb = delta, rb
    record = TransitionRecord(
        step=step,
        state_before=delta,
        events=events,
        forced_events=tuple(m.forced_events),
        fired=tuple((rid, resolve(s)) for rid, s in m.fired),
        ignored=_dedupe(m.ignored),
        prevented=_dedupe(m.prevented),
        state_after=d,
        rule_base=new_rb if config.istar_enabled else None,
        error=error,
    )
    return d, new_rb, record


def run(delta0: State, trace, rb: RuleBase, config: Optional[EngineConfig] = None) -> list:
    """Fold :func:`macro_step` over ``trace``; stops after the first failing step."""
    config = config or EngineConfig()
    records, delta = [], delta0
    for t, events in enumerate(trace):
        delta, rb, rec = macro_step(delta, events, rb, config, t)
        records.append(rec)
        if rec.error is not None:
            break
    return records
