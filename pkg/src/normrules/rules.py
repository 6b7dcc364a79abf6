"""Abstract syntax of rule programs and the rule base container."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union

from .errors import DuplicateRuleId
from .kernel import Atom, CFormula, Compound, Const, Constraint, Subst, apply_subst, as_cformula, iter_vars

# ---------------------------------------------------------------------------
# conditions


@dataclass(frozen=True)
class TrueCond:
    pass


TRUE = TrueCond()


@dataclass(frozen=True)
class Conj:
    parts: tuple


@dataclass(frozen=True)
class Not:
    cond: object


@dataclass(frozen=True)
class Sat:
    constraints: tuple


@dataclass(frozen=True)
class SetEq:
    left: tuple  # of Term | Constraint
    right: tuple


@dataclass(frozen=True)
class Member:
    constraint: Constraint
    constraints: tuple


@dataclass(frozen=True)
class Time:
    term: object


@dataclass(frozen=True)
class Fact:
    cf: CFormula


@dataclass(frozen=True)
class Test:
    """A bare constraint used as a condition (``X > 1``)."""

    constraint: Constraint


@dataclass(frozen=True)
class Builtin:
    """Host computation escape; valid both as a condition and as an action."""

    name: str
    args: tuple = ()


Condition = Union[TrueCond, Conj, Not, Sat, SetEq, Member, Time, Fact, Test, Builtin]


def conj(*parts) -> Condition:
    flat = []
    for p in parts:
        if isinstance(p, Conj):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if not flat:
        return TRUE
    return flat[0] if len(flat) == 1 else Conj(tuple(flat))


# ---------------------------------------------------------------------------
# actions


@dataclass(frozen=True)
class RuleUnit:
    """``rule(Id, Body)`` as an open unit; ``rule is None`` stands for ``_``."""

    id: Atom
    rule: Optional[object]


@dataclass(frozen=True)
class Add:
    unit: Union[CFormula, RuleUnit]


@dataclass(frozen=True)
class Del:
    unit: Union[CFormula, RuleUnit]


Action = Union[Add, Del, Builtin]


# ---------------------------------------------------------------------------
# rules


@dataclass(frozen=True)
class ECA:
    events: tuple
    cond: Condition
    actions: tuple


@dataclass(frozen=True)
class If:
    cond: Condition
    actions: tuple


@dataclass(frozen=True)
class Ignore:
    events: tuple
    cond: Condition


@dataclass(frozen=True)
class Prevent:
    target: Condition
    cond: Condition


@dataclass(frozen=True)
class Force:
    forced: tuple
    events: tuple  # empty tuple: fires on every step
    cond: Condition
    actions: tuple


@dataclass(frozen=True)
class Expectation:
    event: Atom
    events: tuple
    cond: Condition
    fulfilled: Condition
    violated: Condition
    sanction: tuple


Rule = Union[ECA, If, Ignore, Prevent, Force, Expectation]


# ---------------------------------------------------------------------------
# substitution through rule trees


def subst(x, s: Subst):
    """Apply a substitution to any rule-language node."""
    if not s:
        return x
    match x:
        case TrueCond():
            return x
        case Conj(parts):
            return Conj(tuple(subst(p, s) for p in parts))
        case Not(c):
            return Not(subst(c, s))
        case Sat(cs):
            return Sat(apply_subst(cs, s))
        case SetEq(l, r):
            return SetEq(apply_subst(l, s), apply_subst(r, s))
        case Member(c, cs):
            return Member(apply_subst(c, s), apply_subst(cs, s))
        case Time(t):
            return Time(apply_subst(t, s))
        case Fact(cf):
            return Fact(apply_subst(cf, s))
        case Test(c):
            return Test(apply_subst(c, s))
        case Builtin(name, args):
            return Builtin(name, apply_subst(args, s))
        case RuleUnit(rid, body):
            return RuleUnit(apply_subst(rid, s), None if body is None else subst(body, s))
        case Add(u):
            return Add(subst(u, s) if isinstance(u, RuleUnit) else apply_subst(u, s))
        case Del(u):
            return Del(subst(u, s) if isinstance(u, RuleUnit) else apply_subst(u, s))
        case ECA(ev, c, acts):
            return ECA(apply_subst(ev, s), subst(c, s), tuple(subst(a, s) for a in acts))
        case If(c, acts):
            return If(subst(c, s), tuple(subst(a, s) for a in acts))
        case Ignore(ev, c):
            return Ignore(apply_subst(ev, s), subst(c, s))
        case Prevent(t, c):
            return Prevent(subst(t, s), subst(c, s))
        case Force(fe, ev, c, acts):
            return Force(apply_subst(fe, s), apply_subst(ev, s), subst(c, s), tuple(subst(a, s) for a in acts))
        case Expectation(e, ev, c, f, v, acts):
            return Expectation(apply_subst(e, s), apply_subst(ev, s), subst(c, s), subst(f, s),
                               subst(v, s), tuple(subst(a, s) for a in acts))
        case tuple():
            return tuple(subst(e, s) for e in x)
    return apply_subst(x, s)


def node_vars(x) -> list:
    """Variables of a rule-language node in order of first occurrence."""
    seen = {}

    def visit(n):
        if isinstance(n, (TrueCond, type(None), str)):
            return
        if isinstance(n, (tuple, list)):
            for e in n:
                visit(e)
            return
        if hasattr(n, "__dataclass_fields__") and not isinstance(n, (Atom, CFormula, Constraint)) \
                and type(n).__module__ == __name__:
            for f in n.__dataclass_fields__:
                visit(getattr(n, f))
            return
        for v in iter_vars(n):
            seen.setdefault(v)

    visit(x)
    return list(seen)


# ---------------------------------------------------------------------------
# rule base


class RuleBase:
    """Ordered, id-keyed collection of rules; declaration order is priority order."""

    __slots__ = ("entries", "_ids")

    def __init__(self, entries=()):
        entries = tuple(entries)
        ids = {}
        for rid, _ in entries:
            if rid in ids:
                raise DuplicateRuleId(f"duplicate rule id {rid}")
            ids[rid] = None
        self.entries = entries
        self._ids = ids

    def __iter__(self) -> Iterator:
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, RuleBase) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"RuleBase({list(self.entries)!r})"

    def __contains__(self, rid) -> bool:
        return rid in self._ids

    def get(self, rid):
        for i, r in self.entries:
            if i == rid:
                return r
        return None

    def with_rule(self, rid, rule) -> "RuleBase":
        return RuleBase(self.entries + ((rid, rule),))

    def without(self, rid) -> "RuleBase":
        return RuleBase(tuple(e for e in self.entries if e[0] != rid))

    def of_kind(self, kind) -> list:
        return [(i, r) for i, r in self.entries if type(r) is kind]


def _suffixed(rid: Atom, suffix: str) -> Atom:
    return Atom(f"{rid.pred}-{suffix}", rid.args)


def expand_expectation(rid: Atom, r: Expectation) -> list:
    """The add / fulfil / sanction triple standing for one expectation rule."""
    exp = CFormula(Atom("exp", (_atom_as_term(r.event),)))
    return [
        (_suffixed(rid, "add"), ECA(r.events, r.cond, (Add(exp),))),
        (_suffixed(rid, "fulfil"), If(conj(Fact(exp), r.fulfilled), (Del(exp),))),
        (_suffixed(rid, "sanction"), If(conj(Fact(exp), r.violated), (Del(exp),) + tuple(r.sanction))),
    ]


def _atom_as_term(a: Atom):
    return Compound(a.pred, a.args) if a.args else Const(a.pred)


def desugar_expectations(rb: RuleBase) -> RuleBase:
    out = []
    for rid, r in rb:
        if isinstance(r, Expectation):
            out.extend(expand_expectation(rid, r))
        else:
            out.append((rid, r))
    return RuleBase(out)


def fact(atom_or_cf) -> Fact:
    return Fact(as_cformula(atom_or_cf))


__all__ = [
    "TRUE", "TrueCond", "Conj", "Not", "Sat", "SetEq", "Member", "Time", "Fact", "Test", "Builtin",
    "RuleUnit", "Add", "Del", "ECA", "If", "Ignore", "Prevent", "Force", "Expectation",
    "RuleBase", "conj", "subst", "node_vars", "desugar_expectations", "expand_expectation", "fact",
]
