"""Terms, atomic formulae, constrained formulae, states of affairs and matching.

Every value here is immutable. Substitutions are plain ``dict[str, Term]``
objects that are never mutated once handed out; binding returns a copy.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence, Union

from .errors import NonGroundEvent, NonGroundFact

ARITH_OPS = frozenset({"+", "-", "*", "/"})
RELATIONS = ("=", "!=", ">", ">=", "<", "<=")
TUPLE = ","


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Num:
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Compound:
    functor: str
    args: tuple

    def __post_init__(self):
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise ValueError(f"compound {self.functor!r} needs at least one argument")


Term = Union[Var, Const, Num, Compound]
Subst = dict  # variable name -> Term


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple = ()

    def __post_init__(self):
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))

    @property
    def arity(self) -> int:
        return len(self.args)


@dataclass(frozen=True)
class Constraint:
    lhs: Term
    op: str
    rhs: Term

    def __post_init__(self):
        if self.op not in RELATIONS:
            raise ValueError(f"unknown relation {self.op!r}")


@dataclass(frozen=True, eq=False)
class CFormula:
    """An atom restricted by a multiset of constraints.

    Equality and hashing treat ``constraints`` as a multiset, so
    ``p:{a, b}`` equals ``p:{b, a}``; the stored order is kept for printing.
    """

    atom: Atom
    constraints: tuple = ()

    def __post_init__(self):
        if not isinstance(self.constraints, tuple):
            object.__setattr__(self, "constraints", tuple(self.constraints))

    def __eq__(self, other):
        if not isinstance(other, CFormula):
            return NotImplemented
        if self.atom != other.atom or len(self.constraints) != len(other.constraints):
            return False
        return Counter(self.constraints) == Counter(other.constraints)

    def __hash__(self):
        return hash((self.atom, frozenset(Counter(self.constraints).items())))


def as_cformula(x: Union[Atom, CFormula]) -> CFormula:
    return x if isinstance(x, CFormula) else CFormula(x)


# ---------------------------------------------------------------------------
# inspection


def term_key(t):
    """Total structural order over terms, used for canonical sorting only."""
    if isinstance(t, Var):
        return (0, t.name)
    if isinstance(t, Const):
        return (1, t.name)
    if isinstance(t, Num):
        return (2, t.value)
    if isinstance(t, Compound):
        return (3, t.functor, len(t.args), tuple(term_key(a) for a in t.args))
    if isinstance(t, Atom):
        return (4, t.pred, len(t.args), tuple(term_key(a) for a in t.args))
    if isinstance(t, Constraint):
        return (5, t.op, term_key(t.lhs), term_key(t.rhs))
    if isinstance(t, CFormula):
        return (6, term_key(t.atom), tuple(sorted(term_key(c) for c in t.constraints)))
    raise TypeError(f"no ordering for {type(t).__name__}")


def _children(x) -> Iterable:
    if isinstance(x, Compound):
        return x.args
    if isinstance(x, Atom):
        return x.args
    if isinstance(x, Constraint):
        return (x.lhs, x.rhs)
    if isinstance(x, CFormula):
        return (x.atom, *x.constraints)
    if isinstance(x, (tuple, list)):
        return x
    return ()


def iter_vars(x) -> Iterator[str]:
    """Variable names in left-to-right order of occurrence (with repeats)."""
    if isinstance(x, Var):
        yield x.name
        return
    for c in _children(x):
        yield from iter_vars(c)


def variables(x) -> list:
    return list(dict.fromkeys(iter_vars(x)))


def is_ground(x) -> bool:
    return next(iter_vars(x), None) is None


# ---------------------------------------------------------------------------
# substitution


def walk(t: Term, s: Subst) -> Term:
    while isinstance(t, Var) and t.name in s:
        t = s[t.name]
    return t


def apply_subst(x, s: Subst):
    """Apply ``s`` to a term, atom, constraint, constrained formula or sequence.

    Bindings are followed recursively, so triangular substitutions such as
    ``{X/Y, Y/a}`` resolve ``X`` to ``a``.
    """
    if not s:
        return x
    if isinstance(x, Var):
        if x.name in s:
            return apply_subst(s[x.name], s)
        return x
    if isinstance(x, (Const, Num)):
        return x
    if isinstance(x, Compound):
        return Compound(x.functor, tuple(apply_subst(a, s) for a in x.args))
    if isinstance(x, Atom):
        return Atom(x.pred, tuple(apply_subst(a, s) for a in x.args))
    if isinstance(x, Constraint):
        return Constraint(apply_subst(x.lhs, s), x.op, apply_subst(x.rhs, s))
    if isinstance(x, CFormula):
        return CFormula(apply_subst(x.atom, s), tuple(apply_subst(c, s) for c in x.constraints))
    if isinstance(x, tuple):
        return tuple(apply_subst(e, s) for e in x)
    if isinstance(x, list):
        return [apply_subst(e, s) for e in x]
    raise TypeError(f"cannot substitute into {type(x).__name__}")


def resolve(s: Subst) -> Subst:
    """Idempotent form of a triangular substitution, without identity pairs."""
    out = {}
    for name in s:
        t = apply_subst(Var(name), s)
        if t != Var(name):
            out[name] = t
    return out


def bind(s: Subst, name: str, t: Term) -> Subst:
    if t == Var(name):
        return s
    out = dict(s)
    out[name] = t
    return out


def _occurs(name: str, t: Term, s: Subst) -> bool:
    t = walk(t, s)
    if isinstance(t, Var):
        return t.name == name
    if isinstance(t, Compound):
        return any(_occurs(name, a, s) for a in t.args)
    return False


def _unify_terms(a: Term, b: Term, s: Subst) -> Optional[Subst]:
    a, b = walk(a, s), walk(b, s)
    if a == b:
        return s
    if isinstance(a, Var):
        return None if _occurs(a.name, b, s) else bind(s, a.name, b)
    if isinstance(b, Var):
        return None if _occurs(b.name, a, s) else bind(s, b.name, a)
    if isinstance(a, Compound) and isinstance(b, Compound):
        if a.functor != b.functor or len(a.args) != len(b.args):
            return None
        for x, y in zip(a.args, b.args):
            s = _unify_terms(x, y, s)
            if s is None:
                return None
        return s
    return None


def unify(a, b, s: Optional[Subst] = None) -> Optional[Subst]:
    """Most general unifier of two terms or atoms (occurs-checked).

    Returns the resolved substitution extending ``s`` or ``None``.
    """
    s = {} if s is None else s
    if isinstance(a, Atom) or isinstance(b, Atom):
        if not (isinstance(a, Atom) and isinstance(b, Atom)):
            return None
        if a.pred != b.pred or len(a.args) != len(b.args):
            return None
        for x, y in zip(a.args, b.args):
            s = _unify_terms(x, y, s)
            if s is None:
                return None
    else:
        s = _unify_terms(a, b, s)
        if s is None:
            return None
    return resolve(s)


# one-way matching: variables of the target are rigid


def match_term(p: Term, t: Term, s: Subst) -> Optional[Subst]:
    if isinstance(p, Var):
        if p.name in s:
            return s if apply_subst(s[p.name], s) == t else None
        return bind(s, p.name, t) if t != p else s
    if isinstance(p, Compound):
        if not isinstance(t, Compound) or p.functor != t.functor or len(p.args) != len(t.args):
            return None
        for x, y in zip(p.args, t.args):
            s = match_term(x, y, s)
            if s is None:
                return None
        return s
    return s if p == t else None


def match_atom(p: Atom, t: Atom, s: Subst) -> Optional[Subst]:
    if p.pred != t.pred or len(p.args) != len(t.args):
        return None
    for x, y in zip(p.args, t.args):
        s = match_term(x, y, s)
        if s is None:
            return None
    return s


def _match_constraint(p: Constraint, t: Constraint, s: Subst) -> Optional[Subst]:
    if p.op != t.op:
        return None
    s = match_term(p.lhs, t.lhs, s)
    return None if s is None else match_term(p.rhs, t.rhs, s)


def _match_multiset(ps: Sequence, ts: list, s: Subst) -> Optional[Subst]:
    if not ps:
        return s
    head, rest = ps[0], ps[1:]
    for i, t in enumerate(ts):
        s2 = _match_constraint(head, t, s)
        if s2 is not None:
            s3 = _match_multiset(rest, ts[:i] + ts[i + 1:], s2)
            if s3 is not None:
                return s3
    return None


def _rename_apart(entry: CFormula, avoid: set) -> CFormula:
    names = variables(entry)
    clash = [n for n in names if n in avoid]
    if not clash:
        return entry
    taken = avoid | set(names)
    ren = {}
    for n in clash:
        k = 1
        while f"{n}_{k}" in taken:
            k += 1
        ren[n] = Var(f"{n}_{k}")
        taken.add(f"{n}_{k}")
    return apply_subst(entry, ren)


def match_cformula(cf: CFormula, entry: CFormula, s: Optional[Subst] = None) -> Optional[Subst]:
    """Extend ``s`` so that ``cf`` instantiated by it equals ``entry``.

    Variables of ``entry`` are treated as constants after renaming them
    away from the pattern's variables. Constraint sets must match as
    multisets, so a bare pattern only matches unconstrained entries.
    """
    s = {} if s is None else s
    if len(cf.constraints) != len(entry.constraints):
        return None
    if not is_ground(entry):
        avoid = set(variables(cf)) | set(s)
        for v in s.values():
            avoid.update(iter_vars(v))
        entry = _rename_apart(entry, avoid)
    s = match_atom(cf.atom, entry.atom, s)
    if s is None:
        return None
    return _match_multiset(cf.constraints, list(entry.constraints), s)


# ---------------------------------------------------------------------------
# states of affairs


@dataclass(frozen=True)
class State:
    """Insertion-ordered set of constrained formulae."""

    entries: tuple = ()
    _members: frozenset = field(default=frozenset(), repr=False, compare=False)

    def __post_init__(self):
        entries = tuple(dict.fromkeys(as_cformula(e) for e in self.entries))
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_members", frozenset(entries))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, cf):
        return as_cformula(cf) in self._members

    def as_set(self) -> frozenset:
        return self._members


def _check_addable(cf: CFormula) -> None:
    constrained = set()
    for c in cf.constraints:
        constrained.update(iter_vars(c))
    free = [v for v in variables(cf.atom) if v not in constrained]
    if free:
        raise NonGroundFact(f"cannot add formula with unbound variable(s) {', '.join(free)}")


def state_add(state: State, cf) -> State:
    """Append ``cf`` unless already present.

    A formula may keep variables only when each of them is restricted by
    one of its own constraints (a universally quantified entry such as
    ``q(X):{X>2}``); a bare free variable raises :class:`NonGroundFact`.
    """
    cf = as_cformula(cf)
    _check_addable(cf)
    if cf in state:
        return state
    return State(state.entries + (cf,))


def state_del(state: State, cf) -> State:
    cf = as_cformula(cf)
    if cf not in state:
        return state
    return State(tuple(e for e in state.entries if e != cf))


def match_in_state(state: State, cf, s: Optional[Subst] = None) -> list:
    """One substitution per matching entry, in insertion order."""
    cf = as_cformula(cf)
    s = {} if s is None else s
    out = []
    for entry in state.entries:
        m = match_cformula(cf, entry, s)
        if m is not None:
            out.append(m)
    return out


@dataclass(frozen=True)
class EventSet:
    """Speech acts emitted in one step, as ``(agent, atom)`` pairs in arrival order.

    The agent tag is metadata: rules only ever see :attr:`formulas`, the
    duplicate-free sequence of atoms.
    """

    items: tuple = ()

    def __post_init__(self):
        items = tuple((str(ag), a) for ag, a in self.items)
        for ag, a in items:
            if not isinstance(a, Atom):
                raise TypeError(f"event must be an Atom, got {type(a).__name__}")
            if not is_ground(a):
                raise NonGroundEvent(f"event from {ag} is not ground: {a}")
        object.__setattr__(self, "items", items)

    @classmethod
    def of(cls, *atoms, agent="env") -> "EventSet":
        return cls(tuple((agent, a) for a in atoms))

    @property
    def formulas(self) -> tuple:
        return tuple(dict.fromkeys(a for _, a in self.items))

    def __len__(self):
        return len(self.items)
