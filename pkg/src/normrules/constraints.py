"""Ground arithmetic, constraint checking and a difference-logic satisfiability test.

The decidable fragment accepted by :func:`sat` is: ground constraints,
single-variable bounds (``X op c``), and differences (``X op Y + c``), each
side being a linear expression that normalises to one of those shapes.
``!=`` is handled exactly by splitting on the excluded point.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from typing import Iterable, Optional

from .errors import DivisionByZero, NonGround, TypeMismatch, UnknownFunctor, UnsupportedConstraint
from .kernel import Compound, Const, Constraint, Num, Subst, Var, apply_subst, is_ground

_FLIP = {"=": "=", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


def eval_term(t) -> Fraction:
    if isinstance(t, Num):
        return t.value
    if isinstance(t, Var):
        raise NonGround(f"variable {t.name} is unbound")
    if isinstance(t, Const):
        raise UnknownFunctor(f"{t.name} is not a number")
    if isinstance(t, Compound):
        if t.functor == "-" and len(t.args) == 1:
            return -eval_term(t.args[0])
        if t.functor == "+" and len(t.args) == 1:
            return eval_term(t.args[0])
        if len(t.args) == 2 and t.functor in ("+", "-", "*", "/"):
            a, b = eval_term(t.args[0]), eval_term(t.args[1])
            if t.functor == "+":
                return a + b
            if t.functor == "-":
                return a - b
            if t.functor == "*":
                return a * b
            if b == 0:
                raise DivisionByZero("division by zero")
            return a / b
        raise UnknownFunctor(f"{t.functor}/{len(t.args)} is not arithmetic")
    raise TypeError(f"not a term: {t!r}")


def _compare(a, op: str, b) -> bool:
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def _numeric(t) -> Optional[Fraction]:
    try:
        return eval_term(t)
    except UnknownFunctor:
        return None


def holds_constraint(c: Constraint) -> bool:
    """Decide a ground constraint.

    Numbers compare as rationals. Anything else only supports ``=`` and
    ``!=`` (syntactic identity); ordering a non-number is a TypeMismatch.
    """
    if not is_ground(c):
        raise NonGround("constraint is not ground")
    a, b = _numeric(c.lhs), _numeric(c.rhs)
    if a is not None and b is not None:
        return _compare(a, c.op, b)
    if c.op not in ("=", "!="):
        raise TypeMismatch(f"ordered comparison {c.op} on non-numbers")
    same = c.lhs == c.rhs
    return same if c.op == "=" else not same


# ---------------------------------------------------------------------------
# linear normal form


def _linear(t):
    """Return ``(coefficients, constant)`` for a linear arithmetic term."""
    if isinstance(t, Num):
        return {}, t.value
    if isinstance(t, Var):
        return {t.name: Fraction(1)}, Fraction(0)
    if isinstance(t, Compound) and t.functor in ("+", "-", "*", "/"):
        if len(t.args) == 1:
            co, k = _linear(t.args[0])
            if t.functor == "-":
                return {v: -a for v, a in co.items()}, -k
            if t.functor == "+":
                return co, k
        elif len(t.args) == 2:
            (ca, ka), (cb, kb) = _linear(t.args[0]), _linear(t.args[1])
            if t.functor in ("+", "-"):
                sign = 1 if t.functor == "+" else -1
                co = dict(ca)
                for v, a in cb.items():
                    co[v] = co.get(v, 0) + sign * a
                return {v: a for v, a in co.items() if a != 0}, ka + sign * kb
            if t.functor == "*":
                if not ca:
                    return {v: ka * a for v, a in cb.items() if ka != 0}, ka * kb
                if not cb:
                    return {v: kb * a for v, a in ca.items() if kb != 0}, ka * kb
                raise UnsupportedConstraint("product of two variables")
            if cb:
                raise UnsupportedConstraint("division by a variable")
            if kb == 0:
                raise DivisionByZero("division by zero")
            return {v: a / kb for v, a in ca.items()}, ka / kb
    raise UnsupportedConstraint(f"non-arithmetic term in a non-ground constraint: {t!r}")


ZERO = None  # the reference node of the difference graph


def normalize(c: Constraint):
    """Rewrite a non-ground supported constraint as ``(x, y, op, k)``: x - y op k.

    ``y`` is :data:`ZERO` for single-variable bounds.
    """
    ca, ka = _linear(c.lhs)
    cb, kb = _linear(c.rhs)
    co = dict(ca)
    for v, a in cb.items():
        co[v] = co.get(v, 0) - a
    co = {v: a for v, a in co.items() if a != 0}
    k = kb - ka  # sum(co) op k
    op = c.op
    if not co:
        return None, None, op, k
    if len(co) == 1:
        (x, a), = co.items()
        if a < 0:
            op = _FLIP[op]
        return x, ZERO, op, k / a
    if len(co) == 2:
        (x, a), (y, b) = co.items()
        if a == -b:
            if a < 0:
                x, y, a = y, x, -a
            return x, y, op, k / a
    raise UnsupportedConstraint("constraint is not a bound or a difference")


def _feasible(edges, nodes) -> bool:
    """Negative-cycle test on weights ``(value, strict)`` with strict < non-strict."""
    idx = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    inf = None
    dist = [[inf] * n for _ in range(n)]
    for i in range(n):
        dist[i][i] = (Fraction(0), False)

    def less(a, b):
        if b is inf:
            return a is not inf
        if a is inf:
            return False
        return a[0] < b[0] or (a[0] == b[0] and a[1] and not b[1])

    for u, v, w in edges:  # v - u <= w  (strict if w[1])
        i, j = idx[u], idx[v]
        if less(w, dist[i][j]):
            dist[i][j] = w
    for k in range(n):
        dk = dist[k]
        for i in range(n):
            dik = dist[i][k]
            if dik is inf:
                continue
            di = dist[i]
            for j in range(n):
                dkj = dk[j]
                if dkj is inf:
                    continue
                cand = (dik[0] + dkj[0], dik[1] or dkj[1])
                if less(cand, di[j]):
                    di[j] = cand
        for i in range(n):
            d = dist[i][i]
            if d[0] < 0 or (d[0] == 0 and d[1]):
                return False
    return True


def _edges(x, y, op, k):
    # x - y op k ;  edge (u, v, (w, strict)) encodes v - u <= w
    if op == "<=":
        return [(y, x, (k, False))]
    if op == "<":
        return [(y, x, (k, True))]
    if op == ">=":
        return [(x, y, (-k, False))]
    if op == ">":
        return [(x, y, (-k, True))]
    if op == "=":
        return [(y, x, (k, False)), (x, y, (-k, False))]
    raise AssertionError(op)


def sat(constraints: Iterable[Constraint]) -> bool:
    """True iff some rational assignment satisfies every constraint."""
    edges, splits, nodes = [], [], {ZERO: None}
    for c in constraints:
        if is_ground(c):
            if not holds_constraint(c):
                return False
            continue
        x, y, op, k = normalize(c)
        if x is None:
            if not _compare(Fraction(0), op, k):
                return False
            continue
        nodes.setdefault(x)
        nodes.setdefault(y)
        if op == "!=":
            splits.append((x, y, k))
        else:
            edges.extend(_edges(x, y, op, k))
    order = list(nodes)
    for choice in product(("<", ">"), repeat=len(splits)):
        extra = []
        for (x, y, k), op in zip(splits, choice):
            extra.extend(_edges(x, y, op, k))
        if _feasible(edges + extra, order):
            return True
    return False


def seteq(left, right) -> bool:
    """Mutual inclusion plus equal length, exactly as the definition reads."""
    left, right = list(left), list(right)
    return len(left) == len(right) and all(x in right for x in left) and all(y in left for y in right)


def constraint_member(c: Constraint, cs, s: Optional[Subst] = None) -> bool:
    s = s or {}
    return apply_subst(c, s) in [apply_subst(g, s) for g in cs]
