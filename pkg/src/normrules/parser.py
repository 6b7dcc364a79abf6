"""Text <-> rule base.

Programs are sequences of ``rule(Id, Body).`` clauses with ``%`` line
comments. ``serialize`` emits the canonical form that ``parse_program``
reads back to an identical rule base.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from .errors import ArityWarning, DuplicateRuleId, ParseError
from .kernel import (
    ARITH_OPS, TUPLE, Atom, CFormula, Compound, Const, Constraint, Num, Var, as_cformula,
)
from .rules import (
    ECA, TRUE, Add, Builtin, Conj, Del, Expectation, Fact, Force, If, Ignore, Member, Not,
    Prevent, RuleBase, RuleUnit, Sat, SetEq, Test, Time, TrueCond, conj, desugar_expectations,
)

KEYWORDS = frozenset({
    "on", "if", "do", "ignore", "prevent", "force", "expected", "not", "sat", "seteq",
    "in", "time", "true", "add", "del", "builtin", "rule",
})
_HYPHEN_KW = ("fulfilled-if", "violated-if", "sanction-do")
_RELOPS = {"=": "=", "!=": "!=", "\\=": "!=", "≠": "!=", ">": ">", ">=": ">=", "≥": ">=",
           "<": "<", "<=": "<=", "=<": "<=", "≤": "<="}
_ALIASES = {"×": "*", "−": "-"}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<qname>'(?:[^'\\\n]|\\.)*')
  | (?P<hkw>(?:fulfilled-if|violated-if|sanction-do)(?![A-Za-z0-9_]))
  | (?P<name>[a-z][A-Za-z0-9_]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<num>[0-9]+(?:\.[0-9]+)?)
  | (?P<punct>!=|\\=|>=|<=|=<|[≠≥≤×−∅()\[\]{},.:&+\-*/=<>])
""", re.VERBOSE)

_PLAIN_NAME = re.compile(r"[a-z][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str
    expected: frozenset = field(default=frozenset())

    def __str__(self):
        msg = f"{self.line}:{self.col}: {self.message}"
        if self.expected:
            msg += " (expected " + ", ".join(sorted(self.expected)) + ")"
        return msg


@dataclass(frozen=True)
class Token:
    kind: str  # name, qname, var, num, punct, hkw, eof
    value: str
    line: int
    col: int


class _Abort(Exception):
    def __init__(self, diag):
        self.diag = diag


def tokenize(text: str) -> list:
    toks = []
    line, line_start, pos = 1, 0, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise _Abort(Diagnostic(line, col, f"unexpected character {text[pos]!r}"))
        kind = m.lastgroup
        value = m.group()
        if kind == "ws" or kind == "comment":
            nl = value.count("\n")
            if nl:
                line += nl
                line_start = pos + value.rindex("\n") + 1
        elif kind == "qname":
            toks.append(Token("qname", re.sub(r"\\(.)", r"\1", value[1:-1]), line, col))
        else:
            if kind == "punct":
                value = _ALIASES.get(value, value)
            toks.append(Token(kind, value, line, col))
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


def make_compound(functor: str, args) -> Union[Compound, Num]:
    """Build a compound, folding literal rationals (``6/5``, ``-3``) into numbers."""
    args = tuple(args)
    if functor == "/" and len(args) == 2 and all(isinstance(a, Num) for a in args) and args[1].value != 0:
        return Num(args[0].value / args[1].value)
    if functor == "-" and len(args) == 1 and isinstance(args[0], Num):
        return Num(-args[0].value)
    return Compound(functor, args)


class _Parser:
    def __init__(self, tokens, istar=True):
        self.toks = tokens
        self.i = 0
        self.istar = istar
        self.anon = 0
        self.expected = set()

    # -- token helpers ----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        self.expected = set()
        return t

    def is_kw(self, word, k=0) -> bool:
        t = self.toks[min(self.i + k, len(self.toks) - 1)]
        if t.kind == "name" and t.value == word:
            return True
        if t.kind == "hkw" and t.value == word:
            return True
        self.expected.add(repr(word))
        return False

    def is_punct(self, p, k=0) -> bool:
        t = self.toks[min(self.i + k, len(self.toks) - 1)]
        if t.kind == "punct" and t.value == p:
            return True
        self.expected.add(repr(p))
        return False

    def fail(self, message=None, tok=None):
        t = tok or self.tok
        if message is None:
            found = "end of input" if t.kind == "eof" else repr(t.value)
            message = f"unexpected {found}"
        raise _Abort(Diagnostic(t.line, t.col, message, frozenset(self.expected)))

    def punct(self, p):
        if not self.is_punct(p):
            self.fail()
        return self.advance()

    def kw(self, word):
        if not self.is_kw(word):
            self.fail()
        return self.advance()

    def at_empty_set(self) -> bool:
        if self.is_punct("∅"):
            return True
        return self.is_punct("[") and self.is_punct("]", 1)

    def take_empty_set(self):
        if self.tok.value == "∅":
            self.advance()
        else:
            self.advance()
            self.advance()

    # -- program ----------------------------------------------------------

    def program(self):
        entries, diags = [], []
        while self.tok.kind != "eof":
            start = self.i
            try:
                entries.append(self.clause())
            except _Abort as exc:
                diags.append(exc.diag)
                self.i = max(self.i, start + 1)
                self.recover()
        return entries, diags

    def recover(self):
        depth = 0
        while self.tok.kind != "eof":
            t = self.advance()
            if t.kind == "punct":
                if t.value in "([{":
                    depth += 1
                elif t.value in ")]}":
                    depth = max(0, depth - 1)
                elif t.value == "." and depth == 0:
                    return

    def clause(self):
        self.kw("rule")
        self.punct("(")
        rid = self.atom()
        self.punct(",")
        body = self.rule_body()
        self.punct(")")
        self.punct(".")
        return rid, body

    def rule_body(self):
        if self.is_kw("on"):
            self.advance()
            events = self.events()
            self.kw("if")
            cond = self.condition()
            self.kw("do")
            return ECA(events, cond, self.actions())
        if self.is_kw("if"):
            self.advance()
            cond = self.condition()
            self.kw("do")
            return If(cond, self.actions())
        if self.is_kw("ignore"):
            self.advance()
            events = self.events()
            self.kw("if")
            return Ignore(events, self.condition())
        if self.is_kw("prevent"):
            self.advance()
            target = self.condition()
            self.kw("if")
            return Prevent(target, self.condition())
        if self.is_kw("force"):
            self.advance()
            forced = self.event_set()
            self.kw("on")
            events = self.event_set()
            self.kw("if")
            cond = self.condition()
            self.kw("do")
            return Force(forced, events, cond, self.actions())
        if self.is_kw("expected"):
            self.advance()
            event = self.atom()
            self.kw("on")
            events = self.events()
            self.kw("if")
            cond = self.condition()
            self.kw("fulfilled-if")
            fulfilled = self.condition()
            self.kw("violated-if")
            violated = self.condition()
            self.kw("sanction-do")
            return Expectation(event, events, cond, fulfilled, violated, self.actions())
        self.fail()

    def events(self):
        out = [self.atom()]
        while self.is_punct(","):
            self.advance()
            out.append(self.atom())
        return tuple(out)

    def event_set(self):
        if self.at_empty_set():
            self.take_empty_set()
            return ()
        return self.events()

    # -- conditions -------------------------------------------------------

    def condition(self):
        parts = [self.cond_primary()]
        while self.is_punct("&"):
            self.advance()
            parts.append(self.cond_primary())
        return conj(*parts)

    def cond_primary(self):
        if self.is_kw("true"):
            self.advance()
            return TRUE
        if self.is_kw("not") and self.is_punct("(", 1):
            self.advance()
            self.advance()
            c = self.condition()
            self.punct(")")
            return Not(c)
        if self.is_kw("sat") and self.is_punct("(", 1):
            self.advance()
            self.advance()
            items = self.constraint_set()
            self.punct(")")
            return Sat(items)
        if self.is_kw("seteq") and self.is_punct("(", 1):
            self.advance()
            self.advance()
            left = self.item_set()
            self.punct(",")
            right = self.item_set()
            self.punct(")")
            return SetEq(left, right)
        if self.is_kw("time") and self.is_punct("(", 1):
            self.advance()
            self.advance()
            t = self.term()
            if not isinstance(t, (Var, Num)):
                self.fail("time/1 takes a variable or a number")
            self.punct(")")
            return Time(t)
        if self.is_kw("builtin"):
            return self.builtin()
        start = self.tok
        t = self.term()
        op = self.relop()
        if op is not None:
            c = Constraint(t, op, self.term())
            if self.is_kw("in"):
                self.advance()
                return Member(c, self.constraint_set())
            return Test(c)
        atom = self.to_atom(t, start)
        return Fact(self.constrained(atom))

    def relop(self) -> Optional[str]:
        t = self.tok
        if t.kind == "punct" and t.value in _RELOPS:
            self.advance()
            return _RELOPS[t.value]
        self.expected.update({"'='", "'<'", "'>'"})
        return None

    def constrained(self, atom):
        if self.is_punct(":"):
            self.advance()
            return CFormula(atom, self.constraint_set(braces_only=True))
        return CFormula(atom)

    def item_set(self):
        if self.is_punct("∅"):
            self.advance()
            return ()
        if self.is_punct("["):
            close = "]"
        elif self.is_punct("{"):
            close = "}"
        else:
            self.fail()
        self.advance()
        items = []
        if not self.is_punct(close):
            while True:
                t = self.term()
                op = self.relop()
                items.append(t if op is None else Constraint(t, op, self.term()))
                if not self.is_punct(","):
                    break
                self.advance()
        self.punct(close)
        return tuple(items)

    def constraint_set(self, braces_only=False):
        tok = self.tok
        if braces_only and not self.is_punct("{"):
            self.fail()
        items = self.item_set()
        if any(not isinstance(x, Constraint) for x in items):
            self.fail("expected a set of constraints", tok)
        return items

    def builtin(self):
        self.kw("builtin")
        self.punct("(")
        t = self.tok
        if t.kind not in ("name", "qname"):
            self.expected.add("builtin name")
            self.fail()
        self.advance()
        args = []
        while self.is_punct(","):
            self.advance()
            args.append(self.term())
        self.punct(")")
        return Builtin(t.value, tuple(args))

    # -- actions ----------------------------------------------------------

    def actions(self):
        if self.at_empty_set():
            self.take_empty_set()
            return ()
        out = [self.action()]
        while self.is_punct(","):
            self.advance()
            out.append(self.action())
        return tuple(out)

    def action(self):
        if self.is_kw("builtin"):
            return self.builtin()
        if self.is_kw("add"):
            kind = Add
        elif self.is_kw("del"):
            kind = Del
        else:
            self.fail()
        self.advance()
        self.punct("(")
        unit = self.open_unit(kind)
        self.punct(")")
        return kind(unit)

    def open_unit(self, kind):
        if self.is_kw("rule") and self.is_punct("(", 1):
            tok = self.tok
            if not self.istar:
                self.fail("rule-valued actions need I* mode", tok)
            self.advance()
            self.advance()
            rid = self.atom()
            self.punct(",")
            if self.tok.kind == "var" and self.tok.value == "_":
                if kind is Add:
                    self.fail("add(rule(Id, _)) needs a rule body")
                self.advance()
                body = None
            else:
                body = self.rule_body()
            self.punct(")")
            return RuleUnit(rid, body)
        return self.constrained(self.atom())

    # -- terms ------------------------------------------------------------

    def atom(self) -> Atom:
        start = self.tok
        t = self.tok
        if t.kind not in ("name", "qname") or (t.kind == "name" and t.value in KEYWORDS):
            self.expected.add("atomic formula")
            self.fail()
        return self.to_atom(self.term(), start)

    def to_atom(self, t, tok) -> Atom:
        if isinstance(t, Const):
            return Atom(t.name)
        if isinstance(t, Compound) and not self._operator_shaped(t, tok):
            return Atom(t.functor, t.args)
        self.expected.add("atomic formula")
        self.fail("expected an atomic formula", tok)

    @staticmethod
    def _operator_shaped(t: Compound, tok) -> bool:
        # a quoted name keeps its functor as a predicate, e.g. '+'(a,b)
        if tok.kind == "qname":
            return False
        return t.functor in ARITH_OPS or t.functor == TUPLE

    def term(self):
        left = self.mul()
        while self.tok.kind == "punct" and self.tok.value in ("+", "-"):
            op = self.advance().value
            left = make_compound(op, (left, self.mul()))
        self.expected.update({"'+'", "'-'"})
        return left

    def mul(self):
        left = self.unary()
        while self.tok.kind == "punct" and self.tok.value in ("*", "/"):
            op = self.advance().value
            left = make_compound(op, (left, self.unary()))
        self.expected.update({"'*'", "'/'"})
        return left

    def unary(self):
        if self.is_punct("-"):
            self.advance()
            return make_compound("-", (self.unary(),))
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(Fraction(t.value))
        if t.kind == "var":
            self.advance()
            if t.value == "_":
                self.anon += 1
                return Var(f"_G{self.anon}")
            return Var(t.value)
        if t.kind == "qname" or (t.kind == "name" and t.value not in KEYWORDS):
            self.advance()
            if self.is_punct("("):
                self.advance()
                args = self.term_list(")")
                return make_compound(t.value, args) if t.kind == "qname" else Compound(t.value, args)
            return Const(t.value)
        if self.is_punct("("):
            self.advance()
            items = self.term_list(")")
            return items[0] if len(items) == 1 else Compound(TUPLE, items)
        self.expected.update({"term"})
        self.fail()

    def term_list(self, close):
        items = [self.term()]
        while self.is_punct(","):
            self.advance()
            items.append(self.term())
        self.punct(close)
        return tuple(items)


def _decode(text) -> str:
    if isinstance(text, (bytes, bytearray)):
        try:
            return bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            head = bytes(text[:exc.start])
            line = head.count(b"\n") + 1
            col = exc.start - (head.rfind(b"\n") + 1) + 1
            raise ParseError([Diagnostic(line, col, "invalid UTF-8")]) from None
    return text


def _run(text, rule, istar=True):
    text = _decode(text)
    try:
        p = _Parser(tokenize(text), istar=istar)
        result = rule(p)
    except _Abort as exc:
        raise ParseError([exc.diag]) from None
    except RecursionError:
        raise ParseError([Diagnostic(1, 1, "expression nested too deeply")]) from None
    return result


def parse_program(text, *, istar: bool = True, desugar: bool = False) -> RuleBase:
    """Parse a whole program into a :class:`RuleBase`.

    Raises :class:`ParseError` with every clause-level diagnostic, and
    :class:`DuplicateRuleId` when two clauses share an id. Predicates used
    with more than one arity produce an :class:`ArityWarning`.
    """

    def whole(p: _Parser):
        entries, diags = p.program()
        if diags:
            raise ParseError(diags)
        return entries

    entries = _run(text, whole, istar)
    seen = {}
    for rid, _ in entries:
        if rid in seen:
            raise DuplicateRuleId(f"duplicate rule id {render(rid)}")
        seen[rid] = True
    rb = RuleBase(entries)
    for msg in check_arities(rb):
        warnings.warn(msg, ArityWarning, stacklevel=2)
    return desugar_expectations(rb) if desugar else rb


def _eof(p: _Parser):
    if p.tok.kind != "eof":
        p.fail()


def parse_term(text):
    def rule(p):
        t = p.term()
        _eof(p)
        return t
    return _run(text, rule)


def parse_atom(text) -> Atom:
    def rule(p):
        a = p.atom()
        _eof(p)
        return a
    return _run(text, rule)


def parse_cformula(text) -> CFormula:
    def rule(p):
        cf = p.constrained(p.atom())
        _eof(p)
        return cf
    return _run(text, rule)


def parse_condition(text):
    def rule(p):
        c = p.condition()
        _eof(p)
        return c
    return _run(text, rule)


def parse_facts(text) -> list:
    """Facts file: one constrained formula per clause, each ended by ``.``."""

    def rule(p):
        out = []
        while p.tok.kind != "eof":
            out.append(p.constrained(p.atom()))
            p.punct(".")
        return out
    return _run(text, rule)


# ---------------------------------------------------------------------------
# arity check


def _atoms_of(x, out):
    if isinstance(x, Atom):
        out.append(x)
    elif isinstance(x, CFormula):
        out.append(x.atom)
    elif isinstance(x, (tuple, list)):
        for e in x:
            _atoms_of(e, out)
    elif isinstance(x, RuleUnit):
        if x.rule is not None:
            _atoms_of(x.rule, out)
    elif hasattr(x, "__dataclass_fields__") and not isinstance(x, (Constraint, Builtin)):
        for f in x.__dataclass_fields__:
            _atoms_of(getattr(x, f), out)


def check_arities(rb: RuleBase) -> list:
    arities, msgs = {}, []
    for rid, rule in rb:
        atoms = []
        _atoms_of(rule, atoms)
        for a in atoms:
            first = arities.setdefault(a.pred, (a.arity, rid))
            if first[0] != a.arity:
                msgs.append(f"predicate {a.pred!r} used with arity {a.arity} in rule {render(rid)}"
                            f" but arity {first[0]} in rule {render(first[1])}")
                arities[a.pred] = (a.arity, rid)
    return msgs


# ---------------------------------------------------------------------------
# rendering

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def render_name(name: str) -> str:
    if _PLAIN_NAME.match(name) and name not in KEYWORDS:
        return name
    return "'" + name.replace("\\", "\\\\").replace("'", "\\'") + "'"


def render_number(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def _prec(t) -> int:
    if isinstance(t, Num):
        return 3 if t.value.denominator == 1 and t.value >= 0 else 0
    if isinstance(t, Compound):
        if len(t.args) == 2 and t.functor in _PREC:
            return _PREC[t.functor]
        if len(t.args) == 1 and t.functor == "-":
            return 2.5
    return 3


def _operand(t, min_prec) -> str:
    s = render_term(t)
    return f"({s})" if _prec(t) < min_prec else s


def render_term(t) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        return render_name(t.name)
    if isinstance(t, Num):
        return render_number(t.value)
    if isinstance(t, Compound):
        if len(t.args) == 2 and t.functor in _PREC:
            p = _PREC[t.functor]
            return f"{_operand(t.args[0], p)}{t.functor}{_operand(t.args[1], p + 1)}"
        if len(t.args) == 1 and t.functor == "-":
            return f"-{_operand(t.args[0], 3)}"
        if t.functor == TUPLE:
            return "(" + ",".join(render_term(a) for a in t.args) + ")"
        return f"{render_name(t.functor)}({','.join(render_term(a) for a in t.args)})"
    raise TypeError(f"not a term: {t!r}")


def render_atom(a: Atom) -> str:
    if not a.args:
        return render_name(a.pred)
    return f"{render_name(a.pred)}({','.join(render_term(x) for x in a.args)})"


def render_constraint(c: Constraint) -> str:
    return f"{render_term(c.lhs)}{c.op}{render_term(c.rhs)}"


def _render_items(items) -> str:
    return ",".join(render_constraint(x) if isinstance(x, Constraint) else render_term(x) for x in items)


def render_cformula(cf) -> str:
    cf = as_cformula(cf)
    if not cf.constraints:
        return render_atom(cf.atom)
    return f"{render_atom(cf.atom)}:{{{_render_items(cf.constraints)}}}"


def render(x) -> str:
    """Canonical text of any kernel or rule-language value."""
    if isinstance(x, Atom):
        return render_atom(x)
    if isinstance(x, CFormula):
        return render_cformula(x)
    if isinstance(x, Constraint):
        return render_constraint(x)
    if isinstance(x, (Var, Const, Num, Compound)):
        return render_term(x)
    if isinstance(x, (TrueCond, Conj, Not, Sat, SetEq, Member, Time, Fact, Test)):
        return render_condition(x)
    if isinstance(x, (Add, Del, Builtin)):
        return render_action(x)
    return render_rule(x)


def render_condition(c) -> str:
    if isinstance(c, TrueCond):
        return "true"
    if isinstance(c, Conj):
        return " & ".join(render_condition(p) for p in c.parts)
    if isinstance(c, Not):
        return f"not({render_condition(c.cond)})"
    if isinstance(c, Sat):
        return f"sat({{{_render_items(c.constraints)}}})"
    if isinstance(c, SetEq):
        return f"seteq([{_render_items(c.left)}],[{_render_items(c.right)}])"
    if isinstance(c, Member):
        return f"{render_constraint(c.constraint)} in {{{_render_items(c.constraints)}}}"
    if isinstance(c, Time):
        return f"time({render_term(c.term)})"
    if isinstance(c, Fact):
        return render_cformula(c.cf)
    if isinstance(c, Test):
        return render_constraint(c.constraint)
    if isinstance(c, Builtin):
        return _render_builtin(c)
    raise TypeError(f"not a condition: {c!r}")


def _render_builtin(b: Builtin) -> str:
    return "builtin(" + ",".join([render_name(b.name)] + [render_term(a) for a in b.args]) + ")"


def render_action(a) -> str:
    if isinstance(a, Builtin):
        return _render_builtin(a)
    word = "add" if isinstance(a, Add) else "del"
    u = a.unit
    if isinstance(u, RuleUnit):
        body = "_" if u.rule is None else render_rule(u.rule)
        return f"{word}(rule({render_atom(u.id)}, {body}))"
    return f"{word}({render_cformula(u)})"


def _render_actions(acts) -> str:
    return ", ".join(render_action(a) for a in acts) if acts else "[]"


def _render_events(evs) -> str:
    return ", ".join(render_atom(e) for e in evs) if evs else "[]"


def render_rule(r) -> str:
    if isinstance(r, ECA):
        return f"on {_render_events(r.events)} if {render_condition(r.cond)} do {_render_actions(r.actions)}"
    if isinstance(r, If):
        return f"if {render_condition(r.cond)} do {_render_actions(r.actions)}"
    if isinstance(r, Ignore):
        return f"ignore {_render_events(r.events)} if {render_condition(r.cond)}"
    if isinstance(r, Prevent):
        return f"prevent {render_condition(r.target)} if {render_condition(r.cond)}"
    if isinstance(r, Force):
        return (f"force {_render_events(r.forced)} on {_render_events(r.events)}"
                f" if {render_condition(r.cond)} do {_render_actions(r.actions)}")
    if isinstance(r, Expectation):
        return (f"expected {render_atom(r.event)} on {_render_events(r.events)}"
                f" if {render_condition(r.cond)} fulfilled-if {render_condition(r.fulfilled)}"
                f" violated-if {render_condition(r.violated)} sanction-do {_render_actions(r.sanction)}")
    raise TypeError(f"not a rule: {r!r}")


def serialize(rb: RuleBase) -> str:
    return "".join(f"rule({render_atom(rid)}, {render_rule(r)}).\n" for rid, r in rb)
