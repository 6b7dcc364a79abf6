import glob
import random
import warnings
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from normrules.errors import ArityWarning, DuplicateRuleId, ParseError
from normrules.harness.mlp import MlpSpec, gen_mlp_program
from normrules.kernel import CFormula, Constraint, Num, Var
from normrules.parser import parse_program, render_cformula, serialize
from normrules.rules import ECA, Add, Expectation, Force, If, Prevent, RuleBase, desugar_expectations

from progen import generate

ROOT = Path(__file__).resolve().parent.parent


def corpus_texts():
    paths = sorted(glob.glob(str(ROOT / "scenarios" / "*" / "*.inst")))
    paths += sorted(glob.glob(str(ROOT / "tests" / "corpus" / "*.inst")))
    return {Path(p).relative_to(ROOT).as_posix(): Path(p).read_text(encoding="utf-8") for p in paths}


def test_single_eca():
    rb = parse_program("rule(r1, on i(X,1) if true do add(o(X,1))).")
    assert len(rb) == 1
    ((rid, r),) = rb
    assert rid.pred == "r1" and isinstance(r, ECA)


def test_prevent_target():
    ((_, r),) = parse_program("rule(p1, prevent q1 if true).")
    assert isinstance(r, Prevent) and r.target.cf.atom.pred == "q1"


def test_empty_event_set_rejected_on_eca():
    with pytest.raises(ParseError) as exc:
        parse_program("rule(bad, on if true do add(p)).")
    d = exc.value.diagnostics[0]
    assert (d.line, d.col) == (1, 14)


def test_empty_trigger_allowed_on_force():
    ((_, r),) = parse_program("rule(f, force tick on [] if true do []).")
    assert isinstance(r, Force) and r.events == () and r.actions == ()


def test_diagnostics_per_clause():
    text = "rule(a, on x if true do add(p)).\nrule(b, on if).\nrule(c, if true do ).\n"
    with pytest.raises(ParseError) as exc:
        parse_program(text)
    assert [d.line for d in exc.value.diagnostics] == [2, 3]


def test_duplicate_id():
    with pytest.raises(DuplicateRuleId):
        parse_program("rule(a, if p do add(q)).\nrule(a, if q do add(r)).")


def test_arity_warning():
    with pytest.warns(ArityWarning):
        parse_program("rule(a, if p(1) do add(p(1,2))).")


def test_rule_actions_need_istar():
    with pytest.raises(ParseError):
        parse_program("rule(a, on x if true do add(rule(b, if p do add(q)))).", istar=False)


def test_constrained_add_roundtrip():
    rb = parse_program("rule(a, if true do add(q(X):{X>2})).")
    ((_, r),) = rb
    assert r.actions == (Add(CFormula(r.actions[0].unit.atom, (Constraint(Var("X"), ">", Num(2)),))),)
    assert parse_program(serialize(rb)) == rb


def test_empty_rule_base_serializes_empty():
    assert serialize(RuleBase()) == ""
    assert parse_program("% nothing\n") == RuleBase()


def test_rationals_render_as_fractions():
    ((_, r),) = parse_program("rule(a, if true do add(v(1.5)), add(w(-0.25)), add(n(4/2))).")
    assert [render_cformula(a.unit) for a in r.actions] == ["v(3/2)", "w(-1/4)", "n(2)"]


def test_desugar_payment_expectation():
    text = Path(ROOT / "scenarios" / "auction_violated" / "program.inst").read_text()
    rb = desugar_expectations(parse_program(text))
    ids = [rid.pred for rid, _ in rb]
    assert ids == ["record_pay", "set_deadline", "payment-add", "payment-fulfil", "payment-sanction"]
    sanction = rb.entries[-1][1]
    assert isinstance(sanction, If)
    assert "C2=C-10" in serialize(RuleBase([rb.entries[-1]]))


def test_desugar_counting_and_idempotence():
    text = Path(ROOT / "tests" / "corpus" / "syntax.inst").read_text()
    rb = parse_program(text)
    n_exp = sum(isinstance(r, Expectation) for _, r in rb)
    two = parse_program(text.replace("rule(exp(1),", "rule(exp(2), expected a on b if true fulfilled-if true "
                                     "violated-if true sanction-do []).\nrule(exp(1),"))
    once = desugar_expectations(two)
    assert len(once) == len(two) + 2 * (n_exp + 1)
    assert desugar_expectations(once) == once
    plain = parse_program("rule(a, if p do add(q)).")
    assert desugar_expectations(plain) == plain


@pytest.mark.parametrize("name", sorted(corpus_texts()))
def test_corpus_roundtrip(name):
    rb = parse_program(corpus_texts()[name])
    text = serialize(rb)
    assert parse_program(text) == rb
    assert serialize(parse_program(text)) == text


def test_generated_mlp_roundtrip():
    spec = MlpSpec.from_dict({"layer_sizes": [3, 2, 2], "activation": "relu", "layers": [
        [{"weights": ["1", "-1/2", "2"], "bias": "1/3"}] * 2, [{"weights": ["1", "1"], "bias": "0"}] * 2]})
    rb = gen_mlp_program(spec)
    assert parse_program(serialize(rb)) == rb


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_generated_programs_roundtrip(data):
    g = generate(lambda lo, hi: data.draw(st.integers(lo, hi)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ArityWarning)
        rb = parse_program(g.program)
        assert parse_program(serialize(rb)) == rb


def _parse_never_crashes(blob: bytes):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ArityWarning)
            parse_program(blob)
    except (ParseError, DuplicateRuleId):
        pass


TOKENS = [b"rule(", b"r1", b", ", b"on ", b"if ", b"do ", b"add(", b"del(", b"p(X)", b")", b").", b"&", b"not(",
          b"{", b"}", b"[", b"]", b"X>1", b"'", b"%", b"\n", b"force ", b"prevent ", b"ignore ", b"expected ",
          b"fulfilled-if ", b"time(", b"sat(", b"1/0", b"\xe2\x89\xa5", b"\xff", b":", b"-", b"_"]


def fuzz_inputs(n, seed=7):
    rng = random.Random(seed)
    for i in range(n):
        if i % 2:
            yield bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 40)))
        else:
            yield b"".join(rng.choice(TOKENS) for _ in range(rng.randint(0, 25)))


def test_fuzz_bytes_never_crash():
    for blob in fuzz_inputs(100_000):
        _parse_never_crashes(blob)


def test_deep_nesting_is_a_diagnostic():
    _parse_never_crashes(b"rule(a, if " + b"not(" * 5000 + b"p" + b")" * 5000 + b" do []).")


@given(st.binary(max_size=200))
def test_fuzz_property(blob):
    _parse_never_crashes(blob)
