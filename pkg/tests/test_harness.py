import io
import json
import random
import subprocess
import sys
from pathlib import Path

import pytest

from normrules.errors import ArityMismatch, NonGroundEvent, ParseError, SpecInvariantViolation, UnknownNeuron
from normrules.harness.cli import main
from normrules.harness.mlp import MlpSpec, gen_mlp_program, make_calculate
from normrules.harness.scenario import (
    Scenario, parse_trace, read_records, record_lines, replay, run_scenario, write_records,
)
from normrules.kernel import Const, Num
from normrules.parser import parse_program, render_atom
from normrules.rules import ECA, If

from mlp_oracle import network_outputs, oracle_forward, random_spec

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


# -- traces --------------------------------------------------------------------


def test_trace_examples():
    (step0,) = parse_trace("0 ag1 i(1,1)\n0 ag2 i(0,1)\n")
    assert [(ag, render_atom(a)) for ag, a in step0.items] == [("ag1", "i(1,1)"), ("ag2", "i(0,1)")]
    assert parse_trace("") == []
    with pytest.raises(NonGroundEvent):
        parse_trace("0 ag1 i(X,1)")


def test_trace_gaps_and_comments():
    steps = parse_trace("% header\n2 a x % trailing\n0 b y\n")
    assert [len(s) for s in steps] == [1, 0, 1]


def test_trace_syntax_error_has_line():
    with pytest.raises(ParseError) as exc:
        parse_trace("0 a ok\nzero a x\n")
    assert exc.value.diagnostics[0].line == 2
    with pytest.raises(ParseError) as exc:
        parse_trace("0 a ok\n1 a p(\n")
    assert exc.value.diagnostics[0].line == 2


# -- scenarios -----------------------------------------------------------------


def final_state(name):
    header, recs = run_scenario(Scenario.load(SCENARIOS / name))
    return [json.loads(x) for x in record_lines(header, recs)[1:]][-1]["state_after"]


def test_prevent_scenario():
    assert sorted(final_state("prevent")) == ["p", "r"]


def test_auction_violation_reduces_credit():
    assert "credit(ag1,90)" in final_state("auction_violated")


def test_zero_step_scenario(tmp_path):
    sc = Scenario.load(SCENARIOS / "prevent")
    sc.steps = 0
    out = tmp_path / "r.jsonl"
    write_records(out, *run_scenario(sc))
    header, recs = read_records(out)
    assert recs == [] and header["steps"] == 0


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIOS.iterdir() if p.is_dir()))
def test_continuity_and_replay(name, tmp_path):
    out = tmp_path / "r.jsonl"
    write_records(out, *run_scenario(Scenario.load(SCENARIOS / name)))
    _, recs = read_records(out)
    for a, b in zip(recs, recs[1:]):
        assert a["state_after"] == b["state_before"]
    assert replay(out) == out.read_text(encoding="utf-8").splitlines()


# -- MLP -----------------------------------------------------------------------

AND = {"layer_sizes": [2, 1], "activation": "step", "layers": [[{"weights": ["1", "1"], "bias": "-1.5"}]]}
XOR = json.loads((SCENARIOS / "mlp_xor" / "xor.json").read_text())


def test_and_gate():
    assert network_outputs(AND, [1, 1]) == [1]
    assert network_outputs(AND, [1, 0]) == [0]


def test_xor_truth_table():
    table = {(a, b): network_outputs(XOR, [a, b])[0] for a in (0, 1) for b in (0, 1)}
    assert table == {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 0}


def test_generated_shapes():
    rb = gen_mlp_program(MlpSpec.from_dict(XOR))
    kinds = [type(r) for _, r in rb]
    assert kinds == [ECA, ECA, If]
    assert len(rb.entries[0][1].events) == 2


def test_empty_layers_rejected():
    with pytest.raises(SpecInvariantViolation):
        MlpSpec.from_dict({"layer_sizes": [2], "layers": []})
    with pytest.raises(SpecInvariantViolation):
        MlpSpec.from_dict({"layer_sizes": [2, 0, 1], "layers": [[], [{"weights": [], "bias": "0"}]]})


def test_calculate_examples():
    calc = make_calculate(MlpSpec.from_dict(AND))
    n = Const("n_1_1")
    assert calc(n, Num(1), Num(1)) == Num(1)
    assert calc(n, Num(0), Num(0)) == Num(0)
    relu = make_calculate(MlpSpec.from_dict({"layer_sizes": [1, 1], "activation": "relu",
                                             "layers": [[{"weights": ["1"], "bias": "0"}]]}))
    assert relu(n, Num(-2)) == Num(0)
    with pytest.raises(UnknownNeuron):
        calc(Const("n_3_1"), Num(1), Num(1))
    with pytest.raises(ArityMismatch):
        calc(n, Num(1))


def test_random_networks_match_forward_pass():
    rng = random.Random(42)
    for _ in range(200):
        spec = random_spec(rng)
        inputs = [rng.randint(0, 1) for _ in range(spec["layer_sizes"][0])]
        assert network_outputs(spec, inputs) == oracle_forward(spec, inputs), spec


# -- CLI -----------------------------------------------------------------------


def test_cli_parse(tmp_path, capsys):
    good = tmp_path / "a.inst"
    good.write_text("rule(r1,  on x if true do add(p)).\n")
    assert main(["parse", str(good)]) == 0
    assert capsys.readouterr().out == "rule(r1, on x if true do add(p)).\n"
    bad = tmp_path / "b.inst"
    bad.write_text("rule(bad, on if true do add(p)).\n")
    assert main(["parse", str(bad)]) == 1
    assert capsys.readouterr().err.startswith(f"{bad}:1:14:")


def test_cli_run_and_step(tmp_path, capsys, monkeypatch):
    out = tmp_path / "r.jsonl"
    assert main(["run", "--scenario", str(SCENARIOS / "auction_violated"), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    # step from the record of step 2 reproduces the record of step 3
    rec2 = json.loads(lines[3])
    prog = tmp_path / "p.inst"
    prog.write_text(json.loads(lines[0])["program"])
    monkeypatch.setattr(sys, "stdin", io.StringIO(json.dumps(dict(rec2, next_events=[]))))
    assert main(["step", "--program", str(prog)]) == 0
    assert capsys.readouterr().out.strip() == lines[4]


def test_cli_run_files_and_engine_error(tmp_path, capsys):
    prog = tmp_path / "p.inst"
    prog.write_text("rule(g, if n(X) & Y=X+1 do add(n(Y))).\n")
    init = tmp_path / "i.facts"
    init.write_text("n(0).\n")
    code = main(["run", "--program", str(prog), "--init", str(init), "--steps", "1", "--max-chain", "20"])
    assert code == 2
    assert "ChainLimitExceeded" in capsys.readouterr().err


def test_cli_gen_mlp(tmp_path):
    spec = tmp_path / "xor.json"
    spec.write_text(json.dumps(XOR))
    out = tmp_path / "xor.inst"
    assert main(["gen-mlp", "--spec", str(spec), "--out", str(out)]) == 0
    assert parse_program(out.read_text()) == gen_mlp_program(MlpSpec.from_dict(XOR))


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "normrules", "parse", str(SCENARIOS / "prevent" / "program.inst")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.count("rule(") == 4
