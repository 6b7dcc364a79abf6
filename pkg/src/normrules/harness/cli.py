"""Command-line entry point: parse, run, step, gen-mlp, replay.

Exit codes: 0 success, 1 diagnostics (bad input files), 2 engine error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..engine import EngineConfig, default_builtins, macro_step
from ..errors import DuplicateRuleId, InstError, NonGroundEvent, ParseError, SpecInvariantViolation
from ..kernel import EventSet
from ..parser import parse_program, serialize
from ..rules import desugar_expectations
from .mlp import MlpSpec, gen_mlp_program, mlp_builtins
from .scenario import (
    RECORD_FORMAT, Scenario, dumps, events_from_json, parse_trace, read_records, record_lines, record_to_dict,
    replay, run_scenario, state_from_json, write_records,
)

OK, DIAGNOSTICS, ENGINE_ERROR = 0, 1, 2


def _diag(path, exc: ParseError) -> None:
    for d in exc.diagnostics:
        print(f"{path}:{d}", file=sys.stderr)


def cmd_parse(args) -> int:
    try:
        rb = parse_program(Path(args.file).read_bytes(), istar=True)
    except ParseError as exc:
        _diag(args.file, exc)
        return DIAGNOSTICS
    except DuplicateRuleId as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return DIAGNOSTICS
    sys.stdout.write(serialize(rb))
    return OK


def _scenario(args) -> Scenario:
    if args.scenario:
        sc = Scenario.load(args.scenario)
        if args.steps is not None:
            sc.steps = args.steps
        return sc
    if not args.program and not args.mlp_spec:
        raise SystemExit("run: --program or --scenario is required")
    return Scenario.from_files(args.program, args.init, args.trace, args.steps, args.istar, args.max_chain,
                               args.mlp_spec)


def cmd_run(args) -> int:
    try:
        sc = _scenario(args)
        header, records = run_scenario(sc)
    except ParseError as exc:
        _diag(args.program or args.scenario, exc)
        return DIAGNOSTICS
    except (DuplicateRuleId, NonGroundEvent, SpecInvariantViolation, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DIAGNOSTICS
    if args.out:
        write_records(args.out, header, records)
    else:
        sys.stdout.write("".join(line + "\n" for line in record_lines(header, records)))
    if records and records[-1].error:
        print(f"step {records[-1].step}: {records[-1].error}", file=sys.stderr)
        return ENGINE_ERROR
    return OK


def _step_events(args, obj) -> EventSet:
    if args.events:
        steps = parse_trace(Path(args.events).read_text(encoding="utf-8"))
        return EventSet(tuple(item for es in steps for item in es.items))
    return events_from_json(obj.get("next_events", []))


def cmd_step(args) -> int:
    """Read a header or a record on stdin and print the record of the following step."""
    try:
        obj = json.loads(sys.stdin.read())
        if obj.get("format") == RECORD_FORMAT:
            program, state_lines, t = obj["program"], obj.get("initial_state", []), 0
            istar = obj.get("config", {}).get("istar", args.istar)
            mlp = obj.get("mlp")
        else:
            if args.program:
                program = Path(args.program).read_text(encoding="utf-8")
            elif "rule_base" in obj:
                program = obj["rule_base"]
            else:
                raise SystemExit("step: a record needs --program (or a rule_base field)")
            state_lines, t, istar = obj["state_after"], obj["step"] + 1, args.istar or "rule_base" in obj
            mlp = None
        if args.mlp_spec:
            mlp = json.loads(Path(args.mlp_spec).read_text(encoding="utf-8"))
        rb = desugar_expectations(parse_program(program, istar=istar))
        builtins = mlp_builtins(MlpSpec.from_dict(mlp)) if mlp else default_builtins()
        config = EngineConfig(max_chain_iterations=args.max_chain, istar_enabled=istar, builtins=builtins)
        delta, events = state_from_json(state_lines), _step_events(args, obj)
    except ParseError as exc:
        _diag("<stdin>", exc)
        return DIAGNOSTICS
    except (json.JSONDecodeError, KeyError, NonGroundEvent, DuplicateRuleId, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DIAGNOSTICS
    _, _, rec = macro_step(delta, events, rb, config, t)
    print(dumps(record_to_dict(rec)))
    return ENGINE_ERROR if rec.error else OK


def cmd_gen_mlp(args) -> int:
    try:
        spec = MlpSpec.load(args.spec)
    except (SpecInvariantViolation, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DIAGNOSTICS
    text = serialize(gen_mlp_program(spec))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return OK


def cmd_replay(args) -> int:
    try:
        _, old = read_records(args.file)
        lines = replay(args.file)
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DIAGNOSTICS
    original = Path(args.file).read_text(encoding="utf-8").splitlines()
    if lines == original:
        print(f"{args.file}: identical ({len(old)} records)")
        return OK
    for i, (a, b) in enumerate(zip(original, lines)):
        if a != b:
            print(f"{args.file}: first difference at line {i + 1}")
            break
    else:
        print(f"{args.file}: length differs ({len(original)} vs {len(lines)} lines)")
    return ENGINE_ERROR


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="normrules", description="Normative rule language interpreter")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="check a program and print its canonical form")
    p.add_argument("file")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("run", help="run a program over a trace and write a record file")
    p.add_argument("--scenario", help="scenario directory or scenario.json")
    p.add_argument("--program")
    p.add_argument("--init", help="facts file")
    p.add_argument("--trace", help=".evt trace file")
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p.add_argument("--istar", action="store_true", help="allow rule-valued actions")
    p.add_argument("--max-chain", type=int, default=10_000)
    p.add_argument("--mlp-spec", help="register the calculate builtin for this network")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("step", help="one macro-step from a header or record on stdin")
    p.add_argument("--program")
    p.add_argument("--events", help="trace-format file; all its events form the step's input")
    p.add_argument("--istar", action="store_true")
    p.add_argument("--max-chain", type=int, default=10_000)
    p.add_argument("--mlp-spec")
    p.set_defaults(fn=cmd_step)

    p = sub.add_parser("gen-mlp", help="write the rule program for a network spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_gen_mlp)

    p = sub.add_parser("replay", help="re-run a record file and compare")
    p.add_argument("file")
    p.set_defaults(fn=cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except InstError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ENGINE_ERROR


if __name__ == "__main__":
    sys.exit(main())
