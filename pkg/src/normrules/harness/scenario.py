"""Scenarios, trace files and JSON-lines record files."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..engine import EngineConfig, TransitionRecord, default_builtins, run
from ..errors import NonGroundEvent, ParseError
from ..kernel import EventSet, State, is_ground, state_add
from ..parser import (
    Diagnostic, parse_atom, parse_cformula, parse_facts, parse_program, render_atom, render_cformula,
    render_term, serialize,
)
from ..rules import RuleBase, desugar_expectations
from .mlp import MlpSpec, gen_mlp_program, mlp_builtins

RECORD_FORMAT = "normrules-records/1"
INSTITUTION = "institution"

_TRACE_LINE = re.compile(r"\s*(\d+)\s+(\S+)\s+(.+?)\s*\Z")


# ---------------------------------------------------------------------------
# input files


def _strip_comment(line: str) -> str:
    # '%' inside a quoted name is not a comment
    quoted = False
    for i, ch in enumerate(line):
        if ch == "'":
            quoted = not quoted
        elif ch == "%" and not quoted:
            return line[:i]
    return line


def parse_trace(text: str) -> list:
    """Trace text to one :class:`EventSet` per step; missing steps are empty."""
    steps: dict = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        m = _TRACE_LINE.match(line)
        if m is None:
            raise ParseError([Diagnostic(n, 1, "expected '<step> <agent> <formula>'")])
        step, agent, src = int(m.group(1)), m.group(2), m.group(3)
        try:
            atom = parse_atom(src)
        except ParseError as exc:
            d = exc.diagnostics[0]
            raise ParseError([Diagnostic(n, m.start(3) + d.col, d.message, d.expected)]) from None
        if not is_ground(atom):
            raise NonGroundEvent(f"line {n}: event {render_atom(atom)} is not ground")
        steps.setdefault(step, []).append((agent, atom))
    if not steps:
        return []
    return [EventSet(tuple(steps.get(t, ()))) for t in range(max(steps) + 1)]


def load_trace(path) -> list:
    return parse_trace(Path(path).read_text(encoding="utf-8"))


def load_state(text: str) -> State:
    delta = State()
    for cf in parse_facts(text):
        delta = state_add(delta, cf)
    return delta


# ---------------------------------------------------------------------------
# records


def _events_json(items) -> list:
    return [{"agent": ag, "event": render_atom(a)} for ag, a in items]


def _state_json(delta: State) -> list:
    return [render_cformula(cf) for cf in delta.entries]


def record_to_dict(rec: TransitionRecord) -> dict:
    d = {
        "step": rec.step,
        "state_before": _state_json(rec.state_before),
        "events": _events_json(rec.events.items),
        "forced_events": _events_json((INSTITUTION, a) for a in rec.forced_events),
        "fired": [
            {"rule_id": render_atom(rid), "substitution": {k: render_term(v) for k, v in sorted(s.items())}}
            for rid, s in rec.fired
        ],
        "ignored": [render_atom(r) for r in rec.ignored],
        "prevented": [render_atom(r) for r in rec.prevented],
        "state_after": _state_json(rec.state_after),
    }
    if rec.rule_base is not None:
        d["rule_base"] = serialize(rec.rule_base)
    if rec.error is not None:
        d["error"] = rec.error
    return d


def dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def events_from_json(items) -> EventSet:
    return EventSet(tuple((e["agent"], parse_atom(e["event"])) for e in items))


def state_from_json(items) -> State:
    delta = State()
    for s in items:
        delta = state_add(delta, parse_cformula(s))
    return delta


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    program: str  # program text
    init: list = field(default_factory=list)  # canonical fact strings
    trace: list = field(default_factory=list)  # list of EventSet
    steps: Optional[int] = None
    istar: bool = False
    max_chain: int = 10_000
    mlp: Optional[dict] = None
    name: str = ""

    @classmethod
    def from_files(cls, program, init=None, trace=None, steps=None, istar=False, max_chain=10_000,
                   mlp_spec=None, name="") -> "Scenario":
        text = Path(program).read_text(encoding="utf-8") if program else ""
        mlp = json.loads(Path(mlp_spec).read_text(encoding="utf-8")) if mlp_spec else None
        if mlp is not None and not text.strip():
            text = serialize(gen_mlp_program(MlpSpec.from_dict(mlp)))
        facts = _state_json(load_state(Path(init).read_text(encoding="utf-8"))) if init else []
        evs = load_trace(trace) if trace else []
        return cls(text, facts, evs, steps, istar, max_chain, mlp, name)

    @classmethod
    def load(cls, path) -> "Scenario":
        """A ``scenario.json`` whose file references are relative to its directory."""
        path = Path(path)
        if path.is_dir():
            path = path / "scenario.json"
        base = path.parent
        d = json.loads(path.read_text(encoding="utf-8"))

        def ref(key):
            return base / d[key] if d.get(key) else None

        return cls.from_files(ref("program"), ref("init"), ref("trace"), d.get("steps"), d.get("istar", False),
                              d.get("max_chain", 10_000), ref("mlp_spec"), d.get("name", base.name))

    def rule_base(self) -> RuleBase:
        return desugar_expectations(parse_program(self.program, istar=self.istar))

    def config(self) -> EngineConfig:
        builtins = mlp_builtins(MlpSpec.from_dict(self.mlp)) if self.mlp else default_builtins()
        return EngineConfig(max_chain_iterations=self.max_chain, istar_enabled=self.istar, builtins=builtins)

    def event_sets(self) -> list:
        n = len(self.trace) if self.steps is None else self.steps
        return [self.trace[t] if t < len(self.trace) else EventSet() for t in range(n)]

    def header(self) -> dict:
        return {
            "format": RECORD_FORMAT,
            "program": serialize(self.rule_base()),
            "initial_state": list(self.init),
            "config": {"istar": self.istar, "max_chain": self.max_chain},
            "mlp": self.mlp,
            "steps": len(self.event_sets()),
        }

    @classmethod
    def from_header(cls, header: dict, event_sets: list) -> "Scenario":
        cfg = header.get("config", {})
        return cls(header["program"], list(header.get("initial_state", [])), list(event_sets),
                   len(event_sets), cfg.get("istar", False), cfg.get("max_chain", 10_000), header.get("mlp"))


def run_scenario(sc: Scenario) -> tuple:
    """Returns ``(header, records)``; records are :class:`TransitionRecord` values."""
    records = run(state_from_json(sc.init), sc.event_sets(), sc.rule_base(), sc.config())
    return sc.header(), records


def record_lines(header: dict, records) -> list:
    return [dumps(header)] + [dumps(record_to_dict(r)) for r in records]


def write_records(path, header: dict, records) -> None:
    Path(path).write_text("".join(line + "\n" for line in record_lines(header, records)), encoding="utf-8")


def read_records(path) -> tuple:
    lines = [json.loads(x) for x in Path(path).read_text(encoding="utf-8").splitlines() if x.strip()]
    if not lines or lines[0].get("format") != RECORD_FORMAT:
        raise ValueError(f"{path}: not a record file")
    return lines[0], lines[1:]


def replay(path) -> list:
    """Re-run a record file from its header and recorded agent events; returns the new lines."""
    header, recs = read_records(path)
    evs = [EventSet(tuple((e["agent"], parse_atom(e["event"])) for e in r["events"])) for r in recs]
    header = dict(header, steps=len(evs))
    sc = Scenario.from_header(header, evs)
    return record_lines(*run_scenario(sc))
