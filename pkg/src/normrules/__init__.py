"""Normative rule language: parsing, constraint checking and an operational-semantics engine."""

from .engine import EngineConfig, TransitionRecord, holds, macro_step, run
from .kernel import Atom, CFormula, Compound, Const, Constraint, EventSet, Num, State, Var
from .parser import parse_program, serialize
from .rules import RuleBase, desugar_expectations

__all__ = [
    "Atom", "CFormula", "Compound", "Const", "Constraint", "EventSet", "Num", "State", "Var",
    "EngineConfig", "TransitionRecord", "holds", "macro_step", "run",
    "RuleBase", "desugar_expectations", "parse_program", "serialize",
]
