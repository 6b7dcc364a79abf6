"""Scenario runner, record files, MLP program generation and the CLI."""

from .mlp import MlpSpec, Neuron, activate, gen_mlp_program, input_events, mlp_builtins, read_outputs
from .scenario import Scenario, load_trace, parse_trace, record_to_dict, replay, run_scenario, write_records

__all__ = [
    "MlpSpec", "Neuron", "activate", "gen_mlp_program", "input_events", "mlp_builtins", "read_outputs",
    "Scenario", "load_trace", "parse_trace", "record_to_dict", "replay", "run_scenario", "write_records",
]
