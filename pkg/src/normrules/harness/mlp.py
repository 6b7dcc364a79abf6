"""Multi-layer perceptrons written as rule programs.

Inputs arrive as events ``i(X,(1,j))``. Layer 1 is a set of ECA rules, one
per neuron, each firing on the full input vector and calling the
``calculate`` builtin. Deeper layers are if-rules over the previous layer's
``o(Y,(k,j))`` facts, so forward chaining inside a single macro-step
evaluates the whole network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from ..engine import BuiltinRegistry, default_builtins
from ..errors import ArityMismatch, SpecInvariantViolation, UnknownNeuron
from ..kernel import Atom, CFormula, Compound, Const, EventSet, Num, Var
from ..rules import ECA, Add, Builtin, Fact, If, RuleBase, conj

ACTIVATIONS = ("step", "relu", "sigmoid")

# logistic function sampled at -6..6, scaled by 10^4; linear in between
_SIGMOID_KNOTS = [25, 67, 180, 474, 1192, 2689, 5000, 7311, 8808, 9526, 9820, 9933, 9975]


def sigmoid_approx(x: Fraction) -> Fraction:
    """Piecewise-linear rational sigmoid, constant outside [-6, 6]."""
    if x <= -6:
        return Fraction(_SIGMOID_KNOTS[0], 10_000)
    if x >= 6:
        return Fraction(_SIGMOID_KNOTS[-1], 10_000)
    lo = int(x // 1)
    i = lo + 6
    a, b = Fraction(_SIGMOID_KNOTS[i], 10_000), Fraction(_SIGMOID_KNOTS[i + 1], 10_000)
    return a + (b - a) * (x - lo)


def activate(kind: str, x: Fraction) -> Fraction:
    if kind == "step":
        return Fraction(1) if x > 0 else Fraction(0)
    if kind == "relu":
        return max(Fraction(0), x)
    if kind == "sigmoid":
        return sigmoid_approx(x)
    raise SpecInvariantViolation(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class Neuron:
    weights: tuple
    bias: Fraction


@dataclass(frozen=True)
class MlpSpec:
    """``layer_sizes[0]`` is the input width; ``layers[k-1][j-1]`` is neuron (k, j)."""

    layer_sizes: tuple
    layers: tuple
    activation: str = "step"

    def __post_init__(self):
        sizes = self.layer_sizes
        if len(sizes) < 2:
            raise SpecInvariantViolation("need an input width and at least one layer")
        if any(not isinstance(n, int) or n < 1 for n in sizes):
            raise SpecInvariantViolation("layer sizes must be positive integers")
        if self.activation not in ACTIVATIONS:
            raise SpecInvariantViolation(f"unknown activation {self.activation!r}")
        if len(self.layers) != len(sizes) - 1:
            raise SpecInvariantViolation("one weight block per non-input layer")
        for k, layer in enumerate(self.layers, start=1):
            if len(layer) != sizes[k]:
                raise SpecInvariantViolation(f"layer {k} has {len(layer)} neurons, expected {sizes[k]}")
            for n in layer:
                if len(n.weights) != sizes[k - 1]:
                    raise SpecInvariantViolation(f"layer {k} neuron takes {sizes[k - 1]} inputs")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def neuron(self, k: int, j: int) -> Neuron:
        return self.layers[k - 1][j - 1]

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        layers = tuple(
            tuple(Neuron(tuple(Fraction(w) for w in n["weights"]), Fraction(n.get("bias", 0))) for n in layer)
            for layer in d["layers"]
        )
        return cls(tuple(d["layer_sizes"]), layers, d.get("activation", "step"))

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "layers": [[{"weights": [str(w) for w in n.weights], "bias": str(n.bias)} for n in layer]
                       for layer in self.layers],
        }

    @classmethod
    def load(cls, path) -> "MlpSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def neuron_id(k: int, j: int) -> Const:
    return Const(f"n_{k}_{j}")


def _label(k: int, j: int) -> Compound:
    return Compound(",", (Num(k), Num(j)))


def gen_mlp_program(spec: MlpSpec) -> RuleBase:
    entries = []
    for k in range(1, spec.depth + 1):
        width = spec.layer_sizes[k - 1]
        xs = tuple(Var(f"X{i}") for i in range(1, width + 1))
        y = Var("Y")
        for j in range(1, spec.layer_sizes[k] + 1):
            call = Builtin("calculate", (neuron_id(k, j),) + xs + (y,))
            out = (Add(CFormula(Atom("o", (y, _label(k, j))))),)
            rid = Atom(f"n_{k}_{j}", ())
            if k == 1:
                events = tuple(Atom("i", (x, _label(1, i))) for i, x in enumerate(xs, start=1))
                entries.append((rid, ECA(events, call, out)))
            else:
                facts = [Fact(CFormula(Atom("o", (x, _label(k - 1, i))))) for i, x in enumerate(xs, start=1)]
                entries.append((rid, If(conj(*facts, call), out)))
    return RuleBase(entries)


def make_calculate(spec: MlpSpec):
    def calculate(nid, *xs):
        name = nid.name if isinstance(nid, Const) else None
        parts = name.split("_") if name else []
        try:
            _, k, j = parts
            k, j = int(k), int(j)
            n = spec.neuron(k, j) if k >= 1 and j >= 1 else None
        except (ValueError, IndexError):
            n = None
        if n is None:
            raise UnknownNeuron(f"unknown neuron {nid}")
        if len(xs) != len(n.weights):
            raise ArityMismatch(f"neuron {name} takes {len(n.weights)} inputs, got {len(xs)}")
        total = n.bias
        for w, x in zip(n.weights, xs):
            if not isinstance(x, Num):
                raise ArityMismatch(f"neuron {name} input {x} is not a number")
            total += w * x.value
        return Num(activate(spec.activation, total))

    return calculate


def mlp_builtins(spec: MlpSpec, base: BuiltinRegistry = None) -> BuiltinRegistry:
    reg = (base or default_builtins()).copy()
    return reg.register("calculate", make_calculate(spec), outputs=1)


def input_events(values, agent: str = "env") -> EventSet:
    return EventSet(tuple((agent, Atom("i", (Num(Fraction(v)), _label(1, j)))) for j, v in enumerate(values, start=1)))


def read_outputs(state, layer: int, width: int) -> list:
    """Values of ``o(Y,(layer,j))`` for j = 1..width, None where absent."""
    found = {}
    for cf in state.entries:
        a = cf.atom
        if a.pred == "o" and len(a.args) == 2 and not cf.constraints:
            lab = a.args[1]
            if isinstance(lab, Compound) and lab.args[0] == Num(layer) and isinstance(lab.args[1], Num):
                found.setdefault(int(lab.args[1].value), a.args[0].value)
    return [found.get(j) for j in range(1, width + 1)]
