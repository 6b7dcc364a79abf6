"""Evaluate rule-encoded networks: the XOR truth table, then random networks against a numeric forward pass.

    python3 scripts/mlp_demo.py [--random 200] [--seed 0]
"""

import argparse
import json
import random
import time
from fractions import Fraction
from pathlib import Path

from normrules.engine import EngineConfig, macro_step
from normrules.harness.mlp import MlpSpec, activate, gen_mlp_program, input_events, mlp_builtins, read_outputs
from normrules.kernel import State
from normrules.parser import serialize

ROOT = Path(__file__).resolve().parent.parent


def rule_outputs(spec: MlpSpec, xs):
    config = EngineConfig(builtins=mlp_builtins(spec))
    d, _, rec = macro_step(State(), input_events(xs), gen_mlp_program(spec), config)
    if rec.error:
        raise RuntimeError(rec.error)
    return read_outputs(d, spec.depth, spec.layer_sizes[-1])


def forward(spec: MlpSpec, xs):
    vals = [Fraction(x) for x in xs]
    for layer in spec.layers:
        vals = [activate(spec.activation, n.bias + sum(w * v for w, v in zip(n.weights, vals))) for n in layer]
    return vals


def random_spec(rng) -> MlpSpec:
    sizes = [rng.randint(1, 4)] + [rng.randint(1, 4) for _ in range(rng.randint(1, 3))]
    layers = [[{"weights": [str(Fraction(rng.randint(-8, 8), 4)) for _ in range(sizes[k - 1])],
                "bias": str(Fraction(rng.randint(-8, 8), 4))} for _ in range(sizes[k])] for k in range(1, len(sizes))]
    return MlpSpec.from_dict({"layer_sizes": sizes, "layers": layers,
                              "activation": rng.choice(["step", "relu", "sigmoid"])})


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--random", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    xor = MlpSpec.from_dict(json.loads((ROOT / "scenarios" / "mlp_xor" / "xor.json").read_text()))
    print(serialize(gen_mlp_program(xor)))
    for a in (0, 1):
        for b in (0, 1):
            print(f"xor({a},{b}) = {rule_outputs(xor, [a, b])[0]}")

    rng = random.Random(args.seed)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(args.random):
        spec = random_spec(rng)
        xs = [rng.randint(0, 1) for _ in range(spec.layer_sizes[0])]
        bad += rule_outputs(spec, xs) != forward(spec, xs)
    print(f"{args.random} random networks, {bad} mismatches, {time.perf_counter() - t0:.2f}s")


if __name__ == "__main__":
    main()
