"""Run every scenario under scenarios/ and write one record file per scenario.

    python3 scripts/run_scenarios.py [--out results/]
"""

import argparse
import time
from pathlib import Path

from normrules.harness.scenario import Scenario, run_scenario, write_records

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenarios", default=str(ROOT / "scenarios"))
    ap.add_argument("--out", default=str(ROOT / "results"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for d in sorted(p for p in Path(args.scenarios).iterdir() if (p / "scenario.json").exists()):
        t0 = time.perf_counter()
        header, recs = run_scenario(Scenario.load(d))
        write_records(out / f"{d.name}.jsonl", header, recs)
        fired = sum(len(r.fired) for r in recs)
        err = next((r.error for r in recs if r.error), "")
        print(f"{d.name:20s} steps={len(recs):2d} fired={fired:3d} final={len(recs[-1].state_after) if recs else 0:2d}"
              f" facts  {1000 * (time.perf_counter() - t0):6.1f} ms {err}")


if __name__ == "__main__":
    main()
