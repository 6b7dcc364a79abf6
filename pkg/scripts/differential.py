"""Compare the engine against the naive reference interpreter on random programs.

    python3 scripts/differential.py [--n 2000] [--seed 0] [--show 1]
"""

import argparse
import random
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from progen import generate, random_pick, run_both  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--show", type=int, default=1, help="print this many mismatching programs")
    args = ap.parse_args()
    t0 = time.perf_counter()
    mismatches = fired = prevented = ignored = 0
    for i in range(args.n):
        g = generate(random_pick(random.Random(args.seed + i)))
        ours, theirs = run_both(g)
        fired += sum(len(r["fired"]) for r in ours)
        prevented += sum(len(r["prevented"]) for r in ours)
        ignored += sum(len(r["ignored"]) for r in ours)
        if ours != theirs:
            mismatches += 1
            if mismatches <= args.show:
                print(f"--- seed {args.seed + i}\n{g.program}init {g.init}\ntrace {g.trace}")
    print(f"{args.n} programs, {mismatches} mismatches; {fired} firings, {prevented} prevented, "
          f"{ignored} ignored; {time.perf_counter() - t0:.1f}s")
    sys.exit(1 if mismatches else 0)


if __name__ == "__main__":
    main()
