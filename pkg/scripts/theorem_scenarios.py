#!/usr/bin/env python3
"""The two scripted executions.

Redundant psyncs: n identical inserts race so that n-1 of them flush and
fence a link nobody changed since it was persisted.

Search persistence: a remove persists its decision and stalls, a search
answers, the machine crashes, and a fresh search disagrees unless the first
search persisted what it saw.
"""

import argparse

from nvmsets._listbase import CONTAINS_VARIANTS
from nvmsets.checker import check_durable_linearizable, check_sle, check_strict_linearizable
from nvmsets.checker import theorem2_scenario, theorem10_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, nargs="+", default=[1, 2, 3, 4, 8, 16])
    args = ap.parse_args()

    print("redundant psyncs for n racing identical inserts")
    for impl in ("pd", "ld"):
        counts = {n: theorem2_scenario(n, impl) for n in args.n}
        print(f"  {impl}: " + "  ".join(f"n={n}:{c}" for n, c in counts.items()))

    print("\nremove / search / crash / search, verdict per contains variant")
    print(f"  {'impl':4} {'contains':18} durable strict sle")
    for impl in ("pd", "ld"):
        for v in CONTAINS_VARIANTS:
            h, _ = theorem10_scenario(impl, v)
            marks = ["pass" if f(h) else "FAIL" for f in
                     (check_durable_linearizable, check_strict_linearizable, check_sle)]
            print(f"  {impl:4} {v:18} {marks[0]:7} {marks[1]:6} {marks[2]}")


if __name__ == "__main__":
    main()
