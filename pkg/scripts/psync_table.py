#!/usr/bin/env python3
"""Solo psync counts per operation, for every list and contains variant.

Each cell is the number of persistence fences one operation issues when it
runs alone on a fully durable list holding keys 2, 4, ..., 16.
"""

from nvmsets._listbase import CONTAINS_VARIANTS
from nvmsets.sim import Simulation

KEYS = range(2, 17, 2)
CASES = [
    ("insert (new)", "insert", 5),
    ("insert (present)", "insert", 6),
    ("remove (present)", "remove", 6),
    ("remove (absent)", "remove", 5),
    ("contains (present)", "contains", 6),
    ("contains (absent)", "contains", 5),
]


def fences(impl, contains, name, key):
    sim = Simulation(impl, contains=contains)
    for k in KEYS:
        sim.set.insert(k)
    sim.mem.reset_stats()
    sim.run_solo(name, key)
    return sim.mem.stats().fences


def main():
    cols = [(impl, v) for impl in ("pd", "ld") for v in CONTAINS_VARIANTS]
    head = ["operation"] + [f"{i}/{v}" for i, v in cols]
    rows = [[label] + [str(fences(i, v, name, key)) for i, v in cols] for label, name, key in CASES]
    widths = [max(len(r[c]) for r in [head] + rows) for c in range(len(head))]
    for r in [head] + rows:
        print("  ".join(x.ljust(w) for x, w in zip(r, widths)))


if __name__ == "__main__":
    main()
