#!/usr/bin/env python3
"""Seeded crash-recovery fuzzing with a summary and failing-seed dumps.

    python scripts/run_fuzz.py --runs 5000 --sle --out fuzz_failures
"""

import argparse
import json
import os
import time

from nvmsets.checker import dump_eventlog
from nvmsets.fuzz import FuzzConfig, fuzz_run
from nvmsets.sim import format_schedule

PERSISTING = ("persist-all", "async-persist-all", "persist-last")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--runs", type=int, default=1000)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--impl", choices=["pd", "ld", "both"], default="both")
    ap.add_argument("--sle", action="store_true", help="also check SLE (drops persist-free)")
    ap.add_argument("--no-audit", action="store_true")
    ap.add_argument("--out", default=None, help="dump event log and schedule of each failing seed here")
    args = ap.parse_args()

    cfg = FuzzConfig(
        impls=("pd", "ld") if args.impl == "both" else (args.impl,),
        audit=not args.no_audit,
        check_sle=args.sle,
    )
    if args.sle:
        cfg.contains = PERSISTING

    t = time.perf_counter()
    failures = []
    crashed = 0
    for seed in range(args.first_seed, args.first_seed + args.runs):
        r = fuzz_run(seed, cfg)
        crashed += r.crashed
        if r.ok:
            continue
        failures.append(r)
        why = []
        if not r.durable:
            why.append("durable")
        if r.sle is not None and not r.sle:
            why.append("sle")
        if r.violations:
            why.append(f"audit:{r.violations[0].check}")
        if r.cpe_order_bad:
            why.append("cpe-order")
        print(f"seed {seed} {r.impl}/{r.contains}/{r.commit_mode}: {', '.join(why)}")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            dump_eventlog(r.sim.events, os.path.join(args.out, f"seed{seed}.events.jsonl"))
            with open(os.path.join(args.out, f"seed{seed}.sched"), "w") as fh:
                fh.write(format_schedule(r.sim.trace))
    print(json.dumps({"runs": args.runs, "crashed": crashed, "failures": len(failures),
                      "seconds": round(time.perf_counter() - t, 2)}))
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
