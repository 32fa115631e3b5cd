#!/usr/bin/env python3
"""Sweep lists, contains variants, thread counts and search ratios; one CSV.

Sim mode (default) is deterministic and reports redundant psyncs; native
mode times real threads and leaves that column empty.

    python scripts/bench_sweep.py --mode sim --threads 1 2 4 8 --out sweep.csv
"""

import argparse
import csv
import sys

from nvmsets._listbase import CONTAINS_VARIANTS
from nvmsets.workload import CSV_HEADER, WorkloadConfig, csv_row, mean_report, run


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--mode", choices=["sim", "native"], default="sim")
    ap.add_argument("--impls", nargs="+", default=["pd", "ld"])
    ap.add_argument("--contains", nargs="+", default=list(CONTAINS_VARIANTS))
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--search-pcts", type=float, nargs="+", default=[50.0, 90.0])
    ap.add_argument("--keyrange", type=int, default=256)
    ap.add_argument("--dist", default="uniform")
    ap.add_argument("--iters", type=int, default=3)
    ap.add_argument("--duration", type=float, default=1.0)
    ap.add_argument("--sim-steps", type=int, default=20_000)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for impl in args.impls:
        for contains in args.contains:
            for threads in args.threads:
                for s in args.search_pcts:
                    cfg = WorkloadConfig(impl=impl, contains=contains, threads=threads,
                                         keyrange=args.keyrange, search_pct=s,
                                         insert_pct=(100 - s) / 2, remove_pct=(100 - s) / 2,
                                         dist=args.dist, mode=args.mode, iters=args.iters,
                                         duration=args.duration, sim_steps=args.sim_steps)
                    reports = run(cfg)
                    for rep in reports:
                        w.writerow(csv_row(cfg, rep))
                    if args.out:
                        m = mean_report(reports)
                        print(f"{impl} {contains:18} t={threads} s={s:g}: "
                              f"{m['throughput']:.0f} ops, {m['psyncs_per_update']:.3f} psyncs/update",
                              file=sys.stderr)
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
