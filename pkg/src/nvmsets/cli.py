"""Command-line driver: ``bench``, ``scenario``, ``check`` and ``recover``."""

from __future__ import annotations

import argparse
import json
import sys

from ._listbase import CONTAINS_VARIANTS
from .checker import (
    HistoryError,
    check_durable_linearizable,
    check_linearizable,
    check_sle,
    check_strict_linearizable,
    dump_eventlog,
    history_from_events,
    load_eventlog,
    theorem2_scenario,
    theorem10_scenario,
)
from .recovery import CorruptImage, dump_image, load_image, persistent_abstract_set, recover
from .sim import ScheduleError, load_schedule
from .substrate import Unsupported
from .workload import ConfigError, WorkloadConfig, mean_report, run, run_sim, to_csv

CHECKS = {
    "durable": check_durable_linearizable,
    "strict": check_strict_linearizable,
    "sle": check_sle,
    "linearizable": check_linearizable,
}


def _pct(text: str) -> float:
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nvmsets", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    b = sub.add_parser("bench", help="run a workload and emit CSV")
    d = WorkloadConfig()
    b.add_argument("--impl", choices=["pd", "ld"], default=d.impl)
    b.add_argument("--contains", choices=CONTAINS_VARIANTS, default=d.contains)
    b.add_argument("--threads", type=int, default=d.threads)
    b.add_argument("--keyrange", type=int, default=d.keyrange)
    b.add_argument("--search-pct", type=_pct, default=None)
    b.add_argument("--insert-pct", type=_pct, default=None)
    b.add_argument("--remove-pct", type=_pct, default=None)
    b.add_argument("--dist", default=d.dist, help="uniform or zipf:<theta>")
    b.add_argument("--duration", type=float, default=d.duration, help="seconds (native)")
    b.add_argument("--seed", type=int, default=d.seed)
    b.add_argument("--mode", choices=["native", "sim"], default=d.mode)
    b.add_argument("--schedule", default=None, help="schedule file (sim)")
    b.add_argument("--csv", default=None, help="write CSV here instead of stdout")
    b.add_argument("--iters", type=int, default=d.iters)
    b.add_argument("--sim-steps", type=int, default=d.sim_steps, help="steps per sim iteration")
    b.add_argument("--eventlog", default=None, help="dump the last sim iteration's event log")

    s = sub.add_parser("scenario", help="scripted executions")
    s.add_argument("name", choices=["theorem2", "theorem10"])
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--impl", choices=["pd", "ld"], default="pd")
    s.add_argument("--contains", choices=CONTAINS_VARIANTS, default="persist-free")
    s.add_argument("--eventlog", default=None)

    c = sub.add_parser("check", help="verdict for an event log")
    c.add_argument("eventlog")
    c.add_argument("--condition", choices=sorted(CHECKS), default="durable")
    c.add_argument("--start", type=int, default=0, help="first event seq of the history")
    c.add_argument("--initial", default="", help="comma-separated keys present at --start")
    c.add_argument("--max-ops", type=int, default=12)

    r = sub.add_parser("recover", help="recover a persistent image")
    r.add_argument("image")
    r.add_argument("--impl", choices=["pd", "ld"], default="pd")
    r.add_argument("--out", default=None, help="write the normalized image here")
    return p


def _mix(args) -> tuple[float, float, float]:
    s, i, r = args.search_pct, args.insert_pct, args.remove_pct
    given = [x for x in (s, i, r) if x is not None]
    if len(given) == 3:
        return s, i, r
    if s is None and i is None and r is None:
        d = WorkloadConfig()
        return d.search_pct, d.insert_pct, d.remove_pct
    if s is not None and i is None and r is None:
        return s, (100 - s) / 2, (100 - s) / 2
    rest = 100 - sum(given)
    missing = 3 - len(given)
    fill = rest / missing
    return (s if s is not None else fill, i if i is not None else fill, r if r is not None else fill)


def cmd_bench(args) -> int:
    search, ins, rem = _mix(args)
    cfg = WorkloadConfig(
        impl=args.impl, contains=args.contains, threads=args.threads, keyrange=args.keyrange,
        search_pct=search, insert_pct=ins, remove_pct=rem, dist=args.dist,
        duration=args.duration, seed=args.seed, mode=args.mode, schedule=args.schedule,
        iters=args.iters, sim_steps=args.sim_steps,
    )
    reports = run(cfg)
    text = to_csv(cfg, reports)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(json.dumps(mean_report(reports)))
    else:
        sys.stdout.write(text)
    if args.eventlog:
        if cfg.mode != "sim":
            raise Unsupported("event logs are recorded in sim mode only")
        sched = load_schedule(cfg.schedule) if cfg.schedule else None
        _, sim = run_sim(cfg, cfg.iters - 1, sched)
        dump_eventlog(sim.events, args.eventlog)
    return 0


def cmd_scenario(args) -> int:
    if args.name == "theorem2":
        if args.n < 1:
            raise ConfigError("--n must be at least 1")
        count = theorem2_scenario(args.n, args.impl)
        print(json.dumps({"scenario": "theorem2", "impl": args.impl, "n": args.n,
                          "redundant_psyncs": count}))
        return 0
    history, sim = theorem10_scenario(args.impl, args.contains)
    out = {"scenario": "theorem10", "impl": args.impl, "contains": args.contains}
    for name in ("durable", "strict", "sle"):
        out[name] = CHECKS[name](history).to_json()
    if args.eventlog:
        dump_eventlog(sim.events, args.eventlog)
    print(json.dumps(out))
    return 0


def cmd_check(args) -> int:
    events = load_eventlog(args.eventlog)
    initial = {int(k) for k in args.initial.split(",") if k.strip()}
    history = history_from_events(events, start=args.start, initial=initial)
    verdict = CHECKS[args.condition](history, max_ops=args.max_ops)
    print(json.dumps(verdict.to_json()))
    return 0 if verdict.passed else 1


def cmd_recover(args) -> int:
    image = load_image(args.image)
    keys = sorted(persistent_abstract_set(image, args.impl))
    if args.out:
        s = recover(image, args.impl)
        dump_image(s.mem.image(), args.out)
    print(json.dumps({"impl": args.impl, "size": len(keys), "keys": keys}))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"bench": cmd_bench, "scenario": cmd_scenario, "check": cmd_check,
               "recover": cmd_recover}[args.cmd]
    try:
        return handler(args)
    except (ConfigError, Unsupported, ScheduleError, HistoryError, CorruptImage) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
