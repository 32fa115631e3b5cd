"""Benchmark workloads: configuration, key sampling, prefill, runs and CSV rows.

Native mode runs real threads against :class:`NativeSubstrate` for a wall
clock duration.  Sim mode runs greenlet workers on :class:`SimSubstrate`
for a fixed number of scheduler steps (or a schedule file) and reports
throughput per million simulated steps, so identical seeds give identical
output.
"""

from __future__ import annotations

import csv
import io
import random
import threading
import time
from dataclasses import dataclass, field
from itertools import accumulate

from ._listbase import CONTAINS_VARIANTS
from .recovery import IMPLS, persistent_abstract_set
from .sim import Directive, Simulation, load_schedule
from .substrate import NativeSubstrate, PsyncStats, Unsupported

CSV_HEADER = ["impl", "contains", "threads", "keyrange", "dist", "search_pct", "throughput",
              "psyncs_per_search", "psyncs_per_update", "redundant_psyncs"]


class ConfigError(ValueError):
    pass


@dataclass
class WorkloadConfig:
    impl: str = "pd"
    contains: str = "persist-last"
    threads: int = 1
    keyrange: int = 1000
    search_pct: float = 90.0
    insert_pct: float = 5.0
    remove_pct: float = 5.0
    dist: str = "uniform"
    duration: float = 1.0
    seed: int = 0
    mode: str = "native"
    schedule: str | None = None
    iters: int = 10
    warmup: float = 0.1
    sim_steps: int = 20_000

    def validate(self) -> None:
        if self.impl not in IMPLS:
            raise ConfigError(f"impl must be one of {sorted(IMPLS)}")
        if self.contains not in CONTAINS_VARIANTS:
            raise ConfigError(f"contains must be one of {CONTAINS_VARIANTS}")
        if self.mode not in ("native", "sim"):
            raise ConfigError("mode must be native or sim")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.keyrange < 2:
            raise ConfigError("keyrange must be at least 2")
        pcts = (self.search_pct, self.insert_pct, self.remove_pct)
        if min(pcts) < 0 or abs(sum(pcts) - 100.0) > 1e-9:
            raise ConfigError("operation percentages must be non-negative and sum to 100")
        if self.iters < 1:
            raise ConfigError("iters must be at least 1")
        if self.duration <= 0 and self.mode == "native":
            raise ConfigError("duration must be positive")
        if self.mode == "native" and self.schedule:
            raise Unsupported("schedules and crashes need sim mode")
        parse_dist(self.dist)


def parse_dist(text: str) -> float:
    """Zipf exponent; uniform is exponent 0."""
    if text == "uniform":
        return 0.0
    if text.startswith("zipf:"):
        try:
            theta = float(text[5:])
        except ValueError:
            raise ConfigError(f"bad zipf exponent in {text!r}") from None
        if theta < 0:
            raise ConfigError("zipf exponent must be non-negative")
        return theta
    raise ConfigError(f"dist must be uniform or zipf:<theta>, got {text!r}")


class KeySampler:
    """Keys in ``[1, K]`` with P(k) proportional to k^-theta."""

    def __init__(self, keyrange: int, theta: float = 0.0):
        if keyrange < 1:
            raise ConfigError("keyrange must be positive")
        if theta < 0:
            raise ConfigError("zipf exponent must be non-negative")
        self.keys = range(1, keyrange + 1)
        self.theta = theta
        self.cum = None if theta == 0 else list(accumulate(r ** -theta for r in self.keys))

    def probability(self, key: int) -> float:
        if self.cum is None:
            return 1 / len(self.keys)
        return key ** -self.theta / self.cum[-1]

    def __call__(self, rng: random.Random) -> int:
        if self.cum is None:
            return rng.randint(1, len(self.keys))
        return rng.choices(self.keys, cum_weights=self.cum)[0]


def sample_key(cfg: WorkloadConfig, rng: random.Random) -> int:
    return KeySampler(cfg.keyrange, parse_dist(cfg.dist))(rng)


def prefill(s, cfg: WorkloadConfig, rng: random.Random) -> set[int]:
    """Insert distinct random keys until the set holds half the key range."""
    if cfg.keyrange < 2:
        raise ConfigError("keyrange must be at least 2")
    if s.nodes():
        raise ConfigError("set is already populated")
    keys = rng.sample(range(1, cfg.keyrange + 1), cfg.keyrange // 2)
    for k in keys:
        s.insert(k)
    return set(keys)


def op_stream(cfg: WorkloadConfig, rng: random.Random):
    sampler = KeySampler(cfg.keyrange, parse_dist(cfg.dist))
    s_cut = cfg.search_pct
    i_cut = s_cut + cfg.insert_pct
    while True:
        r = rng.random() * 100
        name = "contains" if r < s_cut else "insert" if r < i_cut else "remove"
        yield name, sampler(rng)


@dataclass
class RunReport:
    throughput: float
    psyncs_per_search: float
    psyncs_per_update: float
    redundant_psyncs: int | None = None
    recovered_set_size: int | None = None
    ops: int = 0
    stats: PsyncStats = field(default_factory=PsyncStats, repr=False)


def _report(stats: PsyncStats, throughput: float, redundant=None, recovered=None) -> RunReport:
    ops = sum(c.ops for c in stats.by_class.values())
    return RunReport(
        throughput=throughput,
        psyncs_per_search=stats.psyncs_per("search"),
        # per successful update: the floor of one psync applies to those
        psyncs_per_update=stats.psyncs_per("update", successful_only=True),
        redundant_psyncs=redundant,
        recovered_set_size=recovered,
        ops=ops,
        stats=stats,
    )


def _seed(cfg: WorkloadConfig, it: int, who) -> random.Random:
    return random.Random(f"{cfg.seed}:{it}:{who}")


def run_native(cfg: WorkloadConfig, it: int = 0) -> RunReport:
    mem = NativeSubstrate()
    s = IMPLS[cfg.impl](mem, contains=cfg.contains)
    prefill(s, cfg, _seed(cfg, it, "prefill"))
    mem.reset_stats()
    start = time.perf_counter()
    warm_end = start + cfg.warmup
    stop_at = warm_end + cfg.duration
    barrier = threading.Barrier(cfg.threads)
    errors: list[BaseException] = []

    def worker(tid: int):
        try:
            ops = op_stream(cfg, _seed(cfg, it, tid))
            barrier.wait()
            warm = True
            while True:
                now = time.perf_counter()
                if warm and now >= warm_end:
                    mem.reset_my_stats()
                    warm = False
                if now >= stop_at:
                    break
                name, key = next(ops)
                s.do(name, key)
        except BaseException as e:  # surfaced after join
            errors.append(e)

    threads = [threading.Thread(target=worker, args=(t,)) for t in range(cfg.threads)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    stats = mem.stats()
    ops = sum(c.ops for c in stats.by_class.values())
    return _report(stats, ops / cfg.duration)


def run_sim(cfg: WorkloadConfig, it: int = 0, schedule: list[Directive] | None = None) -> tuple[RunReport, Simulation]:
    sim = Simulation(impl=cfg.impl, contains=cfg.contains)
    prefill(sim.set, cfg, _seed(cfg, it, "prefill"))
    sim.mem.reset_stats()
    for t in range(cfg.threads):
        sim.spawn(op_stream(cfg, _seed(cfg, it, t)))
    if schedule is None:
        steps = sim.run_steps(_seed(cfg, it, "sched"), cfg.sim_steps)
    else:
        before = sim.steps
        sim.execute(schedule)
        steps = sim.steps - before
    recovered = len(persistent_abstract_set(sim.images[-1], cfg.impl)) if sim.images else None
    stats = sim.mem.stats()
    ops = sum(c.ops for c in stats.by_class.values())
    throughput = ops * 1e6 / steps if steps else 0.0
    return _report(stats, throughput, stats.redundant_fences, recovered), sim


def run(cfg: WorkloadConfig) -> list[RunReport]:
    cfg.validate()
    schedule = load_schedule(cfg.schedule) if cfg.schedule else None
    out = []
    for it in range(cfg.iters):
        if cfg.mode == "native":
            out.append(run_native(cfg, it))
        else:
            out.append(run_sim(cfg, it, schedule)[0])
    return out


def csv_row(cfg: WorkloadConfig, rep: RunReport) -> list[str]:
    return [
        cfg.impl, cfg.contains, str(cfg.threads), str(cfg.keyrange), cfg.dist,
        _fmt(cfg.search_pct), f"{rep.throughput:.6f}", f"{rep.psyncs_per_search:.6f}",
        f"{rep.psyncs_per_update:.6f}",
        "" if rep.redundant_psyncs is None else str(rep.redundant_psyncs),
    ]


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def to_csv(cfg: WorkloadConfig, reports: list[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rep in reports:
        w.writerow(csv_row(cfg, rep))
    return buf.getvalue()


def mean_report(reports: list[RunReport]) -> dict:
    n = len(reports)
    out = {
        "iters": n,
        "throughput": sum(r.throughput for r in reports) / n,
        "psyncs_per_search": sum(r.psyncs_per_search for r in reports) / n,
        "psyncs_per_update": sum(r.psyncs_per_update for r in reports) / n,
    }
    if reports[0].redundant_psyncs is not None:
        out["redundant_psyncs"] = sum(r.redundant_psyncs for r in reports) / n
    sizes = [r.recovered_set_size for r in reports if r.recovered_set_size is not None]
    if sizes:
        out["recovered_set_size"] = sizes[-1]
    return out
