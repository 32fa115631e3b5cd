"""Seeded crash-recovery fuzzing of both lists in the simulator.

One run: a random prefill, 2-4 workers with at most ``max_ops`` operations in
total over keys ``1..K``, a random interleaving with background flushes and
early commits, a crash at a random step, recovery, then a few post-crash
operations.  The result carries the history and every verdict, so callers
decide which ones they gate on.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .audit import Auditor, Violation, check_cpe_ordering
from .checker import History, Verdict, check_durable_linearizable, check_sle, history_from_events
from .sim import Simulation

OPS = ("insert", "remove", "contains")


@dataclass
class FuzzConfig:
    impls: tuple[str, ...] = ("pd", "ld")
    contains: tuple[str, ...] = ("persist-all", "async-persist-all", "persist-last", "persist-free")
    workers: tuple[int, int] = (2, 4)
    max_key: int = 8
    max_ops: int = 10
    post_crash_ops: int = 2
    crash_prob: float = 0.9
    bg_flush_prob: float = 0.05
    early_commit_prob: float = 0.05
    commit_modes: tuple[str, ...] = ("fence", "flush")
    audit: bool = True
    check_sle: bool = False


@dataclass
class FuzzResult:
    seed: int
    impl: str
    contains: str
    commit_mode: str
    crashed: bool
    history: History
    sim: Simulation = field(repr=False)
    durable: Verdict | None = None
    sle: Verdict | None = None
    violations: list[Violation] = field(default_factory=list)
    cpe_order_bad: list[int] = field(default_factory=list)
    audit_checks: int = 0

    @property
    def ok(self) -> bool:
        return (bool(self.durable) and (self.sle is None or bool(self.sle))
                and not self.violations and not self.cpe_order_bad)


def _ops(rng: random.Random, n: int, max_key: int):
    return [(rng.choice(OPS), rng.randint(1, max_key)) for _ in range(n)]


@dataclass
class _Setup:
    rng: random.Random
    sim: Simulation
    impl: str
    contains: str
    commit_mode: str
    K: int
    initial: set[int]
    start: int
    total: int


def setup_run(seed: int, cfg: FuzzConfig = FuzzConfig()) -> _Setup:
    """Everything a run decides before the first scheduling step."""
    rng = random.Random(seed)
    impl = rng.choice(cfg.impls)
    contains = rng.choice(cfg.contains)
    commit_mode = rng.choice(cfg.commit_modes)
    K = rng.randint(2, cfg.max_key)
    sim = Simulation(impl=impl, contains=contains, commit_mode=commit_mode)
    initial = {k for k in range(1, K + 1) if rng.random() < 0.5}
    for k in sorted(initial):
        sim.set.insert(k)
    start = len(sim.events)
    nworkers = rng.randint(*cfg.workers)
    total = rng.randint(nworkers, max(nworkers, cfg.max_ops))
    split = sorted(rng.sample(range(1, total), nworkers - 1)) if nworkers > 1 else []
    bounds = [0] + split + [total]
    for a, b in zip(bounds, bounds[1:]):
        sim.spawn(_ops(rng, b - a, K))
    return _Setup(rng, sim, impl, contains, commit_mode, K, initial, start, total)


def replay(seed: int, trace, n: int, cfg: FuzzConfig = FuzzConfig()) -> Simulation:
    """Rebuild a run and execute the first ``n`` recorded directives."""
    sim = setup_run(seed, cfg).sim
    sim.execute(trace[:n])
    return sim


def directive_emitting(seed: int, trace, seq: int, cfg: FuzzConfig = FuzzConfig()) -> int:
    """Index of the recorded directive during which event ``seq`` was logged."""
    sim = setup_run(seed, cfg).sim
    for i, d in enumerate(trace):
        sim.execute([d])
        if len(sim.events) > seq:
            return i
    raise ValueError(f"event {seq} is not produced by the trace")


def fuzz_run(seed: int, cfg: FuzzConfig = FuzzConfig()) -> FuzzResult:
    su = setup_run(seed, cfg)
    rng, sim, impl, start, total, K = su.rng, su.sim, su.impl, su.start, su.total, su.K
    auditor = Auditor(sim.mem, impl, sim.set.head, sim.set.tail) if cfg.audit else None

    crash_at = rng.randint(0, 40 * total) if rng.random() < cfg.crash_prob else None
    crashed = sim.run_random(rng, bg_flush_prob=cfg.bg_flush_prob,
                             early_commit_prob=cfg.early_commit_prob, crash_at=crash_at)
    if crash_at is not None and not crashed:
        sim.crash()
        crashed = True
    if crashed:
        for _ in range(rng.randint(0, cfg.post_crash_ops)):
            sim.spawn(_ops(rng, 1, K))
        sim.run_random(rng, bg_flush_prob=cfg.bg_flush_prob,
                       early_commit_prob=cfg.early_commit_prob)

    history = history_from_events(sim.events, start=start, initial=su.initial)
    res = FuzzResult(seed, impl, su.contains, su.commit_mode, crashed, history, sim)
    res.durable = check_durable_linearizable(history)
    if cfg.check_sle:
        res.sle = check_sle(history)
    if auditor is not None:
        res.violations = list(auditor.violations)
        res.audit_checks = auditor.checks
    if impl == "ld":
        res.cpe_order_bad = check_cpe_ordering(sim.events[start:])
    return res


def fuzz(seeds, cfg: FuzzConfig = FuzzConfig()) -> list[FuzzResult]:
    return [fuzz_run(s, cfg) for s in seeds]
