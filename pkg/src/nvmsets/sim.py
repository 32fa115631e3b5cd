"""Deterministic interleaving of list operations over :class:`SimSubstrate`.

Each worker runs its operations inside a greenlet.  Before every substrate
primitive the worker switches back to the scheduler, so exactly one
primitive executes per :meth:`Simulation.step`.  Code run outside a worker
(setup, probes, recovery) executes atomically with worker id 0.

Every scheduling decision is appended to :attr:`Simulation.trace` using the
schedule-file directives, so a run can be replayed exactly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import greenlet

from . import taglink as tl
from .recovery import IMPLS, recover
from .substrate import Event, PersistentImage, SimSubstrate


class ScheduleError(Exception):
    pass


@dataclass
class Directive:
    kind: str  # step | bg_flush | early_commit | crash
    arg: int | None = None

    def __str__(self):
        return self.kind if self.arg is None else f"{self.kind} {self.arg}"


def parse_schedule(text: str) -> list[Directive]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "crash" and len(parts) == 1:
            out.append(Directive("crash"))
        elif kind in ("step", "bg_flush", "early_commit") and len(parts) == 2:
            try:
                out.append(Directive(kind, int(parts[1], 0)))
            except ValueError:
                raise ScheduleError(f"line {lineno}: bad argument {parts[1]!r}") from None
        else:
            raise ScheduleError(f"line {lineno}: cannot parse {raw!r}")
    return out


def load_schedule(path) -> list[Directive]:
    return parse_schedule(Path(path).read_text(encoding="utf-8"))


def format_schedule(directives: Iterable[Directive]) -> str:
    return "".join(f"{d}\n" for d in directives)


class _Worker:
    def __init__(self, wid: int, ops, sim: Simulation):
        self.wid = wid
        self.ops = ops  # any iterable; consumed lazily
        self.results: list[bool] = []
        self.g = greenlet.greenlet(self._run)
        self.sim = sim
        self.dead = False

    def _run(self):
        for name, key in self.ops:
            self.results.append(self.sim.set.do(name, key))

    @property
    def done(self) -> bool:
        return self.dead or self.g.dead


class Simulation:
    def __init__(self, impl="pd", contains="persist-last", commit_mode="fence",
                 log_reads=False, max_list_length=4096):
        self.impl = impl
        self.contains = contains
        self.max_list_length = max_list_length
        self.mem = SimSubstrate(commit_mode=commit_mode, log_reads=log_reads)
        self.mem.yield_hook = self._yield
        self.set = IMPLS[impl](self.mem, contains=contains, max_list_length=max_list_length)
        self.workers: dict[int, _Worker] = {}
        self.trace: list[Directive] = []
        self.images: list[PersistentImage] = []
        self.steps = 0
        self._next_wid = 1
        self._sched = greenlet.getcurrent()

    # -- workers ----------------------------------------------------------

    def _yield(self):
        g = greenlet.getcurrent()
        if g is not self._sched and getattr(g, "parent", None) is self._sched:
            self._sched.switch()

    def spawn(self, ops) -> int:
        wid = self._next_wid
        self._next_wid += 1
        self.workers[wid] = _Worker(wid, ops, self)
        return wid

    def runnable(self) -> list[int]:
        return [w for w, wk in self.workers.items() if not wk.done]

    def step(self, wid: int) -> bool:
        """Advance worker ``wid`` by one primitive.  Returns False once it has finished."""
        wk = self.workers.get(wid)
        if wk is None:
            raise ScheduleError(f"no worker {wid}")
        if wk.done:
            return False
        self.trace.append(Directive("step", wid))
        self.steps += 1
        prev = self.mem.worker
        self.mem.worker = wid
        try:
            wk.g.switch()
        finally:
            self.mem.worker = prev
        return not wk.done

    def run_until(self, wid: int, pred: Callable[[Event], bool], limit=100_000) -> Event:
        """Step ``wid`` until an event it produces satisfies ``pred``."""
        for _ in range(limit):
            start = len(self.mem.events)
            if not self.step(wid):
                raise ScheduleError(f"worker {wid} finished before the condition held")
            for ev in self.mem.events[start:]:
                if pred(ev):
                    return ev
        raise ScheduleError("step limit exceeded")

    def finish(self, wid: int, limit=100_000) -> list[bool]:
        for _ in range(limit):
            if not self.step(wid):
                return self.workers[wid].results
        raise ScheduleError("step limit exceeded")

    def run_solo(self, name: str, key: int) -> bool:
        """Spawn a fresh worker for one operation and run it alone to completion."""
        wid = self.spawn([(name, key)])
        return self.finish(wid)[0]

    def run_random(self, rng: random.Random, max_steps=1_000_000, bg_flush_prob=0.0,
                   early_commit_prob=0.0, crash_at: int | None = None) -> bool:
        """Seeded random interleaving.  Returns True if a crash was injected."""
        n = 0
        while True:
            live = self.runnable()
            if not live:
                return False
            if crash_at is not None and n >= crash_at:
                self.crash()
                return True
            if n >= max_steps:
                raise ScheduleError("step limit exceeded")
            if bg_flush_prob and rng.random() < bg_flush_prob:
                self.bg_flush(rng.choice(sorted(self.mem.cells)))
            if early_commit_prob and rng.random() < early_commit_prob:
                pend = self.mem.pending_flushes()
                if pend:
                    self.early_commit(rng.choice(pend))
            self.step(rng.choice(live))
            n += 1

    def run_steps(self, rng: random.Random, n: int) -> int:
        """At most ``n`` uniformly scheduled steps; returns how many ran."""
        for i in range(n):
            live = self.runnable()
            if not live:
                return i
            self.step(rng.choice(live))
        return n

    # -- persistence events -----------------------------------------------

    def bg_flush(self, cell: int) -> None:
        self.trace.append(Directive("bg_flush", cell))
        self.mem.background_flush(cell)

    def early_commit(self, fid: int) -> None:
        self.trace.append(Directive("early_commit", fid))
        self.mem.early_commit(fid)

    def crash(self) -> PersistentImage:
        self.trace.append(Directive("crash"))
        for wk in self.workers.values():
            if not wk.done:
                wk.g.throw(greenlet.GreenletExit)
            wk.dead = True
        image = self.mem.crash()
        self.images.append(image)
        self.set = recover(image, self.impl, self.mem, contains=self.contains,
                           max_list_length=self.max_list_length)
        return image

    # -- schedules --------------------------------------------------------

    def execute(self, directives: Iterable[Directive]) -> None:
        for d in directives:
            if d.kind == "step":
                self.step(d.arg)
            elif d.kind == "bg_flush":
                self.bg_flush(d.arg)
            elif d.kind == "early_commit":
                self.early_commit(d.arg)
            elif d.kind == "crash":
                self.crash()
            else:
                raise ScheduleError(f"unknown directive {d.kind!r}")

    # -- inspection -------------------------------------------------------

    @property
    def events(self) -> list[Event]:
        return self.mem.events

    def persistent_set(self) -> set[int]:
        from .recovery import persistent_abstract_set
        return persistent_abstract_set(self.mem.image(), self.impl)

    def volatile_set(self) -> set[int]:
        if self.impl == "ld":
            return {self.mem.key(n) for n in self.set.nodes()
                    if not tl.is_marked(self.mem.peek(n)[0])}
        return self.set.keys()
