"""Offline verdicts over simulated event logs.

Histories are rebuilt from the substrate event log.  Every verdict reduces to
one linearizability search over *entries*: an operation with a real-time
interval ``[lo, hi]`` (event sequence numbers), an optional fixed result, and
a flag saying whether a witness may leave it out.  The correctness conditions
differ only in how pending-at-crash operations become entries:

* durable: pending operations may take effect at any time after their
  invocation, or never;
* strict: pending operations take effect before the crash, or never;
* SLE: as strict, but only operations whose key write happened before the
  crash may take effect, and they take effect exactly at that write.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .substrate import PERSISTENCE_KINDS, Event, PersistentImage, WordPair, image_at

INF = math.inf
DEFAULT_MAX_OPS = 12


class HistoryError(Exception):
    """History is malformed or outside what a check accepts."""


# ---------------------------------------------------------------------------
# sequential specification

def seq_apply(state: frozenset, name: str, key: int) -> tuple[frozenset, bool]:
    present = key in state
    if name == "insert":
        return (state if present else state | {key}), not present
    if name == "remove":
        return (state - {key} if present else state), present
    if name == "contains":
        return state, present
    raise ValueError(f"unknown operation {name!r}")


# ---------------------------------------------------------------------------
# histories

@dataclass
class Operation:
    id: int
    worker: int | None
    name: str
    key: int
    inv: float
    resp: float | None = None
    result: bool | None = None
    epoch: int = 0
    claim: int | None = None
    key_write: int | None = None
    node: int | None = None

    @property
    def pending(self) -> bool:
        return self.resp is None


@dataclass
class History:
    ops: list[Operation]
    crashes: list[int] = field(default_factory=list)
    initial: frozenset = frozenset()
    events: list[Event] | None = None

    def op(self, opid: int) -> Operation:
        for o in self.ops:
            if o.id == opid:
                return o
        raise KeyError(opid)

    def crash_after(self, seq: float) -> float:
        for c in self.crashes:
            if c > seq:
                return c
        return INF

    def check_well_formed(self) -> None:
        busy: dict[int, Operation] = {}
        for o in sorted(self.ops, key=lambda o: o.inv):
            prev = busy.get(o.worker)
            if prev is not None and (prev.resp is None or prev.resp > o.inv):
                if prev.resp is not None or self.crash_after(prev.inv) > o.inv:
                    raise HistoryError(f"worker {o.worker} invoked op {o.id} before op {prev.id} returned")
            busy[o.worker] = o


def history_from_events(events: list[Event], start: int = 0,
                        initial: Iterable[int] = ()) -> History:
    ops: dict[int, Operation] = {}
    crashes = []
    owner: dict[int, int] = {}
    for ev in events:
        if ev.seq < start:
            continue
        k = ev.kind
        if k == "invoke":
            ops[ev.get("op")] = Operation(ev.get("op"), ev.worker, ev.get("name"), ev.get("key"),
                                          ev.seq, epoch=ev.get("epoch", 0))
        elif k == "respond":
            o = ops.get(ev.get("op"))
            if o is not None:
                o.resp = ev.seq
                o.result = ev.get("result")
        elif k == "crash":
            crashes.append(ev.seq)
        elif k == "claim":
            o = ops.get(ev.get("op"))
            if o is not None and o.claim is None:
                o.claim = ev.seq
                o.node = ev.cell
                owner[ev.cell] = o.id
        elif k == "key_write":
            o = ops.get(owner.get(ev.cell))
            if o is not None and o.key_write is None:
                o.key_write = ev.seq
    return History(sorted(ops.values(), key=lambda o: o.inv), crashes, frozenset(initial), events)


def load_eventlog(path) -> list[Event]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(Event.from_json(json.loads(line)))
    return out


def dump_eventlog(events: Iterable[Event], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_json()) + "\n")


# ---------------------------------------------------------------------------
# linearizability search

@dataclass(frozen=True)
class Entry:
    id: int
    name: str
    key: int
    result: bool | None
    lo: float
    hi: float
    optional: bool = False


@dataclass
class Verdict:
    passed: bool
    witness: list[int] | None = None
    certificate: dict | None = None

    def __bool__(self):
        return self.passed

    def to_json(self) -> dict:
        if self.passed:
            return {"pass": True, "witness": self.witness}
        return {"pass": False, "certificate": self.certificate}


def search(entries: list[Entry], initial: frozenset = frozenset()) -> Verdict:
    """Incremental search with real-time pruning and memoized dead states."""
    n = len(entries)
    mandatory = 0
    for i, e in enumerate(entries):
        if not e.optional:
            mandatory |= 1 << i
    dead: set[tuple[int, frozenset]] = set()
    order: list[int] = []
    best: list[int] = []

    def eligible(done: int) -> list[int]:
        rest = [i for i in range(n) if not done >> i & 1]
        out = []
        for i in rest:
            lo = entries[i].lo
            if all(entries[j].hi > lo for j in rest if j != i):
                out.append(i)
        return out

    def dfs(done: int, state: frozenset) -> bool:
        nonlocal best
        if done & mandatory == mandatory:
            return True
        if (done, state) in dead:
            return False
        for i in eligible(done):
            e = entries[i]
            new_state, expected = seq_apply(state, e.name, e.key)
            if e.result is None or e.result == expected:
                order.append(e.id)
                if len(order) > len(best):
                    best = list(order)
                if dfs(done | 1 << i, new_state):
                    return True
                order.pop()
        for i in range(n):
            if entries[i].optional and not done >> i & 1:
                if dfs(done | 1 << i, state):
                    return True
        dead.add((done, state))
        return False

    if dfs(0, initial):
        return Verdict(True, witness=list(order))
    return Verdict(False, certificate={
        "reason": "no linearization",
        "longest_prefix": best,
        "operations": [e.__dict__ | {"lo": _num(e.lo), "hi": _num(e.hi)} for e in entries],
    })


def _num(x):
    return None if x == INF else x


def search_naive(entries: list[Entry], initial: frozenset = frozenset()) -> bool:
    """All subsets of optional entries times all permutations."""
    opt = [e for e in entries if e.optional]
    req = [e for e in entries if not e.optional]
    for r in range(len(opt) + 1):
        for chosen in itertools.combinations(opt, r):
            for perm in itertools.permutations(req + list(chosen)):
                if _valid_order(perm, initial):
                    return True
    return False


def _valid_order(perm, initial) -> bool:
    for a in range(len(perm)):
        for b in range(a + 1, len(perm)):
            if perm[b].hi < perm[a].lo:
                return False
    state = initial
    for e in perm:
        state, expected = seq_apply(state, e.name, e.key)
        if e.result is not None and e.result != expected:
            return False
    return True


def _guard(history: History, max_ops: int) -> None:
    if len(history.ops) > max_ops:
        raise HistoryError(f"history has {len(history.ops)} operations; cap is {max_ops}")
    history.check_well_formed()


def _completed(o: Operation) -> Entry:
    return Entry(o.id, o.name, o.key, o.result, o.inv, o.resp)


def check_linearizable(history: History, max_ops=DEFAULT_MAX_OPS) -> Verdict:
    """Crash-free histories; operations still pending may complete at the end or not at all."""
    if history.crashes:
        raise HistoryError("history contains crashes; use a durable or strict check")
    _guard(history, max_ops)
    entries = [_completed(o) if not o.pending
               else Entry(o.id, o.name, o.key, None, o.inv, INF, True)
               for o in history.ops]
    return search(entries, history.initial)


def check_durable_linearizable(history: History, max_ops=DEFAULT_MAX_OPS) -> Verdict:
    _guard(history, max_ops)
    entries = [_completed(o) if not o.pending
               else Entry(o.id, o.name, o.key, None, o.inv, INF, True)
               for o in history.ops]
    return search(entries, history.initial)


def check_strict_linearizable(history: History, max_ops=DEFAULT_MAX_OPS) -> Verdict:
    _guard(history, max_ops)
    entries = [_completed(o) if not o.pending
               else Entry(o.id, o.name, o.key, None, o.inv, history.crash_after(o.inv), True)
               for o in history.ops]
    return search(entries, history.initial)


def check_sle(history: History, max_ops=DEFAULT_MAX_OPS) -> Verdict:
    _guard(history, max_ops)
    entries = []
    for o in history.ops:
        if not o.pending:
            entries.append(_completed(o))
            continue
        crash = history.crash_after(o.inv)
        kw = o.key_write
        if o.name != "contains" and kw is not None and kw < crash:
            entries.append(Entry(o.id, o.name, o.key, True, kw, kw, True))
        # pending operations without a key write before the crash are dropped
    return search(entries, history.initial)


# ---------------------------------------------------------------------------
# critical persistence events

def _pas(cells, payload, impl):
    from .recovery import persistent_abstract_set
    return persistent_abstract_set(PersistentImage(cells, payload), impl)


def cpe_flips(history: History, op: Operation, impl: str) -> list[int]:
    """Persistence events in the op's decided window after which a post-crash
    identical update would fail where it would have succeeded just before."""
    if history.events is None:
        raise HistoryError("CPE search needs the simulated event log")
    if op.name == "contains" or op.claim is None:
        return []
    if op.result is False:
        return []
    end = op.resp if op.resp is not None else history.crash_after(op.inv)
    cells: dict[int, WordPair] = {}
    payload: dict[int, tuple[int, int]] = {}
    want_present = op.name == "insert"
    flips = []
    for ev in history.events:
        if ev.seq > end:
            break
        if ev.kind == "alloc":
            cells[ev.cell] = ev.value_after
            payload[ev.cell] = (ev.get("key"), ev.get("value"))
            continue
        if ev.kind not in PERSISTENCE_KINDS and ev.kind != "recover":
            continue
        if ev.kind == "recover" or ev.seq < op.claim or cells.get(ev.cell) == ev.value_after:
            cells[ev.cell] = ev.value_after
            continue
        before = (op.key in _pas(cells, payload, impl)) == want_present
        cells[ev.cell] = ev.value_after
        after = (op.key in _pas(cells, payload, impl)) == want_present
        if not before and after:
            flips.append(ev.seq)
    return flips


def find_cpe(history: History, op: Operation, impl: str) -> int | None:
    flips = cpe_flips(history, op, impl)
    return flips[0] if flips else None


def crash_outcome(history: History, op: Operation, impl: str, upto: int) -> bool:
    """Crash just before event ``upto``, recover, and run ``op`` again alone."""
    from .recovery import recover

    s = recover(image_at(history.events, upto), impl)
    return s.do(op.name, op.key)


# ---------------------------------------------------------------------------
# redundant psyncs, recomputed from scratch

def redundancy_bruteforce(events: list[Event]) -> dict[str, list[int]]:
    """Redundant flushes and fences by direct scan of the definition."""
    flushes = [e for e in events if e.kind == "flush"]
    writes = [e for e in events
              if (e.kind == "dwcas" and e.get("ok") and e.value_before != e.value_after)
              or (e.kind == "recover")]
    red_flush = set()
    for f in flushes:
        for g in flushes:
            if g.seq >= f.seq or g.cell != f.cell:
                continue
            if not any(w.cell == f.cell and g.seq < w.seq < f.seq for w in writes):
                red_flush.add(f.seq)
                break
    fences = [e for e in events if e.kind == "fence"]
    red_fence = []
    for i, fe in enumerate(fences):
        if i == 0:
            continue
        prev = fences[i - 1]
        between = [f for f in flushes if prev.seq < f.seq < fe.seq]
        if all(f.seq in red_flush for f in between):
            red_fence.append(fe.seq)
    return {"flushes": sorted(red_flush), "fences": red_fence, "psyncs": red_fence}


# ---------------------------------------------------------------------------
# the n-1 redundant psync execution

def theorem2_scenario(n: int, impl: str = "pd", key: int = 1) -> int:
    """Drive ``n`` identical inserts so that ``n - 1`` of them psync a cell nobody changed.

    The winner runs until its link flush has been fenced (its critical
    persistence event) and stalls before setting the durable bit.  Each loser
    then runs until it has fenced its own flush of the same cell.  Everyone
    is released afterwards.  Returns the number of redundant psyncs.
    """
    from .sim import Simulation

    if n < 1:
        raise ValueError("need at least one process")
    sim = Simulation(impl=impl)
    workers = [sim.spawn([("insert", key)]) for _ in range(n)]
    winner, losers = workers[0], workers[1:]
    sim.run_until(winner, lambda e: e.kind == "fence")
    for w in losers:
        sim.run_until(w, lambda e: e.kind == "fence")
    for w in losers + [winner]:
        sim.finish(w)
    results = [sim.workers[w].results[0] for w in workers]
    assert results.count(True) == 1, results
    return len(sim.mem.redundancy_report())


# ---------------------------------------------------------------------------
# persist-free searches are durable but not SLE

def theorem10_scenario(impl: str = "pd", contains: str = "persist-free", key: int = 5):
    """A remove persists its decision and stalls; a search answers from the
    unpersisted state; the system crashes; a fresh search disagrees.

    Returns ``(history, sim)``.  With a persist-free search the history is
    durably linearizable but fails SLE; persisting searches pass both.
    """
    from .sim import Simulation

    sim = Simulation(impl=impl, contains=contains)
    sim.set.insert(key)
    start = len(sim.events)
    remover = sim.spawn([("remove", key)])
    searcher = sim.spawn([("contains", key)])
    sim.run_until(remover, lambda e: e.kind == "key_write")
    sim.run_until(remover, lambda e: e.kind == "commit")
    sim.finish(searcher)
    sim.crash()
    sim.finish(sim.spawn([("contains", key)]))
    return history_from_events(sim.events, start=start, initial={key}), sim
