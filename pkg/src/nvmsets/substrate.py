"""Shared-memory layer the lists are written against.

Two implementations share one interface:

* :class:`NativeSubstrate` runs under real threads.  A double-width CAS is
  emulated with striped locks because CPython exposes no cmpxchg16b; flushes
  and fences only bump counters.
* :class:`SimSubstrate` models volatile and persistent memory separately,
  logs every event, and lets a scheduler interleave workers one primitive at a
  time, inject background flushes, commit flushes early, and crash.

One cell holds one node (one cache line): an immutable ``(key, value)``
payload plus the mutable word pair ``(next, old)``.  Cell ids are node
addresses, so a link word is just the cell id with tag bits or'ed in.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable

from . import taglink as tl

WordPair = tuple[int, int]

# Operation names and the stats class each one is charged to.
OP_CLASS = {"insert": "update", "remove": "update", "contains": "search"}
CLASSES = ("search", "update", "other")


class SubstrateFault(Exception):
    """Access to a cell that was never allocated."""


class Unsupported(Exception):
    """Operation not available on this substrate."""


@dataclass
class ClassCounters:
    flushes: int = 0
    fences: int = 0
    ops: int = 0
    successes: int = 0


@dataclass
class PsyncStats:
    flushes: int = 0
    fences: int = 0
    redundant_flushes: int = 0
    redundant_fences: int = 0
    by_class: dict[str, ClassCounters] = field(
        default_factory=lambda: {c: ClassCounters() for c in CLASSES}
    )

    @property
    def psyncs(self) -> int:
        # A psync is counted by its fence.
        return self.fences

    @property
    def redundant_psyncs(self) -> int:
        return self.redundant_fences

    def psyncs_per(self, cls: str, successful_only=False) -> float:
        c = self.by_class[cls]
        n = c.successes if successful_only else c.ops
        return c.fences / n if n else 0.0

    def merge(self, other: PsyncStats) -> None:
        self.flushes += other.flushes
        self.fences += other.fences
        self.redundant_flushes += other.redundant_flushes
        self.redundant_fences += other.redundant_fences
        for name, c in other.by_class.items():
            mine = self.by_class[name]
            mine.flushes += c.flushes
            mine.fences += c.fences
            mine.ops += c.ops
            mine.successes += c.successes


@dataclass
class Event:
    seq: int
    kind: str
    worker: int | None = None
    cell: int | None = None
    value_before: WordPair | None = None
    value_after: WordPair | None = None
    extra: dict = field(default_factory=dict)

    def get(self, name, default=None):
        return self.extra.get(name, default)

    def to_json(self) -> dict:
        d = {
            "seq": self.seq,
            "kind": self.kind,
            "worker": self.worker,
            "cell": self.cell,
            "value_before": tl.render_pair(self.value_before),
            "value_after": tl.render_pair(self.value_after),
        }
        for k, v in self.extra.items():
            if k == "expected":
                v = tl.render_pair(v)
            d[k] = v
        return d

    @classmethod
    def from_json(cls, d: dict) -> Event:
        d = dict(d)
        extra = {
            k: v
            for k, v in d.items()
            if k not in ("seq", "kind", "worker", "cell", "value_before", "value_after")
        }
        if "expected" in extra:
            extra["expected"] = tl.parse_pair(extra["expected"])
        return cls(
            seq=d["seq"],
            kind=d["kind"],
            worker=d.get("worker"),
            cell=d.get("cell"),
            value_before=tl.parse_pair(d.get("value_before")),
            value_after=tl.parse_pair(d.get("value_after")),
            extra=extra,
        )


@dataclass(frozen=True)
class PersistentImage:
    """Contents of persistent memory at a crash: cell -> word pair, plus payloads."""

    cells: dict[int, WordPair]
    payload: dict[int, tuple[int, int]]

    def find_key(self, key: int) -> int:
        for cell, (k, _) in self.payload.items():
            if k == key:
                return cell
        raise KeyError(key)

    @property
    def head(self) -> int:
        return self.find_key(tl.KEY_MIN)

    @property
    def tail(self) -> int:
        return self.find_key(tl.KEY_MAX)


class Substrate:
    """Interface shared by both substrates."""

    kind = "abstract"

    def alloc(self, key: int, value: int, nxt: int, old: int = tl.NIL) -> int:
        raise NotImplementedError

    def key(self, cell: int) -> int:
        raise NotImplementedError

    def value(self, cell: int) -> int:
        raise NotImplementedError

    def read(self, cell: int) -> WordPair:
        raise NotImplementedError

    def read_next(self, cell: int) -> int:
        raise NotImplementedError

    def read_old(self, cell: int) -> int:
        raise NotImplementedError

    def dwcas(self, cell: int, expected: WordPair, desired: WordPair) -> tuple[WordPair, bool]:
        raise NotImplementedError

    def flush(self, cell: int) -> int:
        raise NotImplementedError

    def fence(self) -> None:
        raise NotImplementedError

    def begin_op(self, name: str, key: int) -> int:
        raise NotImplementedError

    def end_op(self, result: bool) -> None:
        raise NotImplementedError

    def note(self, kind: str, cell: int) -> None:
        """Annotation hook (key writes, claims); a no-op outside simulation."""

    def stats(self) -> PsyncStats:
        raise NotImplementedError

    def reset_stats(self) -> None:
        raise NotImplementedError

    def background_flush(self, cell: int) -> None:
        raise Unsupported("background flushes exist only in the simulated substrate")

    def crash(self) -> PersistentImage:
        raise Unsupported("crashes exist only in the simulated substrate")

    def redundancy_report(self) -> list[int]:
        raise Unsupported("redundancy reports need the simulated event log")


# ---------------------------------------------------------------------------
# native


class NativeSubstrate(Substrate):
    kind = "native"
    STRIPES = 64

    def __init__(self):
        self._cells: list[WordPair] = []
        self._keys: list[int] = []
        self._values: list[int] = []
        self._alloc_lock = threading.Lock()
        self._stripes = [threading.Lock() for _ in range(self.STRIPES)]
        self._local = threading.local()
        self._all_stats: list[PsyncStats] = []
        self._stats_lock = threading.Lock()
        self._op_ids = itertools.count(1)

    def _index(self, cell: int) -> int:
        i = cell // tl.NODE_ALIGN - 1
        if cell % tl.NODE_ALIGN or not 0 <= i < len(self._cells):
            raise SubstrateFault(f"unknown cell {cell:#x}")
        return i

    def _my_stats(self) -> PsyncStats:
        s = getattr(self._local, "stats", None)
        if s is None:
            s = self._local.stats = PsyncStats()
            self._local.cls = "other"
            with self._stats_lock:
                self._all_stats.append(s)
        return s

    def alloc(self, key, value, nxt, old=tl.NIL):
        with self._alloc_lock:
            self._cells.append((nxt, old))
            self._keys.append(key)
            self._values.append(value)
            return len(self._cells) * tl.NODE_ALIGN

    def key(self, cell):
        return self._keys[self._index(cell)]

    def value(self, cell):
        return self._values[self._index(cell)]

    def read(self, cell):
        return self._cells[self._index(cell)]

    def read_next(self, cell):
        return self._cells[self._index(cell)][0]

    def read_old(self, cell):
        return self._cells[self._index(cell)][1]

    def dwcas(self, cell, expected, desired):
        i = self._index(cell)
        with self._stripes[i % self.STRIPES]:
            prior = self._cells[i]
            if prior == expected:
                self._cells[i] = desired
                return prior, True
            return prior, False

    def flush(self, cell):
        self._index(cell)
        s = self._my_stats()
        s.flushes += 1
        s.by_class[self._local.cls].flushes += 1
        return 0

    def fence(self):
        s = self._my_stats()
        s.fences += 1
        s.by_class[self._local.cls].fences += 1

    def begin_op(self, name, key):
        self._my_stats()
        self._local.cls = OP_CLASS[name]
        return next(self._op_ids)

    def end_op(self, result):
        s = self._my_stats()
        c = s.by_class[self._local.cls]
        c.ops += 1
        if result:
            c.successes += 1
        self._local.cls = "other"

    def stats(self):
        total = PsyncStats()
        with self._stats_lock:
            for s in self._all_stats:
                total.merge(s)
        return total

    def reset_stats(self):
        with self._stats_lock:
            for s in self._all_stats:
                s.__init__()

    def reset_my_stats(self):
        """Zero the calling thread's counters (warmup cut-off)."""
        self._my_stats().__init__()


# ---------------------------------------------------------------------------
# simulated

COMMIT_MODES = ("fence", "flush")


@dataclass
class _Cell:
    volatile: WordPair
    persistent: WordPair
    key: int
    value: int
    # volatile write count, and the count the persistent copy reflects
    vver: int = 0
    pver: int = 0


@dataclass
class _Pending:
    fid: int
    cell: int
    snapshot: WordPair
    version: int
    committed: bool = False


class SimSubstrate(Substrate):
    """Deterministic simulated NVM.

    ``commit_mode`` picks the value a fence writes back for a pending flush:
    ``"fence"`` (the volatile value at the fence, default) or ``"flush"``
    (the value snapshotted when the flush was issued).  Early commits are
    requested separately through :meth:`early_commit`.

    ``yield_hook`` is called before each primitive; a scheduler uses it to
    park the calling worker.  ``worker`` is the id charged for the next
    primitive and is maintained by whoever drives the workers.
    """

    kind = "sim"

    def __init__(self, commit_mode="fence", log_reads=False):
        if commit_mode not in COMMIT_MODES:
            raise ValueError(f"commit_mode must be one of {COMMIT_MODES}")
        self.commit_mode = commit_mode
        self.log_reads = log_reads
        self.cells: dict[int, _Cell] = {}
        self.events: list[Event] = []
        self.pending: dict[int, list[_Pending]] = {}
        self.worker = 0
        self.epoch = 0
        self.yield_hook: Callable[[], None] | None = None
        self.observers: list[Callable[[Event | None], None]] = []
        self._next_addr = tl.NODE_ALIGN
        self._op_ids = itertools.count(1)
        self._current_op: dict[int, tuple[int, str, int]] = {}
        self._flushes: dict[int, _Pending] = {}
        self._stats = PsyncStats()
        # incremental redundancy tracking
        self._flushed_clean: dict[int, bool] = {}
        self._any_fence = False
        self._useful_flush_since_fence = False
        self._redundant_ids: list[int] = []

    # -- internals --------------------------------------------------------

    def _log(self, kind, worker=None, cell=None, before=None, after=None, **extra) -> Event:
        ev = Event(len(self.events), kind, worker, cell, before, after, extra)
        self.events.append(ev)
        return ev

    def _cell(self, cell) -> _Cell:
        try:
            return self.cells[cell]
        except KeyError:
            raise SubstrateFault(f"unknown cell {cell:#x}" if isinstance(cell, int) else f"unknown cell {cell!r}") from None

    def _step(self) -> None:
        if self.yield_hook is not None:
            self.yield_hook()

    def _notify(self, ev=None) -> None:
        for obs in self.observers:
            obs(ev)

    def _destroy(self, cell) -> None:
        self._flushed_clean[cell] = False

    def _cls(self) -> str:
        cur = self._current_op.get(self.worker)
        return OP_CLASS[cur[1]] if cur else "other"

    def _set_persistent(self, c: _Cell, cell: int, value: WordPair, version: int,
                        kind: str, **extra) -> Event | None:
        # write-backs of one line are ordered: an older snapshot never lands
        # on top of a newer persisted value
        if version < c.pver:
            return None
        before = c.persistent
        c.persistent = value
        c.pver = version
        return self._log(kind, self.worker if kind != "bg_flush" else None, cell, before, value, **extra)

    # -- allocation and payload -------------------------------------------

    def alloc(self, key, value, nxt, old=tl.NIL):
        addr = self._next_addr
        self._next_addr += tl.NODE_ALIGN
        # Node contents are persistent from creation: the creating flush is
        # ordered before the locked RMW that publishes the node.
        self.cells[addr] = _Cell((nxt, old), (nxt, old), key, value)
        self._log("alloc", self.worker, addr, None, (nxt, old), key=key, value=value)
        return addr

    def key(self, cell):
        return self._cell(cell).key

    def value(self, cell):
        return self._cell(cell).value

    # -- volatile primitives (one scheduler step each) --------------------

    def read(self, cell):
        self._step()
        v = self._cell(cell).volatile
        if self.log_reads:
            self._log("read", self.worker, cell, v, v)
        self._notify()
        return v

    def read_next(self, cell):
        return self._read_word(cell, 0)

    def read_old(self, cell):
        return self._read_word(cell, 1)

    def _read_word(self, cell, which):
        self._step()
        v = self._cell(cell).volatile
        if self.log_reads:
            self._log("read", self.worker, cell, v, v, word=("next", "old")[which])
        self._notify()
        return v[which]

    def dwcas(self, cell, expected, desired):
        self._step()
        c = self._cell(cell)
        prior = c.volatile
        ok = prior == expected
        if ok:
            c.volatile = desired
            c.vver += 1
            if desired != prior:
                self._destroy(cell)
        ev = self._log(
            "dwcas", self.worker, cell, prior, c.volatile, ok=ok, expected=expected
        )
        self._notify(ev)
        return prior, ok

    # -- persistence ------------------------------------------------------

    def flush(self, cell):
        self._step()
        c = self._cell(cell)
        cls = self._cls()
        ev = self._log("flush", self.worker, cell, c.volatile, c.volatile, cls=cls)
        p = _Pending(ev.seq, cell, c.volatile, c.vver)
        self.pending.setdefault(self.worker, []).append(p)
        self._flushes[ev.seq] = p
        redundant = self._flushed_clean.get(cell, False)
        self._flushed_clean[cell] = True
        if redundant:
            self._stats.redundant_flushes += 1
        else:
            self._useful_flush_since_fence = True
        ev.extra["redundant"] = redundant
        self._stats.flushes += 1
        self._stats.by_class[cls].flushes += 1
        self._notify(ev)
        return ev.seq

    def fence(self):
        self._step()
        cls = self._cls()
        redundant = self._any_fence and not self._useful_flush_since_fence
        self._any_fence = True
        self._useful_flush_since_fence = False
        ev = self._log("fence", self.worker, cls=cls, redundant=redundant)
        if redundant:
            self._stats.redundant_fences += 1
            self._redundant_ids.append(ev.seq)
        self._stats.fences += 1
        self._stats.by_class[cls].fences += 1
        for p in self.pending.pop(self.worker, []):
            del self._flushes[p.fid]
            if p.committed:
                continue
            c = self.cells[p.cell]
            if self.commit_mode == "fence":
                self._set_persistent(c, p.cell, c.volatile, c.vver, "commit", flush=p.fid, fence=ev.seq)
            else:
                self._set_persistent(c, p.cell, p.snapshot, p.version, "commit", flush=p.fid, fence=ev.seq)
        self._notify(ev)

    def background_flush(self, cell):
        c = self._cell(cell)
        ev = self._set_persistent(c, cell, c.volatile, c.vver, "bg_flush")
        self._notify(ev)

    def early_commit(self, fid: int) -> None:
        """Write back a pending flush now, before its fence."""
        p = self._flushes.get(fid)
        if p is None or p.committed:
            raise SubstrateFault(f"no uncommitted pending flush {fid}")
        p.committed = True
        c = self.cells[p.cell]
        if self.commit_mode == "fence":
            ev = self._set_persistent(c, p.cell, c.volatile, c.vver, "early_commit", flush=fid)
        else:
            ev = self._set_persistent(c, p.cell, p.snapshot, p.version, "early_commit", flush=fid)
        if ev is not None:
            ev.worker = None
        self._notify(ev)

    def pending_flushes(self) -> list[int]:
        return sorted(fid for fid, p in self._flushes.items() if not p.committed)

    # -- operations and annotations ---------------------------------------

    def begin_op(self, name, key):
        opid = next(self._op_ids)
        self._current_op[self.worker] = (opid, name, key)
        self._notify(self._log("invoke", self.worker, op=opid, name=name, key=key, epoch=self.epoch))
        return opid

    def end_op(self, result):
        opid, name, key = self._current_op.pop(self.worker)
        cls = OP_CLASS[name]
        self._stats.by_class[cls].ops += 1
        if result:
            self._stats.by_class[cls].successes += 1
        self._notify(self._log("respond", self.worker, op=opid, name=name, key=key, result=bool(result)))

    def current_op(self, worker=None):
        return self._current_op.get(self.worker if worker is None else worker)

    def pending_ops(self) -> list[tuple[int, str, int]]:
        return list(self._current_op.values())

    def note(self, kind, cell):
        cur = self._current_op.get(self.worker)
        self._log(kind, self.worker, cell, op=cur[0] if cur else None)

    # -- crash and recovery -----------------------------------------------

    def image(self) -> PersistentImage:
        return PersistentImage(
            {a: c.persistent for a, c in self.cells.items()},
            {a: (c.key, c.value) for a, c in self.cells.items()},
        )

    def crash(self):
        img = self.image()
        for c in self.cells.values():
            c.volatile = c.persistent
            c.vver = c.pver = max(c.vver, c.pver)
        self.pending.clear()
        self._flushes.clear()
        self._current_op.clear()
        self._log("crash", epoch=self.epoch)
        self.epoch += 1
        self._notify()
        return img

    def restore(self, values: dict[int, WordPair]) -> None:
        """Recovery writes: set volatile and persistent contents together."""
        for cell, value in values.items():
            c = self._cell(cell)
            if c.volatile == value and c.persistent == value:
                continue
            before = c.volatile
            c.volatile = c.persistent = value
            c.vver = c.pver = c.vver + 1
            self._destroy(cell)
            self._log("recover", None, cell, before, value)
        self._notify()

    @classmethod
    def from_image(cls, image: PersistentImage, **kw) -> SimSubstrate:
        mem = cls(**kw)
        for addr in sorted(image.cells):
            key, value = image.payload[addr]
            mem.cells[addr] = _Cell(image.cells[addr], image.cells[addr], key, value)
            mem._log("alloc", None, addr, None, image.cells[addr], key=key, value=value)
        if image.cells:
            mem._next_addr = max(image.cells) + tl.NODE_ALIGN
        return mem

    # -- reporting --------------------------------------------------------

    def stats(self):
        return self._stats

    def reset_stats(self):
        self._stats = PsyncStats()

    def redundancy_report(self):
        return list(self._redundant_ids)

    # -- raw inspection for auditors and tests (not scheduler steps) ------

    def peek(self, cell) -> WordPair:
        return self._cell(cell).volatile

    def peek_persistent(self, cell) -> WordPair:
        return self._cell(cell).persistent


def image_at(events: Iterable[Event], upto: int) -> PersistentImage:
    """Persistent image after applying every event with ``seq < upto``."""
    cells: dict[int, WordPair] = {}
    payload: dict[int, tuple[int, int]] = {}
    for ev in events:
        if ev.seq >= upto:
            break
        if ev.kind == "alloc":
            cells[ev.cell] = ev.value_after
            payload[ev.cell] = (ev.extra["key"], ev.extra["value"])
        elif ev.kind in ("commit", "bg_flush", "early_commit", "recover"):
            cells[ev.cell] = ev.value_after
    return PersistentImage(cells, payload)


PERSISTENCE_KINDS = ("commit", "bg_flush", "early_commit")
