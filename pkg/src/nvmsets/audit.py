"""Global-state auditor for simulated runs.

Attach an :class:`Auditor` to a :class:`SimSubstrate`; it is called after
every primitive and records every invariant violation it sees.  Checks:

* ``inv1``  no reachable node is both marked and dflagged
* ``inv2``  a marked next link keeps its target and its mark
* ``inv3``  (PD) a reachable marked node has a dflagged predecessor and an
  unmarked successor
* ``inv4``  a non-durable next link has an old field naming the last durable
  target (LD: marked links are exempt, marks carry no old value)
* ``inv5``  persistent set minus volatile set only holds keys of pending
  removes, and the converse only keys of pending inserts
* ``no-dflag`` (LD) no dflag bit is ever written

Between a crash and the end of recovery memory is allowed to be anything a
crash can leave behind, so state checks are skipped there.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import taglink as tl
from .recovery import persistent_abstract_set
from .substrate import PERSISTENCE_KINDS, Event, SimSubstrate


@dataclass(frozen=True)
class Violation:
    check: str
    seq: int
    detail: str


class AuditError(AssertionError):
    pass


class Auditor:
    def __init__(self, mem: SimSubstrate, impl: str, head: int, tail: int, limit=50):
        if impl not in ("pd", "ld"):
            raise ValueError(f"unknown impl {impl!r}")
        self.mem = mem
        self.impl = impl
        self.head = head
        self.tail = tail
        self.limit = limit
        self.violations: list[Violation] = []
        self.checks = 0
        self._pos = 0
        self._last_durable: dict[int, int] = {}
        self._recovering = False
        mem.observers.append(self)

    def detach(self) -> None:
        self.mem.observers.remove(self)

    def _fail(self, check, detail):
        if len(self.violations) < self.limit:
            self.violations.append(Violation(check, len(self.mem.events) - 1, detail))

    def raise_if_violated(self) -> None:
        if self.violations:
            v = self.violations[0]
            raise AuditError(f"{len(self.violations)} violation(s); first: {v.check} at seq {v.seq}: {v.detail}")

    # -- incremental, per event ------------------------------------------

    def _consume(self) -> None:
        events = self.mem.events
        while self._pos < len(events):
            self._event(events[self._pos])
            self._pos += 1

    def _event(self, ev: Event) -> None:
        k = ev.kind
        if k == "crash":
            self._recovering = True
            return
        if k in ("alloc", "recover"):
            nxt = ev.value_after[0]
            if tl.is_durable(nxt):
                self._last_durable[ev.cell] = nxt
            return
        if k != "dwcas" or not ev.get("ok"):
            return
        before, after = ev.value_before[0], ev.value_after[0]
        if tl.is_marked(before) and (tl.unmark(before) != tl.unmark(after) or not tl.is_marked(after)):
            self._fail("inv2", f"marked link of {ev.cell:#x} changed {tl.render_next(before)} -> {tl.render_next(after)}")
        if self.impl == "ld" and tl.is_dflagged(after):
            self._fail("no-dflag", f"dflag written to {ev.cell:#x}")
        if tl.is_durable(after):
            self._last_durable[ev.cell] = after

    # -- whole state --------------------------------------------------------

    def __call__(self, ev: Event | None) -> None:
        self._consume()
        if self._recovering:
            if self.mem.events[-1].kind == "crash":
                return
            self._recovering = False
        elif ev is None:
            return  # reads do not change state
        self.check_state()

    def _reachable(self) -> list[int]:
        peek = self.mem.peek
        out = [self.head]
        node = tl.unmark(peek(self.head)[0])
        while node != self.tail:
            if node in out or len(out) > len(self.mem.cells):
                self._fail("shape", "cycle in volatile list")
                break
            out.append(node)
            node = tl.unmark(peek(node)[0])
        return out

    def check_state(self) -> None:
        self.checks += 1
        mem = self.mem
        chain = self._reachable()
        for i, n in enumerate(chain):
            nxt, old = mem.peek(n)
            if tl.is_marked(nxt) and tl.is_dflagged(nxt):
                self._fail("inv1", f"{n:#x} marked and dflagged")
            if self.impl == "pd" and tl.is_marked(nxt):
                pred_next = mem.peek(chain[i - 1])[0]
                if not (tl.is_dflagged(pred_next) and tl.unmark(pred_next) == n):
                    self._fail("inv3", f"marked {n:#x} has predecessor link {tl.render_next(pred_next)}")
                succ = tl.unmark(nxt)
                if succ != self.tail and tl.is_marked(mem.peek(succ)[0]):
                    self._fail("inv3", f"marked {n:#x} has marked successor {succ:#x}")
            if not tl.is_durable(nxt) and not (self.impl == "ld" and tl.is_marked(nxt)):
                last = self._last_durable.get(n)
                if old == tl.NIL or last is None or tl.unmark(old) != tl.unmark(last):
                    self._fail("inv4", f"{n:#x} next {tl.render_next(nxt)} old {tl.render_old(old)} "
                                       f"last durable {tl.render_next(last) if last is not None else None}")
        if self.impl == "ld":
            volatile = {mem.key(n) for n in chain[1:] if not tl.is_marked(mem.peek(n)[0])}
        else:
            volatile = {mem.key(n) for n in chain[1:]}
        persistent = persistent_abstract_set(mem.image(), self.impl)
        pending = mem.pending_ops()
        removes = {k for _, name, k in pending if name == "remove"}
        inserts = {k for _, name, k in pending if name == "insert"}
        if not persistent - volatile <= removes:
            self._fail("inv5", f"persistent-only keys {sorted(persistent - volatile)} without pending remove")
        if not volatile - persistent <= inserts:
            self._fail("inv5", f"volatile-only keys {sorted(volatile - persistent)} without pending insert")


def check_cpe_ordering(events: list[Event]) -> list[int]:
    """LD: op ids of successful removes that responded before their mark persisted."""
    owner: dict[int, int] = {}
    mark_persisted: set[int] = set()
    bad = []
    for ev in events:
        if ev.kind == "claim":
            owner[ev.get("op")] = ev.cell
        elif ev.kind in PERSISTENCE_KINDS and ev.value_after is not None:
            if tl.is_marked(ev.value_after[0]):
                mark_persisted.add(ev.cell)
        elif ev.kind == "respond" and ev.get("name") == "remove" and ev.get("result"):
            node = owner.get(ev.get("op"))
            if node is None or node not in mark_persisted:
                bad.append(ev.get("op"))
    return bad
