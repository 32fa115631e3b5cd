from __future__ import annotations

from . import taglink as tl
from .substrate import Substrate

CONTAINS_VARIANTS = ("persist-all", "async-persist-all", "persist-last", "persist-free")


class ListBase:
    """Sentinels, the shared Persist helper and the public operation wrappers."""

    impl = "base"

    def __init__(self, mem: Substrate, contains="persist-last", max_list_length=4096,
                 head: int | None = None, tail: int | None = None):
        if contains not in CONTAINS_VARIANTS:
            raise ValueError(f"unknown contains variant {contains!r}")
        self.mem = mem
        self.contains_variant = contains
        self.max_list_length = max_list_length
        if head is None:
            tail = mem.alloc(tl.KEY_MAX, 0, tl.NIL)
            head = mem.alloc(tl.KEY_MIN, 0, tl.mark_durable(tail))
        self.head = head
        self.tail = tail

    # -- public API -------------------------------------------------------

    def insert(self, key: int, value: int = 0) -> bool:
        _check_key(key)
        self.mem.begin_op("insert", key)
        r = self._insert(key, value)
        self.mem.end_op(r)
        return r

    def remove(self, key: int) -> bool:
        _check_key(key)
        self.mem.begin_op("remove", key)
        r = self._remove(key)
        self.mem.end_op(r)
        return r

    def contains(self, key: int, variant: str | None = None) -> bool:
        _check_key(key)
        variant = variant or self.contains_variant
        fn = {
            "persist-all": self.contains_persist_all,
            "async-persist-all": self.contains_async_persist_all,
            "persist-last": self.contains_persist_last,
            "persist-free": self.contains_persist_free,
        }[variant]
        self.mem.begin_op("contains", key)
        r = fn(key)
        self.mem.end_op(r)
        return r

    def do(self, name: str, key: int) -> bool:
        if name == "insert":
            return self.insert(key)
        if name == "remove":
            return self.remove(key)
        if name == "contains":
            return self.contains(key)
        raise ValueError(f"unknown operation {name!r}")

    # -- shared helpers ---------------------------------------------------

    def persist(self, node: int, exp_next: int, old: int = tl.NIL) -> None:
        mem = self.mem
        mem.flush(node)
        mem.fence()
        if old == tl.NIL:
            old = mem.read_old(node)
        mem.dwcas(node, (exp_next, old), (tl.mark_durable(exp_next), tl.NIL))

    def _new_node(self, key: int, value: int, succ: int) -> int:
        node = self.mem.alloc(key, value, tl.mark_durable(succ))
        self.mem.flush(node)  # no fence: the insert's Persist fences for both
        return node

    def _async_persist_traversal(self, key: int) -> tuple[int, int, int]:
        """Traverse, flushing every non-durable link, then fence once and set durable bits."""
        mem = self.mem
        scratch: list[tuple[int, int, int]] = []
        p = self.head
        p_next = mem.read_next(p)
        curr = tl.unmark(p_next)
        while True:
            if not tl.is_durable(p_next):
                old = mem.read_old(p)
                if len(scratch) < self.max_list_length:
                    mem.flush(p)
                    scratch.append((p, p_next, old))
                else:
                    self.persist(p, p_next, old)
            if mem.key(curr) >= key:
                break
            p = curr
            p_next = mem.read_next(p)
            curr = tl.unmark(p_next)
        if scratch:
            mem.fence()
            for node, nxt, old in scratch:
                mem.dwcas(node, (nxt, old), (tl.mark_durable(nxt), tl.NIL))
        return p, p_next, curr

    # -- inspection -------------------------------------------------------

    def _peek(self, cell: int) -> tuple[int, int]:
        peek = getattr(self.mem, "peek", None)
        return peek(cell) if peek else self.mem.read(cell)

    def nodes(self) -> list[int]:
        """Nodes reachable from head in volatile memory, sentinels excluded."""
        out = []
        node = tl.unmark(self._peek(self.head)[0])
        seen = set()
        while node != self.tail:
            if node in seen:
                raise RuntimeError("cycle in volatile list")
            seen.add(node)
            out.append(node)
            node = tl.unmark(self._peek(node)[0])
        return out

    def keys(self) -> set[int]:
        """Volatile abstract set."""
        return {self.mem.key(n) for n in self.nodes()}


def _check_key(key: int) -> None:
    if not tl.KEY_MIN < key < tl.KEY_MAX:
        raise ValueError(f"key {key} outside the open sentinel range")
