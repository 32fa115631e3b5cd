"""Logical-Delete list: Harris-style lazy deletion with extended
link-and-persist durability.

A remove is decided by marking the victim's next link, and that mark must
reach persistent memory before the node is trimmed.  Inserts cost one psync
and removes two when run alone.
"""

from __future__ import annotations

from . import taglink as tl
from ._listbase import ListBase


class LdSet(ListBase):
    impl = "ld"

    def trim(self, parent: int, curr: int) -> bool:
        mem = self.mem
        succ = tl.unmark(mem.read_next(curr))
        marked_curr = tl.mark_del(curr)
        _, ok = mem.dwcas(parent, (tl.mark_durable(curr), tl.NIL), (succ, marked_curr))
        if ok:
            self.persist(parent, succ, marked_curr)
        return ok

    def get_mark(self, node: int) -> bool:
        nxt = self.mem.read_next(node)
        return tl.is_marked(nxt) and tl.is_durable(nxt)

    def find(self, key: int) -> tuple[int, int]:
        mem = self.mem
        while True:
            gp = None
            p = self.head
            p_next = mem.read_next(p)
            curr = tl.unmark(p_next)
            restart = False
            while True:
                curr_next = mem.read_next(curr)
                if tl.is_marked(curr_next):
                    if not tl.is_durable(curr_next):
                        self.persist(curr, curr_next)
                    if not tl.is_durable(p_next):
                        self.persist(p, p_next)
                    self.trim(p, curr)
                    p_next = mem.read_next(p)
                    if tl.is_marked(p_next):
                        restart = True
                        break
                    curr = tl.unmark(p_next)
                    continue
                if mem.key(curr) >= key:
                    break
                gp = p
                p = curr
                p_next = curr_next
                curr = tl.unmark(p_next)
            if restart:
                continue
            if gp is not None:
                gp_next = mem.read_next(gp)
                if not tl.is_durable(gp_next):
                    self.persist(gp, gp_next)
            if not tl.is_durable(p_next):
                self.persist(p, p_next)
            return p, curr

    def _insert(self, key, value):
        mem = self.mem
        while True:
            p, curr = self.find(key)
            if mem.key(curr) == key:
                return False
            new = self._new_node(key, value, curr)
            iflag_old = tl.mark_iflag(curr)
            _, ok = mem.dwcas(p, (tl.mark_durable(curr), tl.NIL), (new, iflag_old))
            if ok:
                mem.note("claim", new)
                mem.note("key_write", new)
                self.persist(p, new, iflag_old)
                return True

    def _remove(self, key):
        mem = self.mem
        while True:
            p, curr = self.find(key)
            curr_next = mem.read_next(curr)
            if mem.key(curr) != key:
                return False
            if tl.is_marked(curr_next):
                # someone else decided this remove; find will trim it
                continue
            if not tl.is_durable(curr_next):
                self.persist(curr, curr_next)
                curr_next = tl.mark_durable(curr_next)
            marked_next = tl.mark_del(tl.unmark(curr_next))
            _, ok = mem.dwcas(curr, (curr_next, tl.NIL), (marked_next, tl.NIL))
            if ok:
                mem.note("claim", curr)
                mem.note("key_write", curr)
                self.persist(curr, marked_next)
                self.trim(p, curr)
                return True

    # -- searches ---------------------------------------------------------

    def _traverse(self, key):
        mem = self.mem
        p = self.head
        p_next = mem.read_next(p)
        curr = tl.unmark(p_next)
        while mem.key(curr) < key:
            p = curr
            p_next = mem.read_next(p)
            curr = tl.unmark(p_next)
        return p, p_next, curr

    def _present(self, curr: int, key: int) -> bool:
        """Terminal check for persisting searches: a marked key is absent once its mark is durable."""
        mem = self.mem
        if mem.key(curr) != key:
            return False
        c_next = mem.read_next(curr)
        if tl.is_marked(c_next):
            if not tl.is_durable(c_next):
                self.persist(curr, c_next)
            return False
        return True

    def contains_persist_all(self, key):
        mem = self.mem
        p = self.head
        p_next = mem.read_next(p)
        while True:
            if not tl.is_durable(p_next):
                self.persist(p, p_next)
            curr = tl.unmark(p_next)
            if mem.key(curr) >= key:
                return self._present(curr, key)
            p = curr
            p_next = mem.read_next(p)

    def contains_async_persist_all(self, key):
        _, _, curr = self._async_persist_traversal(key)
        return self._present(curr, key)

    def contains_persist_last(self, key):
        p, p_next, curr = self._traverse(key)
        if not tl.is_durable(p_next):
            self.persist(p, p_next)
        return self._present(curr, key)

    def contains_persist_free(self, key):
        mem = self.mem
        p, p_next, curr = self._traverse(key)
        has_key = mem.key(curr) == key
        if tl.is_durable(p_next):
            return has_key and not self.get_mark(curr)
        old1 = mem.read_old(p)
        p_next2 = mem.read_next(p)
        old2 = mem.read_old(p)
        if p_next != p_next2 or old1 != old2 or old1 == tl.NIL:
            return has_key and not self.get_mark(curr)
        if tl.is_iflagged(old1):
            return False
        if has_key:
            return not self.get_mark(curr)
        old_node = tl.unmark(old1)
        return mem.key(old_node) == key and not self.get_mark(old_node)
