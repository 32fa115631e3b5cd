"""Physical-Delete list: Fomitchev-Ruppert volatile synchronization with
extended link-and-persist durability, one DWCAS per link update.

A remove dflags the predecessor, marks the victim, then unlinks it and
persists the unlink.  The unlink persist is the remove's critical
persistence event, so marked nodes never need to reach persistent memory
and both updates cost a single psync when run alone.
"""

from __future__ import annotations

from . import taglink as tl
from ._listbase import ListBase


class PdSet(ListBase):
    impl = "pd"

    def find(self, key: int) -> tuple[int | None, int, int]:
        mem = self.mem
        gp = None
        p = self.head
        p_next = mem.read_next(p)
        curr = tl.unmark(p_next)
        while mem.key(curr) < key:
            gp = p
            p = curr
            p_next = mem.read_next(p)
            curr = tl.unmark(p_next)
        if gp is not None:
            gp_next = mem.read_next(gp)
            if not tl.is_durable(gp_next):
                self.persist(gp, gp_next)
        if not tl.is_durable(p_next):
            self.persist(p, p_next)
        return gp, p, curr

    def _insert(self, key, value):
        mem = self.mem
        while True:
            gp, p, curr = self.find(key)
            p_next = mem.read_next(p)
            if mem.key(curr) == key:
                return False
            if not tl.is_clean(p_next):
                self.help_update(gp, p)
                continue
            new = self._new_node(key, value, curr)
            iflag_curr = tl.mark_iflag(curr)
            _, ok = mem.dwcas(p, (tl.mark_durable(curr), tl.NIL), (new, iflag_curr))
            if ok:
                mem.note("claim", new)
                mem.note("key_write", new)
                self.persist(p, new, iflag_curr)
                return True

    def _remove(self, key):
        mem = self.mem
        while True:
            gp, p, curr = self.find(key)
            c_next = mem.read_next(curr)
            p_next = mem.read_next(p)
            if mem.key(curr) != key:
                return False
            if not tl.is_clean(c_next):
                self.help_update(p, curr)
            elif not tl.is_clean(p_next):
                self.help_update(gp, p)
            else:
                dur_curr = tl.mark_durable(curr)
                dflag_curr = tl.mark_dflag(dur_curr)
                _, ok = mem.dwcas(p, (dur_curr, tl.NIL), (dflag_curr, tl.NIL))
                if ok:
                    mem.note("claim", curr)
                    self.help_remove(p, curr)
                    # a helper may have unlinked without persisting yet;
                    # links only change from durable values, so this is ours
                    p_next = mem.read_next(p)
                    if not tl.is_durable(p_next):
                        self.persist(p, p_next)
                    return True

    # -- helping ----------------------------------------------------------

    def help_update(self, parent: int | None, dirty: int) -> None:
        dirty_next = self.mem.read_next(dirty)
        succ = tl.unmark(dirty_next)
        if tl.is_dflagged(dirty_next):
            self.help_remove(dirty, succ)
        elif tl.is_marked(dirty_next) and parent is not None:
            self.help_marked(parent, dirty)

    def help_remove(self, parent: int, node_to_del: int) -> None:
        mem = self.mem
        flagged = tl.mark_dflag(tl.mark_durable(node_to_del))
        while mem.read_next(parent) == flagged:
            succ = mem.read_next(node_to_del)
            if not tl.is_durable(succ):
                self.persist(node_to_del, succ)
            dur_succ = tl.mark_durable(tl.unmark(succ))
            marked_succ = tl.mark_del(dur_succ)
            last, ok = mem.dwcas(node_to_del, (dur_succ, tl.NIL), (marked_succ, tl.NIL))
            if ok or tl.is_marked(last[0]):
                self.help_marked(parent, node_to_del)
                return
            if tl.is_dflagged(last[0]):
                self.help_remove(node_to_del, tl.unmark(last[0]))

    def help_marked(self, parent: int, node_to_del: int) -> None:
        mem = self.mem
        succ = tl.unmark(mem.read_next(node_to_del))
        exp_next = tl.mark_durable(tl.mark_dflag(node_to_del))
        # old keeps the victim's address only: bit0 of old is the iflag
        old = node_to_del
        _, ok = mem.dwcas(parent, (exp_next, tl.NIL), (succ, old))
        if ok:
            mem.note("key_write", node_to_del)
            self.persist(parent, succ, old)

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

    def contains_persist_all(self, key):
        mem = self.mem
        p = self.head
        p_next = mem.read_next(p)
        while True:
            if not tl.is_durable(p_next):
                self.persist(p, p_next)
            curr = tl.unmark(p_next)
            if mem.key(curr) >= key:
                return mem.key(curr) == key
            p = curr
            p_next = mem.read_next(p)

    def contains_async_persist_all(self, key):
        _, _, curr = self._async_persist_traversal(key)
        return self.mem.key(curr) == key

    def contains_persist_last(self, key):
        p, p_next, curr = self._traverse(key)
        if not tl.is_durable(p_next):
            self.persist(p, p_next)
        return self.mem.key(curr) == key

    def contains_persist_free(self, key):
        mem = self.mem
        p, p_next, curr = self._traverse(key)
        has_key = mem.key(curr) == key
        if tl.is_durable(p_next):
            return has_key
        old1 = mem.read_old(p)
        p_next2 = mem.read_next(p)
        old2 = mem.read_old(p)
        if p_next != p_next2 or old1 != old2 or old1 == tl.NIL:
            return has_key
        if tl.is_iflagged(old1):
            return False
        if has_key:
            return True
        return mem.key(tl.unmark(old1)) == key
