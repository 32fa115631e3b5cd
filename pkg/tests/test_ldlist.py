import pytest
from hypothesis import given, strategies as st

from nvmsets import taglink as tl
from nvmsets.recovery import persistent_abstract_set, recover_ld
from nvmsets.sim import Simulation

VARIANTS = ["persist-all", "async-persist-all", "persist-last", "persist-free"]


def prefilled(keys, contains="persist-last"):
    sim = Simulation("ld", contains=contains)
    for k in keys:
        sim.set.insert(k)
    sim.mem.reset_stats()
    return sim


def fences(sim, fn):
    before = sim.mem.stats().fences
    result = fn()
    return result, sim.mem.stats().fences - before


def node_of(sim, key):
    return next(n for n in sim.set.nodes() if sim.mem.key(n) == key)


def test_solo_psync_profile():
    sim = prefilled([])
    assert fences(sim, lambda: sim.run_solo("insert", 5)) == (True, 1)
    assert fences(sim, lambda: sim.run_solo("insert", 5)) == (False, 0)
    assert fences(sim, lambda: sim.run_solo("remove", 5)) == (True, 2)
    assert fences(sim, lambda: sim.run_solo("remove", 5)) == (False, 0)


def test_no_dflag_ever_written():
    sim = prefilled([1, 2, 3])
    for k in (2, 4, 1, 3):
        sim.run_solo("remove", k)
        sim.run_solo("insert", k + 10)
    assert not any(e.kind == "dwcas" and tl.is_dflagged(e.value_after[0]) for e in sim.events)


@given(st.lists(st.tuples(st.sampled_from(["insert", "remove", "contains"]),
                          st.integers(1, 12)), max_size=40),
       st.sampled_from(VARIANTS))
def test_solo_sequences_match_builtin_set(ops, variant):
    sim = prefilled([], contains=variant)
    oracle = set()
    for name, k in ops:
        got = sim.run_solo(name, k)
        want = (k not in oracle) if name == "insert" else (k in oracle)
        if name == "insert":
            oracle.add(k)
        elif name == "remove":
            oracle.discard(k)
        assert got == want
    assert sim.volatile_set() == oracle == sim.persistent_set()


def test_crash_after_mark_persist_excludes_key():
    sim = prefilled([5])
    rem = sim.spawn([("remove", 5)])
    sim.run_until(rem, lambda e: e.kind == "commit" and tl.is_marked(e.value_after[0]))
    image = sim.crash()
    assert persistent_abstract_set(image, "ld") == set()
    assert recover_ld(image).keys() == set()


def test_crash_before_mark_persist_keeps_key():
    sim = prefilled([5])
    rem = sim.spawn([("remove", 5)])
    sim.run_until(rem, lambda e: e.kind == "key_write")
    image = sim.crash()
    assert persistent_abstract_set(image, "ld") == {5}


def test_remove_responds_only_after_mark_is_durable():
    sim = prefilled([3, 5])
    sim.run_solo("remove", 5)
    node = [e.cell for e in sim.events if e.kind == "claim"][-1]
    commit = next(e.seq for e in sim.events
                  if e.kind == "commit" and e.cell == node and tl.is_marked(e.value_after[0]))
    respond = next(e.seq for e in sim.events if e.kind == "respond" and e.get("name") == "remove")
    assert commit < respond


def test_get_mark_requires_durable_mark():
    sim = prefilled([5], contains="persist-free")
    n = node_of(sim, 5)
    rem = sim.spawn([("remove", 5)])
    sim.run_until(rem, lambda e: e.kind == "key_write")
    assert not sim.set.get_mark(n)
    # non-durable mark: a persist-free search still reports the key
    assert fences(sim, lambda: sim.run_solo("contains", 5)) == (True, 0)
    sim.run_until(rem, lambda e: e.kind == "dwcas" and tl.is_durable(e.value_after[0])
                  and tl.is_marked(e.value_after[0]))
    assert sim.set.get_mark(n)
    assert fences(sim, lambda: sim.run_solo("contains", 5)) == (False, 0)


@pytest.mark.parametrize("variant", ["persist-all", "async-persist-all", "persist-last"])
def test_persisting_searches_persist_a_pending_mark(variant):
    sim = prefilled([5], contains=variant)
    rem = sim.spawn([("remove", 5)])
    sim.run_until(rem, lambda e: e.kind == "key_write")
    assert fences(sim, lambda: sim.run_solo("contains", 5)) == (False, 1)
    assert sim.persistent_set() == set()


def test_solo_trim_unlinks_and_persists():
    sim = prefilled([5])
    n = node_of(sim, 5)
    rem = sim.spawn([("remove", 5)])
    sim.run_until(rem, lambda e: e.kind == "dwcas" and e.cell == n and tl.is_durable(e.value_after[0]))
    # marked durably, not trimmed yet
    assert n in sim.set.nodes()
    sim.finish(rem)
    assert n not in sim.set.nodes()
    assert sim.mem.peek(sim.set.head) == (tl.mark_durable(sim.set.tail), tl.NIL)


def _trim_race(order):
    sim = prefilled([5])
    head = sim.set.head
    n = node_of(sim, 5)
    rem = sim.spawn([("remove", 5)])
    sim.run_until(rem, lambda e: e.kind == "dwcas" and e.cell == n and tl.is_durable(e.value_after[0]))
    a = sim.spawn([("insert", 7)])
    b = sim.spawn([("insert", 8)])
    for w in order:
        sim.step(w)
    for w in (a, b, rem):
        sim.finish(w)
    trims = [e for e in sim.events if e.kind == "dwcas" and e.cell == head and e.get("ok")
             and tl.unmark(e.value_before[0]) == n and e.value_before[0] == tl.mark_durable(n)]
    return sim, trims


@pytest.mark.parametrize("order", [[2, 3] * 8, [3, 2] * 8, [2] * 8 + [3] * 8])
def test_racing_trims_exactly_one_wins(order):
    sim, trims = _trim_race(order)
    assert len(trims) == 1
    assert sim.volatile_set() == sim.persistent_set() == {7, 8}


def test_trim_on_changed_parent_is_noop():
    sim = prefilled([5])
    n = node_of(sim, 5)
    sim.run_solo("remove", 5)  # marks and trims
    before = len(sim.events)
    assert sim.set.trim(sim.set.head, n) is False
    assert not any(e.kind == "dwcas" and e.get("ok") for e in sim.events[before:])


def test_insert_racing_trim_of_predecessor_succeeds():
    for steps in range(1, 12):
        sim = prefilled([3, 5])
        rem = sim.spawn([("remove", 3)])
        ins = sim.spawn([("insert", 4)])
        for _ in range(steps):
            sim.step(ins)
        sim.finish(rem)
        assert sim.finish(ins) == [True]
        assert sim.volatile_set() == sim.persistent_set() == {4, 5}
