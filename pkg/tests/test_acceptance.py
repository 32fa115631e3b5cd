"""Acceptance criteria, one test each.

Every test records ``RESULTS[n] = (ok, line)`` before asserting, and the
conftest hook prints one PASS/FAIL line per criterion at the end of the run.
Also runnable directly: ``python tests/test_acceptance.py``.
"""

import csv
import io
import json
import os
import random
import subprocess
import sys
import time

import pytest

from nvmsets import taglink as tl
from nvmsets.audit import Auditor
from nvmsets.checker import (
    INF,
    Entry,
    History,
    Operation,
    check_durable_linearizable,
    check_linearizable,
    check_sle,
    check_strict_linearizable,
    cpe_flips,
    crash_outcome,
    search_naive,
    theorem10_scenario,
)
from nvmsets.cli import main
from nvmsets.fuzz import FuzzConfig, fuzz_run
from nvmsets.recovery import normalized_cells, persistent_abstract_set, recover
from nvmsets.sim import Simulation
from nvmsets.workload import CSV_HEADER, WorkloadConfig, run_sim

RESULTS: dict[int, tuple[bool, str]] = {}


def record(num, ok, line):
    RESULTS[num] = (bool(ok), line)
    assert ok, line


# 1 -------------------------------------------------------------------------

def _solo_fences(impl, name, key, keys):
    sim = Simulation(impl)
    for k in keys:
        sim.set.insert(k)
    sim.mem.reset_stats()
    result = sim.run_solo(name, key)
    return result, sim.mem.stats().fences


def test_01_psync_profile():
    t = time.perf_counter()
    got = {
        ("pd", "insert"): _solo_fences("pd", "insert", 5, [3, 7]),
        ("pd", "remove"): _solo_fences("pd", "remove", 5, [3, 5, 7]),
        ("ld", "insert"): _solo_fences("ld", "insert", 5, [3, 7]),
        ("ld", "remove"): _solo_fences("ld", "remove", 5, [3, 5, 7]),
    }
    want = {("pd", "insert"): 1, ("pd", "remove"): 1, ("ld", "insert"): 1, ("ld", "remove"): 2}
    failed = [_solo_fences(impl, name, k, [3, 5, 7]) for impl in ("pd", "ld")
              for name, k in (("insert", 5), ("remove", 6))]
    ok = (all(got[c] == (True, n) for c, n in want.items())
          and all(f == (False, 0) for f in failed) and time.perf_counter() - t < 1)
    counts = " ".join(f"{i}-{n}={got[(i, n)][1]}" for i, n in want)
    record(1, ok, f"solo psyncs {counts}; unsuccessful ops {[f[1] for f in failed]}")


# 2 -------------------------------------------------------------------------

def test_02_persist_free_search():
    t = time.perf_counter()
    lines, ok = [], True
    for impl in ("pd", "ld"):
        cfg = WorkloadConfig(impl=impl, contains="persist-free", mode="sim", threads=4,
                             keyrange=64, search_pct=50.0, insert_pct=25.0, remove_pct=25.0,
                             sim_steps=100_000, iters=1, seed=2)
        rep, sim = run_sim(cfg)
        search = rep.stats.by_class["search"]
        ok &= sim.steps >= 100_000 and search.flushes == 0 and search.fences == 0 and search.ops > 0
        lines.append(f"{impl}: {search.ops} searches, {search.flushes} flushes, {search.fences} fences")
    ok &= time.perf_counter() - t < 30
    record(2, ok, "persist-free over 1e5 steps; " + "; ".join(lines))


# 3 -------------------------------------------------------------------------

def test_03_redundant_psync_scenario(capsys):
    t = time.perf_counter()
    got = {}
    for k in (2, 3, 4, 8):
        main(["scenario", "theorem2", "--n", str(k)])
        got[k] = json.loads(capsys.readouterr().out)["redundant_psyncs"]
    ok = all(got[k] == k - 1 for k in got) and time.perf_counter() - t < 5
    record(3, ok, f"scenario theorem2 redundant psyncs {got}")


# 4 and 7 -------------------------------------------------------------------

@pytest.fixture(scope="module")
def fuzz_1000():
    t = time.perf_counter()
    runs = [fuzz_run(seed, FuzzConfig(audit=True)) for seed in range(1000)]
    return runs, time.perf_counter() - t


def test_04_durable_fuzz(fuzz_1000):
    runs, secs = fuzz_1000
    bad = [r.seed for r in runs if not r.durable]
    crashed = sum(r.crashed for r in runs)
    record(4, not bad and secs < 300,
           f"{len(runs)} fuzz runs ({crashed} crashed), {len(bad)} durable failures {bad[:5]}, {secs:.1f}s")


def test_07_invariant_audit(fuzz_1000):
    runs, _ = fuzz_1000
    bad = [(r.seed, r.violations[0].check) for r in runs if r.violations]
    order = [r.seed for r in runs if r.cpe_order_bad]
    checks = sum(r.audit_checks for r in runs)
    record(7, not bad and not order and checks > 0,
           f"{checks} post-step audits, violations {bad[:5]}, LD remove-before-mark-persist {order[:5]}")


# 5 -------------------------------------------------------------------------

def test_05_sle_dichotomy():
    t = time.perf_counter()
    cfg = FuzzConfig(contains=("persist-all", "async-persist-all", "persist-last"),
                     audit=False, check_sle=True)
    bad = [s for s in range(1000) if not fuzz_run(s, cfg).sle]
    cert = {}
    for impl in ("pd", "ld"):
        h, _ = theorem10_scenario(impl, "persist-free")
        v = check_sle(h)
        cert[impl] = (not v.passed) and bool(v.certificate)
    ok = not bad and all(cert.values()) and time.perf_counter() - t < 60
    record(5, ok, f"1000 fuzz runs without persist-free: {len(bad)} SLE failures; "
                  f"persist-free scripted case fails SLE with certificate {cert}")


# 6 -------------------------------------------------------------------------

def _isolated(h, o):
    """No other update of the same key has a claim overlapping o's window."""
    end = o.resp if o.resp is not None else INF
    for p in h.ops:
        if p is o or p.key != o.key or p.name == "contains" or p.claim is None:
            continue
        if p.claim < end and (p.resp if p.resp is not None else INF) > o.claim:
            return False
    return True


def _cpe_is_expected_event(impl, o, ev):
    nxt = ev.value_after[0]
    if o.name == "insert":
        return ev.cell != o.node and tl.unmark(nxt) == o.node  # link persist
    if impl == "pd":
        return ev.cell != o.node and tl.unmark(nxt) != o.node  # unlink persist
    return ev.cell == o.node and tl.is_marked(nxt)  # mark persist


def test_06_cpe_oracle():
    t = time.perf_counter()
    sampled, seed = [], 0
    rng = random.Random(6)
    cfg = FuzzConfig(audit=False)
    while len(sampled) < 100:
        r = fuzz_run(seed, cfg)
        seed += 1
        cands = [o for o in r.history.ops if o.name != "contains" and o.result and o.claim is not None
                 and not o.pending and _isolated(r.history, o)]
        if cands:
            sampled.append((r, rng.choice(cands)))
    problems, kinds = [], set()
    for r, o in sampled:
        flips = cpe_flips(r.history, o, r.impl)
        if len(flips) != 1:
            problems.append((r.seed, o.id, f"{len(flips)} cpes"))
            continue
        c = flips[0]
        before = crash_outcome(r.history, o, r.impl, c)
        after = crash_outcome(r.history, o, r.impl, c + 1)
        if not (before is True and after is False):
            problems.append((r.seed, o.id, "no flip"))
        if not _cpe_is_expected_event(r.impl, o, r.sim.events[c]):
            problems.append((r.seed, o.id, "unexpected event"))
        kinds.add((r.impl, o.name))
    ok = not problems and len(kinds) == 4 and time.perf_counter() - t < 120
    record(6, ok, f"{len(sampled)} sampled updates over {sorted(kinds)}: problems {problems[:5]}")


# 8 -------------------------------------------------------------------------

def _random_history(rng, crashes):
    """Well-formed by construction: up to 3 workers, each one op at a time,
    one event per tick, and at most one crash that abandons in-flight ops."""
    n, K = rng.randint(1, 6), rng.randint(1, 3)
    busy: dict[int, Operation] = {}
    ops, crash_at, clock = [], [], 0
    crash_tick = rng.randint(1, 2 * n) if crashes else None
    while len(ops) < n or busy:
        clock += 1
        if clock == crash_tick:
            for o in busy.values():
                if rng.random() < 0.5:
                    o.key_write = rng.uniform(o.inv, clock)
            busy.clear()
            crash_at.append(clock)
            continue
        idle = [w for w in range(3) if w not in busy]
        if len(ops) < n and idle and (not busy or rng.random() < 0.5):
            w = rng.choice(idle)
            o = Operation(len(ops) + 1, w, rng.choice(["insert", "remove", "contains"]),
                          rng.randint(1, K), clock, None, None)
            ops.append(o)
            busy[w] = o
        elif busy:
            w = rng.choice(sorted(busy))
            o = busy.pop(w)
            if crash_tick is None and len(ops) == n and rng.random() < 0.1:
                continue  # left pending at the end of a crash-free history
            o.resp, o.result = clock, rng.random() < 0.5
    initial = frozenset(k for k in range(1, K + 1) if rng.random() < 0.5)
    return History(ops, crashes=crash_at, initial=initial)


def _entries(h, cond):
    out = []
    for o in h.ops:
        if not o.pending:
            out.append(Entry(o.id, o.name, o.key, o.result, o.inv, o.resp))
            continue
        crash = h.crash_after(o.inv)
        if cond in ("linearizable", "durable"):
            out.append(Entry(o.id, o.name, o.key, None, o.inv, INF, True))
        elif cond == "strict":
            out.append(Entry(o.id, o.name, o.key, None, o.inv, crash, True))
        elif o.name != "contains" and o.key_write is not None and o.key_write < crash:
            out.append(Entry(o.id, o.name, o.key, True, o.key_write, o.key_write, True))
    return out


CHECKS = {"linearizable": check_linearizable, "durable": check_durable_linearizable,
          "strict": check_strict_linearizable, "sle": check_sle}


def test_08_checker_self_consistency():
    t = time.perf_counter()
    rng = random.Random(8)
    n = disagree = 0
    passes = {c: 0 for c in CHECKS}
    while n < 20_000:
        h = _random_history(rng, crashes=rng.random() < 0.5)
        h.check_well_formed()
        for cond, fn in CHECKS.items():
            if cond == "linearizable" and h.crashes:
                continue
            got = bool(fn(h))
            if got != search_naive(_entries(h, cond), h.initial):
                disagree += 1
            passes[cond] += got
        n += 1
    ok = disagree == 0 and time.perf_counter() - t < 120
    record(8, ok, f"{n} random well-formed histories (<=6 ops, K<=3), {disagree} disagreements "
                  f"with the all-permutations oracle; passes per condition {passes}")


# 9 -------------------------------------------------------------------------

def test_09_recovery_soundness():
    t = time.perf_counter()
    bad = []
    for seed in range(1000):
        rng = random.Random(seed)
        impl = rng.choice(["pd", "ld"])
        sim = Simulation(impl, commit_mode=rng.choice(["fence", "flush"]))
        for k in range(1, 9):
            if rng.random() < 0.5:
                sim.set.insert(k)
        for _ in range(rng.randint(1, 4)):
            sim.spawn([(rng.choice(["insert", "remove", "contains"]), rng.randint(1, 8))
                       for _ in range(rng.randint(1, 4))])
        sim.run_random(rng, bg_flush_prob=0.1, early_commit_prob=0.1, crash_at=rng.randint(0, 120))
        img = sim.images[-1] if sim.images else sim.crash()
        pas = persistent_abstract_set(img, impl)
        s = recover(img, impl)
        aud = Auditor(s.mem, impl, s.head, s.tail)
        aud.check_state()
        img2 = s.mem.crash()
        img3 = recover(img2, impl).mem.crash()
        if (s.keys() != pas or aud.violations or persistent_abstract_set(img2, impl) != pas
                or normalized_cells(img3, impl) != normalized_cells(img2, impl)):
            bad.append(seed)
    ok = not bad and time.perf_counter() - t < 60
    record(9, ok, f"1000 crash images: recover = persistent abstract set and idempotent; failures {bad[:5]}")


# 10 ------------------------------------------------------------------------

def _cli(*args):
    env = dict(os.environ)
    src = os.path.join(os.path.dirname(__file__), os.pardir, "src")
    env["PYTHONPATH"] = os.path.abspath(src) + os.pathsep + env.get("PYTHONPATH", "")
    return subprocess.run([sys.executable, "-m", "nvmsets.cli", *args], capture_output=True,
                          text=True, env=env, timeout=120)


def test_10_native_smoke():
    t = time.perf_counter()
    p = _cli("bench", "--mode", "native", "--threads", "4", "--duration", "2")
    secs = time.perf_counter() - t
    rows = list(csv.reader(io.StringIO(p.stdout)))
    schema = p.returncode == 0 and rows and rows[0] == CSV_HEADER and len(rows) > 1 \
        and all(len(r) == len(CSV_HEADER) for r in rows)
    tput = [float(r[6]) for r in rows[1:]] if schema else []
    u = _cli("bench", "--mode", "native", "--threads", "4", "--duration", "2", "--iters", "1",
             "--search-pct", "0")
    urows = list(csv.reader(io.StringIO(u.stdout)))
    ppu = float(urows[1][8]) if u.returncode == 0 and len(urows) > 1 else 0.0
    ok = bool(schema) and tput and min(tput) > 0 and ppu >= 1.0 and secs < 30
    record(10, ok, f"native bench {len(rows) - 1} rows in {secs:.1f}s, min throughput "
                   f"{min(tput) if tput else 0:.0f} ops/s, update-only psyncs_per_update {ppu:.3f}"
                   + (f"; stderr {p.stderr.strip()[-200:]}" if p.returncode else ""))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
