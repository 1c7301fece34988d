import threading

import pytest

from reactordb import coordinator, occ
from reactordb.errors import ConflictAbort
from reactordb.occ import ContainerTxnState, TidGenerator
from reactordb.storage import LOCKED, RecordStore, TableSchema, read, tid_of, write

from support import box_db, no_locked_records


def stores(n):
    out = []
    for c in range(n):
        s = RecordStore(c)
        t = s.create_table(TableSchema("kv"))
        t.load("x", 0)
        out.append(t)
    return out


def plan_over(tables, txn_id=1):
    states = {}
    for c, t in enumerate(tables):
        st = ContainerTxnState(c)
        v = read(st, t, "x")
        write(st, t, "x", v + 1)
        states[c] = st
    return coordinator.CommitPlan(txn_id, tuple(sorted(states)), states)


def test_seven_containers_one_conflict_releases_all():
    tables = stores(7)
    tids = TidGenerator()
    plan = plan_over(tables)
    # a competing writer commits on container 6 after our read
    rival = ContainerTxnState(6)
    write(rival, tables[6], "x", 100)
    occ.commit_single(rival, tids)
    with pytest.raises(ConflictAbort):
        coordinator.execute(plan, tids)
    assert plan.decision == coordinator.ABORT
    assert [t.records["x"].value for t in tables] == [0] * 6 + [100]
    assert all(not t.records["x"].word & LOCKED for t in tables)
    with pytest.raises(RuntimeError):
        plan.decide(coordinator.COMMIT)


def test_multi_container_commit_uses_one_tid():
    tables = stores(3)
    tids = TidGenerator()
    plan = plan_over(tables)
    tid = coordinator.execute(plan, tids)
    assert plan.decision == coordinator.COMMIT
    assert {tid_of(t.records["x"].word) for t in tables} == {tid}
    assert all(t.records["x"].value == 1 for t in tables)


def test_single_container_plan_commits_locally():
    tables = stores(1)
    plan = plan_over(tables)
    coordinator.execute(plan, TidGenerator())
    assert plan.touched_containers == (0,)
    assert plan.decision == coordinator.COMMIT


def test_cross_container_write_skew_is_caught():
    # T1 reads x on c0 and writes y on c1; T2 reads y on c1 and writes x on c0.
    # Whatever the interleaving of their commits, at most one may commit.
    for trial in range(30):
        s0, s1 = RecordStore(0), RecordStore(1)
        x = s0.create_table(TableSchema("kv"))
        y = s1.create_table(TableSchema("kv"))
        x.load("x", 0)
        y.load("y", 0)
        tids = TidGenerator()
        a0, a1 = ContainerTxnState(0), ContainerTxnState(1)
        read(a0, x, "x")
        write(a1, y, "y", 1)
        b0, b1 = ContainerTxnState(0), ContainerTxnState(1)
        read(b1, y, "y")
        write(b0, x, "x", 1)
        plans = [coordinator.CommitPlan(1, (0, 1), {0: a0, 1: a1}),
                 coordinator.CommitPlan(2, (0, 1), {0: b0, 1: b1})]
        barrier = threading.Barrier(2)
        results = []

        def go(p):
            barrier.wait()
            try:
                coordinator.execute(p, tids)
                results.append(True)
            except ConflictAbort:
                results.append(False)

        ths = [threading.Thread(target=go, args=(p,)) for p in plans]
        for th in ths:
            th.start()
        for th in ths:
            th.join(5)
        assert results.count(True) <= 1
        assert not x.records["x"].word & LOCKED and not y.records["y"].word & LOCKED


def test_engine_multi_container_atomicity_and_no_orphan_locks():
    layout = [[f"r{c}"] for c in range(7)]
    d = box_db(layout, mpl=2)
    for c in range(7):
        d.load(f"r{c}", "kv", 0, 1000)
    d.start()
    try:
        futs = []
        for i in range(80):
            src = f"r{i % 7}"
            dst = f"r{(i * 3 + 1) % 7}"
            if src != dst:
                futs.append(d.submit(src, "transfer", dst, 5))
        outs = [f.wait(20) for f in futs]
        assert sum(o.committed for o in outs) > 0
        total = sum(d.reactor_rows(f"r{c}", "kv")[(0,)] for c in range(7))
        assert total == 7000
        assert no_locked_records(d)
    finally:
        d.shutdown()


def test_touched_containers_include_nested_calls():
    d = box_db([["a"], ["b"], ["c"]])
    d.start()
    try:
        seen = {}
        orig = coordinator.execute

        def spy(plan, tids, on_install=None):
            seen["touched"] = plan.touched_containers
            return orig(plan, tids, on_install)

        coordinator.execute = spy
        try:
            assert d.run("a", "call", "b", "call", "c", "put", 0, 1).committed
        finally:
            coordinator.execute = orig
        assert seen["touched"] == (0, 1, 2)
    finally:
        d.shutdown()
