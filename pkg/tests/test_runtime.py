import threading

import pytest

from reactordb.errors import DangerousStructure, UnknownProcedure, UnknownReactor, UnknownType, UnmappedReactor
from reactordb.runtime import INLINE, REMOTE, SAME_CONTAINER, Database
from reactordb.tracing import Tracer

from support import BOX, box_db, gate, no_locked_records, plan


@pytest.fixture
def db():
    d = box_db([["a", "b"], ["c"], ["d"], ["e"]], mpl=2, trace=Tracer(), profile=True)
    for r in "abcde":
        d.load(r, "kv", 0, 100)
    d.start()
    yield d
    d.shutdown()


def test_unknown_type_and_unmapped_reactor():
    with pytest.raises(UnknownType):
        Database([("a", "Nope")], [BOX], plan([["a"]]))
    with pytest.raises(UnmappedReactor):
        Database([("a", "Box"), ("zz", "Box")], [BOX], plan([["a"]]))


def test_unknown_reactor_and_procedure(db):
    with pytest.raises(UnknownReactor):
        db.submit("nobody", "get", 0)
    with pytest.raises(UnknownProcedure):
        db.submit("a", "no_such_proc")
    out = db.run("a", "call", "a", "no_such_proc")
    assert not out.committed and out.reason == "procedure-error"


def test_call_modes_follow_the_plan(db):
    assert db.run("a", "mode_of", "a").value == INLINE
    assert db.run("a", "mode_of", "b").value == SAME_CONTAINER
    assert db.run("a", "mode_of", "c").value == REMOTE


def test_remote_call_returns_value_and_commits_everywhere(db):
    out = db.run("a", "call", "c", "add", 0, 5)
    assert out.committed and out.value == 105
    assert db.reactor_rows("c", "kv") == {(0,): 105}
    assert no_locked_records(db)


def test_arguments_cross_containers_by_value(db):
    mine = ["caller"]
    assert db.run("a", "call", "c", "mutate", mine).value == ["caller", "callee"]
    assert mine == ["caller"]


def test_user_abort_in_child_aborts_root(db):
    out = db.run("a", "transfer", "c", 1000)
    assert not out.committed and out.reason == "user-abort"
    out = db.run("a", "call", "c", "fail", "nope")
    assert not out.committed and out.reason == "user-abort"
    assert db.reactor_rows("c", "kv") == {(0,): 100}


def test_procedure_bug_becomes_abort(db):
    out = db.run("a", "call", "d", "boom")
    assert not out.committed and out.reason == "procedure-error"
    with pytest.raises(Exception):
        out.result()


def test_implicit_join_of_unawaited_call(db):
    out = db.run("a", "fire", "c", "add", 0, 7)
    assert out.committed and out.value == "fired"
    assert db.reactor_rows("c", "kv") == {(0,): 107}


def test_delayed_abort_child_aborts_root(db):
    out = db.run("a", "fire", "d", "late_fail", 0.05)
    assert not out.committed and out.reason == "user-abort"


def test_sequential_calls_to_same_reactor_commit(db):
    gate("seq").set()
    out = db.run("a", "diamond_seq", "c", "d", "e", "seq")
    assert out.committed and out.value == ("e", "e")


def test_diamond_is_dangerous():
    # e has mpl 2 so the second visit is admitted while the first is parked
    d = box_db([["a"], ["c"], ["d"], ["e"]], mpl=2)
    d.start()
    try:
        for i in range(3):
            try:
                out = d.run("a", "diamond", "c", "d", "e", f"diamond{i}", timeout=10)
            finally:
                # the first visit is still parked on e; let it go
                gate(f"diamond{i}").set()
            assert not out.committed and out.reason == "dangerous-structure"
            assert isinstance(out.error, DangerousStructure)
    finally:
        d.shutdown()


def test_same_container_call_back_into_active_ancestor_is_dangerous(db):
    # a -> b (same container, synchronous) -> a while a's root is still active
    out = db.run("a", "call", "b", "call", "a", "get", 0)
    assert not out.committed and out.reason == "dangerous-structure"


def test_different_roots_may_share_a_reactor(db):
    g = gate("shared")
    f1 = db.submit("c", "hold", "shared")
    f2 = db.submit("c", "hold", "shared")
    g.set()
    assert f1.wait(10).committed and f2.wait(10).committed


def test_subtxn_tree_and_single_container_commit(db):
    out = db.run("a", "transfer", "c", 10)
    assert out.committed
    subs = out.profile.subtxns
    assert subs[0].parent is None
    for j, sp in subs.items():
        if j:
            assert sp.parent in subs and sp.t_end <= out.profile.t_commit_end
    local = db.run("a", "get", 0)
    assert local.committed


def test_trace_is_serializable_under_concurrency(db):
    from reactordb.checker import check_trace
    futs = []
    for i in range(60):
        src, dst = ("a", "c") if i % 2 else ("c", "a")
        futs.append(db.submit(src, "transfer", dst, 1))
    outs = [f.wait(20) for f in futs]
    assert any(o.committed for o in outs)
    total = sum(db.reactor_rows(r, "kv")[(0,)] for r in "abcde")
    assert total == 500
    assert check_trace(db.tracer.text()) == (True, True)
    assert no_locked_records(db)


def test_single_reactor_embedding_matches_plain_occ():
    d = box_db([["solo"]])
    d.load("solo", "kv", 0, 3)
    d.start()
    try:
        assert d.run("solo", "add", 0, 4).value == 7
        assert not d.run("solo", "fail").committed
        assert d.reactor_rows("solo", "kv") == {(0,): 7}
    finally:
        d.shutdown()


def test_submit_after_shutdown_is_aborted():
    d = box_db([["a"]])
    d.start()
    d.shutdown()
    out = d.submit("a", "get", 0).wait(5)
    assert not out.committed and out.reason == "shutdown"


def test_worker_threads_do_the_work(db):
    name = db.run("c", "whereami").value
    assert name.startswith("exec-c1-") and threading.current_thread().name != name
