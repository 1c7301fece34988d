"""A tiny key/value reactor type and plan builders used across the tests."""

import os
import threading
import time

import pytest

from reactordb.deployment import ContainerSpec, DeploymentPlan, ExecutorSpec, MapEntry
from reactordb.runtime import Database, ReactorType
from reactordb.storage import TableSchema

multicore = pytest.mark.skipif((os.cpu_count() or 1) < 2,
                               reason="needs hardware parallelism (single core here)")

GATES = {}


def gate(name):
    ev = GATES.get(name)
    if ev is None:
        ev = GATES[name] = threading.Event()
    return ev


def get(tx, key):
    return tx.read("kv", key)


def put(tx, key, value):
    tx.write("kv", key, value)


def add(tx, key, delta):
    v = tx.read("kv", key) or 0
    tx.write("kv", key, v + delta)
    return v + delta


def ins(tx, key, value):
    tx.insert("kv", key, value)


def scan(tx, lo, hi, limit=None, reverse=False):
    return [(k, v) for k, v, _ in tx.scan("kv", lo, hi, limit, reverse).entries]


def call(tx, dest, proc, *args):
    return tx.call(dest, proc, *args).get()


def fire(tx, dest, proc, *args):
    tx.call(dest, proc, *args)
    return "fired"


def mode_of(tx, dest):
    return tx.call(dest, "get", 0).ref.mode


def hold(tx, name="hold"):
    gate(name).wait(5)
    return tx.reactor


def relay(tx, dest, name="hold"):
    return tx.call(dest, "hold", name).get()


def diamond(tx, b, c, d, name="hold"):
    fb = tx.call(b, "relay", d, name)
    fc = tx.call(c, "relay", d, name)
    return fb.get(), fc.get()


def diamond_seq(tx, b, c, d, name="hold"):
    first = tx.call(b, "relay", d, name).get()
    return first, tx.call(c, "relay", d, name).get()


def fail(tx, msg="no"):
    tx.abort(msg)


def late_fail(tx, delay=0.05):
    time.sleep(delay)
    tx.abort("late")


def boom(tx):
    raise ValueError("bug in procedure")


def mutate(tx, items):
    items.append("callee")
    return items


def whereami(tx):
    return threading.current_thread().name


def transfer(tx, dest, amount):
    """Move ``amount`` from key 0 here to key 0 on ``dest``."""
    bal = tx.read("kv", 0)
    if bal < amount:
        tx.abort("insufficient")
    tx.write("kv", 0, bal - amount)
    tx.call(dest, "add", 0, amount).get()


BOX = ReactorType("Box", {f.__name__: f for f in (
    get, put, add, ins, scan, call, fire, mode_of, hold, relay, diamond, diamond_seq, fail,
    late_fail, boom, mutate, whereami, transfer)}, (TableSchema("kv", 1, ("value",)),))


def plan(layout, router="round_robin", mpl=1):
    """``layout``: one list of reactor names per container, one executor each."""
    containers = tuple(ContainerSpec(c, (ExecutorSpec(0, mpl),)) for c in range(len(layout)))
    entries = tuple(MapEntry(c, reactor=n) for c, names in enumerate(layout) for n in names)
    return DeploymentPlan(containers, entries, router, "test")


def box_db(layout, mpl=1, **kw):
    names = [n for names in layout for n in names]
    db = Database([(n, "Box") for n in names], [BOX], plan(layout, mpl=mpl), **kw)
    return db


def no_locked_records(db):
    from reactordb.storage import LOCKED
    return all(not rec.word & LOCKED for c in db.containers.values() for _, rec in c.store.all_records())


# acceptance verdicts, printed by conftest at the end of the session
VERDICTS = {}


def verdict(n, ok, detail):
    VERDICTS[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail
