"""Silo-style optimistic concurrency control, one instance per container.

A transaction's footprint inside a container lives in a `ContainerTxnState`.
Commit runs in three steps:

1. `lock_write_set` latches every written record in (table, key) order,
   creating absent placeholders for inserted keys;
2. `validate_reads` re-checks read versions, absent-key reads and scan
   predicates against the live records;
3. `install_and_unlock` publishes the buffered values under a fresh TID,
   or `release` drops everything.

`validate_and_lock` is steps 1+2 for a single container.  The 2PC coordinator
calls the two halves separately so that the read validation of every
container happens after all write latches of the transaction are held.
"""

from __future__ import annotations

import itertools
import time

from .errors import ConflictAbort, DuplicateKey
from .storage import ABSENT, DELETE, INSERT, LOCKED, TID_SHIFT, rescan_matches

ACTIVE = "active"
VALIDATED = "validated"
COMMITTED = "committed"
ABORTED = "aborted"

EPOCH_MS = 40
SEQ_BITS = 40


class TidGenerator:
    """TIDs are (epoch, sequence) packed into one int.

    The epoch advances every ``epoch_ms`` milliseconds of wall time; it only
    bounds counter growth, nothing is group-committed.
    """

    def __init__(self, epoch_ms=EPOCH_MS):
        self.epoch_ms = epoch_ms
        self._origin = time.monotonic_ns()
        self._seq = itertools.count(1)

    def epoch(self):
        return (time.monotonic_ns() - self._origin) // (self.epoch_ms * 1_000_000)

    def next_tid(self, floor=0):
        tid = (self.epoch() << SEQ_BITS) | (next(self._seq) & ((1 << SEQ_BITS) - 1))
        return max(tid, floor + 1)


class ContainerTxnState:
    __slots__ = ("container_id", "read_set", "write_set", "scan_set", "absent_reads",
                 "status", "locked", "_locked_ids", "failure")

    def __init__(self, container_id):
        self.container_id = container_id
        self.read_set = {}       # (table, key) -> (record, observed word)
        self.write_set = {}      # (table, key) -> WriteEntry
        self.scan_set = []       # ScanPredicate
        self.absent_reads = []   # (table, key) read while no record existed
        self.status = ACTIVE
        self.locked = []
        self._locked_ids = set()
        self.failure = None

    def __repr__(self):
        return (f"ContainerTxnState(c={self.container_id}, reads={len(self.read_set)}, "
                f"writes={len(self.write_set)}, scans={len(self.scan_set)}, {self.status})")

    @property
    def is_read_only(self):
        return not self.write_set

    def sorted_writes(self):
        return sorted(self.write_set.items(), key=lambda kv: (kv[0][0].name, kv[0][1]))

    def max_observed_tid(self):
        floor = 0
        for rec, word in self.read_set.values():
            floor = max(floor, word >> TID_SHIFT)
        for rec in self.locked:
            floor = max(floor, rec.word >> TID_SHIFT)
        return floor


def lock_write_set(state: ContainerTxnState):
    """Latch the write set in deterministic order. Raises DuplicateKey if an
    inserted key turns out to be present (locks acquired so far are kept for
    `release`)."""
    if state.status != ACTIVE:
        raise ValueError(f"cannot lock in status {state.status}")
    for (table, key), entry in state.sorted_writes():
        rec = table.get_or_create(key)
        rec.latch.acquire()
        rec.word |= LOCKED
        state.locked.append(rec)
        state._locked_ids.add(id(rec))
        entry.record = rec
        if entry.kind == INSERT and not rec.word & ABSENT:
            raise DuplicateKey(f"{table.name}{key!r} already present")


def validate_reads(state: ContainerTxnState):
    """Check that nothing read by the transaction changed. Raises ConflictAbort."""
    mine = state._locked_ids
    for (table, key), (rec, word) in state.read_set.items():
        current = rec.word
        if current & LOCKED:
            if id(rec) not in mine:
                raise ConflictAbort(f"{table.name}{key!r} locked by another committer")
            current &= ~LOCKED
        if current != word:
            raise ConflictAbort(f"{table.name}{key!r} changed since read")
    for table, key in state.absent_reads:
        rec = table.records.get(key)
        if rec is None:
            continue
        # a placeholder latched by a concurrent inserter is still absent: that
        # inserter has not installed and will serialize after us
        if not rec.word & ABSENT:
            raise ConflictAbort(f"{table.name}{key!r} appeared since read")
    for pred in state.scan_set:
        if not rescan_matches(pred, mine):
            raise ConflictAbort(f"phantom in {pred.table.name} scan")


def validate_and_lock(state: ContainerTxnState):
    """Single-container prepare. Returns True when prepared; on conflict all
    latches are released and False is returned (``state.failure`` says why)."""
    try:
        lock_write_set(state)
        validate_reads(state)
    except ConflictAbort as exc:
        state.failure = exc
        release(state)
        return False
    state.status = VALIDATED
    return True


def install_and_unlock(state: ContainerTxnState, tid, on_install=None):
    """Publish buffered writes with version ``tid`` and drop the latches.

    ``on_install(entry, table, key)`` runs for each write while its record is
    still latched (the tracer uses it to stamp write events in commit order).
    """
    if state.status != VALIDATED:
        raise ValueError(f"cannot install in status {state.status}")
    new_word = tid << TID_SHIFT
    for (table, key), entry in state.write_set.items():
        rec = entry.record
        if on_install is not None:
            on_install(entry, table, key)
        if entry.kind == DELETE:
            rec.value = None
            rec.word = new_word | ABSENT | LOCKED
        else:
            rec.value = entry.value
            rec.word = new_word | LOCKED
    for rec in state.locked:
        rec.word &= ~LOCKED
        rec.latch.release()
    state.locked = []
    state._locked_ids = set()
    state.status = COMMITTED


def release(state: ContainerTxnState):
    """Abort this container's part: unlatch, drop buffers. Idempotent."""
    for rec in state.locked:
        rec.word &= ~LOCKED
        rec.latch.release()
    state.locked = []
    state._locked_ids = set()
    state.write_set = {}
    state.status = ABORTED


def commit_single(state: ContainerTxnState, tids: TidGenerator, on_install=None):
    """Local commit of a transaction that touched only this container."""
    if not validate_and_lock(state):
        raise state.failure
    tid = tids.next_tid(state.max_observed_tid())
    install_and_unlock(state, tid, on_install)
    return tid
