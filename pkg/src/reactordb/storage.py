"""In-memory record store: versioned records in per-container ordered tables.

Every record carries a Silo-style version word::

    word = (tid << 2) | ABSENT | LOCKED

``LOCKED`` is set only while a committing transaction holds the record's
latch; ``ABSENT`` marks a placeholder created for an insert that has not been
installed yet, or a deleted row.  Values are opaque to the engine: any
immutable Python object may be stored, nothing here ever looks inside.

The functions at the bottom (`read`, `write`, `insert`, `delete`,
`range_scan`) are the record manager interface that procedures are written
against.  They operate on a per-container transaction state (see
``reactordb.occ.ContainerTxnState``) and never mutate shared records: all
writes are buffered until the OCC write phase.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from sortedcontainers import SortedList

from .errors import DuplicateTable

LOCKED = 1
ABSENT = 2
TID_SHIFT = 2
FLAG_MASK = LOCKED | ABSENT

PUT = "put"
INSERT = "insert"
DELETE = "delete"


def tid_of(word):
    return word >> TID_SHIFT


class Record:
    __slots__ = ("word", "value", "latch")

    def __init__(self, value, word):
        self.value = value
        self.word = word
        self.latch = threading.Lock()

    def __repr__(self):
        return f"Record(tid={tid_of(self.word)}, flags={self.word & FLAG_MASK}, value={self.value!r})"


@dataclass(frozen=True)
class TableSchema:
    table_name: str
    key_arity: int = 1
    value_columns: tuple = ()

    def __post_init__(self):
        if self.key_arity < 1:
            raise ValueError("key_arity must be >= 1")
        object.__setattr__(self, "value_columns", tuple(self.value_columns))


@dataclass
class ScanResult:
    entries: list = field(default_factory=list)  # (key, value, version word)
    exhausted: bool = True

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def stable_read(rec):
    """Return a consistent (word, value) pair, waiting out a locked record."""
    while True:
        w1 = rec.word
        if w1 & LOCKED:
            time.sleep(0)
            continue
        value = rec.value
        if rec.word == w1:
            return w1, value


class Table:
    """One ordered map from composite key to `Record`."""

    def __init__(self, container_id, schema: TableSchema):
        self.container_id = container_id
        self.schema = schema
        self.name = schema.table_name
        self.records = {}
        self.keys = SortedList()
        self._mutex = threading.Lock()

    def __repr__(self):
        return f"Table({self.container_id}/{self.name}, {len(self.records)} keys)"

    def load(self, key, value, tid=0):
        """Bulk-load a committed row outside of any transaction."""
        rec = self.records.get(key)
        if rec is None:
            self.records[key] = Record(value, tid << TID_SHIFT)
            self.keys.add(key)
        else:
            rec.value = value
            rec.word = tid << TID_SHIFT

    def get_or_create(self, key):
        rec = self.records.get(key)
        if rec is not None:
            return rec
        with self._mutex:
            rec = self.records.get(key)
            if rec is None:
                rec = Record(None, ABSENT)
                self.keys.add(key)
                self.records[key] = rec
            return rec

    def iter_range(self, lo, hi, reverse=False, batch=256):
        """Yield (key, record) in key order over the inclusive range [lo, hi].

        Keys are copied out in small batches under the table mutex, so
        concurrent inserts never invalidate the iteration.
        """
        records = self.records
        bound = None
        while True:
            with self._mutex:
                if bound is None:
                    it = self.keys.irange(lo, hi, reverse=reverse)
                elif reverse:
                    it = self.keys.irange(lo, bound, inclusive=(True, False), reverse=True)
                else:
                    it = self.keys.irange(bound, hi, inclusive=(False, True))
                keys = [k for _, k in zip(range(batch), it)]
            for k in keys:
                yield k, records[k]
            if len(keys) < batch:
                return
            bound = keys[-1]

    def committed_items(self):
        """Snapshot of present rows, for audits and state comparison."""
        out = {}
        for key, rec in list(self.records.items()):
            word, value = stable_read(rec)
            if not word & ABSENT:
                out[key] = value
        return out


class RecordStore:
    """All tables of one container."""

    def __init__(self, container_id):
        self.container_id = container_id
        self.tables = {}

    def create_table(self, schema: TableSchema):
        if schema.table_name in self.tables:
            raise DuplicateTable(f"table {schema.table_name!r} already exists in container {self.container_id}")
        table = Table(self.container_id, schema)
        self.tables[schema.table_name] = table
        return table

    def ensure_table(self, schema: TableSchema):
        table = self.tables.get(schema.table_name)
        if table is None:
            return self.create_table(schema)
        if table.schema != schema:
            raise DuplicateTable(
                f"table {schema.table_name!r} in container {self.container_id} already declared with another schema")
        return table

    def table(self, name):
        return self.tables[name]

    def all_records(self):
        for table in self.tables.values():
            for rec in list(table.records.values()):
                yield table, rec


# ---------------------------------------------------------------------------
# record manager interface (transactional, buffered)


@dataclass
class WriteEntry:
    value: object
    kind: str
    subtxn: int
    reactor: str
    record: Record | None = None


@dataclass
class ScanPredicate:
    table: Table
    lo: object
    hi: object
    limit: int | None
    reverse: bool
    observed: list  # [(key, word)] of committed rows consumed, in scan order
    table_exhausted: bool


def read(state, table: Table, key):
    """Read-your-writes lookup; records the observed version in the read set."""
    item = (table, key)
    entry = state.write_set.get(item)
    if entry is not None:
        return None if entry.kind == DELETE else entry.value
    rec = table.records.get(key)
    if rec is None:
        state.absent_reads.append(item)
        return None
    word, value = stable_read(rec)
    if item not in state.read_set:
        state.read_set[item] = (rec, word)
    return None if word & ABSENT else value


def write(state, table: Table, key, value, subtxn=0, reactor=""):
    item = (table, key)
    prev = state.write_set.get(item)
    kind = PUT
    if prev is not None and prev.kind == INSERT:
        kind = INSERT
    state.write_set[item] = WriteEntry(value, kind, subtxn, reactor)


def insert(state, table: Table, key, value, subtxn=0, reactor=""):
    """Buffer an insert; key absence is asserted at validation time."""
    item = (table, key)
    prev = state.write_set.get(item)
    kind = INSERT
    if prev is not None and prev.kind == DELETE:
        kind = PUT
    state.write_set[item] = WriteEntry(value, kind, subtxn, reactor)


def delete(state, table: Table, key, subtxn=0, reactor=""):
    item = (table, key)
    prev = state.write_set.get(item)
    if prev is not None and prev.kind == INSERT:
        # inserted and deleted by the same transaction: nothing to install,
        # but keep the key-absence check
        state.write_set.pop(item)
        state.absent_reads.append(item)
        return
    state.write_set[item] = WriteEntry(None, DELETE, subtxn, reactor)


def _committed_stream(table, lo, hi, reverse, observed):
    """Yield present committed rows, appending (key, word) to ``observed``."""
    for key, rec in table.iter_range(lo, hi, reverse):
        word, value = stable_read(rec)
        if word & ABSENT:
            continue
        observed.append((key, word))
        yield key, value, word


def range_scan(state, table: Table, lo, hi, limit=None, reverse=False):
    """Ordered scan over [lo, hi] merged with the transaction's own writes.

    The committed rows consumed are remembered in the scan set so that
    validation can re-run the predicate and detect phantoms.
    """
    if lo > hi:
        raise ValueError("range_scan requires lo <= hi")
    own = sorted(((k, e) for (t, k), e in state.write_set.items() if t is table and lo <= k <= hi),
                 key=lambda kv: kv[0], reverse=reverse)
    observed = []
    stream = _committed_stream(table, lo, hi, reverse, observed)
    entries = []
    oi = 0
    nxt = next(stream, None)
    while True:
        if nxt is None and oi >= len(own):
            break
        if limit is not None and len(entries) >= limit:
            break
        if oi < len(own) and (nxt is None or nxt[0] == own[oi][0]
                              or (nxt[0] > own[oi][0]) != reverse):
            key, entry = own[oi]
            oi += 1
            if nxt is not None and nxt[0] == key:
                nxt = next(stream, None)
            if entry.kind != DELETE:
                entries.append((key, entry.value, None))
            continue
        entries.append(nxt)
        nxt = next(stream, None)
    exhausted = nxt is None and oi >= len(own)
    # ``observed`` may hold one look-ahead row past the returned entries; it
    # was read, so it belongs to the predicate's footprint
    state.scan_set.append(ScanPredicate(table, lo, hi, limit, reverse, observed, nxt is None))
    return ScanResult(entries, exhausted)


def rescan_matches(pred: ScanPredicate, self_locked):
    """Re-run a scan predicate during validation; True when nothing changed.

    Rows locked by another committer count as a change (no waiting here: the
    caller already holds write latches).
    """
    n = len(pred.observed)
    i = 0
    for key, rec in pred.table.iter_range(pred.lo, pred.hi, pred.reverse):
        word = rec.word
        if word & LOCKED:
            if id(rec) not in self_locked:
                return False
            word &= ~LOCKED
        if word & ABSENT:
            continue
        if i >= n:
            # a row beyond the consumed prefix only matters when the
            # original scan saw the whole range
            return not pred.table_exhausted
        if pred.observed[i] != (key, word):
            return False
        i += 1
    return i == n
