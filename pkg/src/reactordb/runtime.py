"""The reactor programming model.

Procedures are plain functions ``proc(tx, *args)``.  ``tx`` is the
`SubTxn` handle of the running (sub-)transaction and offers the record
manager interface scoped to the reactor's own state (``read``, ``write``,
``insert``, ``delete``, ``scan``) plus ``call`` to invoke a procedure on
another reactor.  ``call`` returns a `Future`:

* calls to the current reactor run inline, right away;
* calls to a reactor in the same container run synchronously on the current
  worker;
* calls to a reactor in another container are shipped to an executor there
  and the future stays pending until the reply arrives.

A sub-transaction is complete only when every call it issued has completed
(implicit join), and any failure anywhere aborts the whole root transaction.
Two sub-transactions of the same root may never be active on one reactor at
the same time; such a dispatch aborts the root with `DangerousStructure`.
"""

from __future__ import annotations

import itertools
import pickle
import threading
from dataclasses import dataclass, field

from . import storage
from .coordinator import abort_root, commit_root
from .errors import (DangerousStructure, ProcedureError, ShutdownAbort, TransactionAborted,
                     UnknownProcedure, UnknownReactor, UnknownType, UnmappedReactor)
from .executors import Container, Transport
from .occ import ContainerTxnState, TidGenerator
from .storage import TableSchema
from .tracing import SubProfile, Tracer, TxnProfile, now_ns

INLINE = "inline"
SAME_CONTAINER = "same-container-sync"
REMOTE = "cross-container-async"

PENDING = "pending"
RESOLVED = "resolved"
FAILED = "failed"

_tls = threading.local()


def current_subtxn():
    return getattr(_tls, "sub", None)


@dataclass
class ReactorType:
    """A reactor type: the tables every instance owns and its procedures."""

    type_name: str
    procedures: dict
    tables: tuple = ()

    def __post_init__(self):
        self.procedures = dict(self.procedures)
        self.tables = tuple(t if isinstance(t, TableSchema) else TableSchema(*t) for t in self.tables)

    def procedure(self, name):
        try:
            return self.procedures[name]
        except KeyError:
            raise UnknownProcedure(f"{self.type_name} has no procedure {name!r}") from None


@dataclass(frozen=True)
class ReactorDescriptor:
    name: str
    type_name: str
    container_id: int
    executor_id: int | None = None


@dataclass(frozen=True)
class SubTxnRef:
    root_txn_id: int
    subtxn_id: int
    reactor: str
    parent: int | None
    mode: str


def _fresh(exc):
    """Re-raisable copy of an abort (one exception object per raising thread)."""
    new = type(exc)(str(exc))
    new.reason = exc.reason
    return new


class Future:
    """Result of a sub-transaction call."""

    __slots__ = ("ref", "ctx", "state", "_payload", "_value", "_decoded", "error", "profile")

    def __init__(self, ref, ctx):
        self.ref = ref
        self.ctx = ctx
        self.state = PENDING
        self._payload = None
        self._value = None
        self._decoded = False
        self.error = None
        self.profile = None

    def __repr__(self):
        return f"Future({self.ref.reactor}#{self.ref.subtxn_id}, {self.state})"

    def done(self):
        return self.state != PENDING

    def _settle(self, payload=None, error=None, encoded=True):
        with self.ctx.mutex:
            if self.state != PENDING:
                return
            if error is not None:
                self.error = error
                self.state = FAILED
            else:
                if encoded:
                    self._payload = payload
                else:
                    self._value = payload
                    self._decoded = True
                self.state = RESOLVED
            waiters = self.ctx._waiting.pop(self, None)
        if waiters:
            for ev in waiters:
                ev.set()

    def _result(self):
        if self.state == FAILED:
            raise _fresh(self.error)
        if not self._decoded:
            self._value = pickle.loads(self._payload)
            self._decoded = True
            self._payload = None
        return self._value

    def get(self):
        sub = current_subtxn()
        if sub is not None and sub.ctx is self.ctx:
            return sub.get(self)
        self.ctx.wait_for(self)
        self.ctx.check()
        return self._result()


class TransactionContext:
    """State of one root transaction across all containers it touches."""

    def __init__(self, db, txn_id, reactor, procedure):
        self.db = db
        self.txn_id = txn_id
        self.reactor = reactor
        self.procedure = procedure
        self.states = {}
        self.touched = set()
        self.mutex = threading.Lock()
        self._waiting = {}  # future -> [Event] of threads blocked on it
        self.abort_error = None
        self.terminated = False
        self._j = itertools.count(1)
        self.profile = None

    def __repr__(self):
        return f"TransactionContext({self.txn_id}, {self.reactor}.{self.procedure})"

    def new_subtxn_id(self):
        return next(self._j)

    def state_for(self, container_id):
        st = self.states.get(container_id)
        if st is None:
            st = self.states.setdefault(container_id, ContainerTxnState(container_id))
            self.touched.add(container_id)
        return st

    def abort(self, exc):
        with self.mutex:
            if self.abort_error is None:
                self.abort_error = exc
            waiting, self._waiting = self._waiting, {}
        for events in waiting.values():
            for ev in events:
                ev.set()

    def check(self):
        if self.abort_error is not None:
            raise _fresh(self.abort_error)

    def wait_for(self, fut):
        """Block until ``fut`` settles or the transaction aborts.  Only the
        settlement of this very future (or an abort) wakes the caller."""
        with self.mutex:
            if fut.state != PENDING or self.abort_error is not None:
                return
            ev = threading.Event()
            self._waiting.setdefault(fut, []).append(ev)
        ev.wait()


class SubTxn:
    """Handle passed to procedures as ``tx``."""

    __slots__ = ("ctx", "ref", "desc", "db", "container_id", "state", "executor", "children",
                 "profile", "_last_async", "_outstanding", "_window_open", "_window_owner")

    def __init__(self, ctx, ref, desc, executor):
        self.ctx = ctx
        self.ref = ref
        self.desc = desc
        self.db = ctx.db
        self.container_id = desc.container_id
        self.state = None
        self.executor = executor
        self.children = []
        self.profile = None
        self._last_async = None
        self._outstanding = None
        self._window_open = 0
        self._window_owner = None

    def __repr__(self):
        return f"SubTxn({self.ctx.txn_id}.{self.ref.subtxn_id}@{self.desc.name})"

    @property
    def reactor(self):
        return self.desc.name

    @property
    def txn_id(self):
        return self.ctx.txn_id

    # -- record manager, scoped to this reactor ----------------------------

    def _st(self):
        st = self.state
        if st is None:
            st = self.state = self.ctx.state_for(self.container_id)
        return st

    def _table(self, name):
        try:
            return self.db.containers[self.container_id].store.tables[name]
        except KeyError:
            raise KeyError(f"reactor {self.reactor} has no table {name!r}") from None

    def _key(self, key):
        if isinstance(key, tuple):
            return (self.desc.name,) + key
        return (self.desc.name, key)

    def read(self, table, key):
        self._last_async = None
        t = self._table(table)
        value = storage.read(self._st(), t, self._key(key))
        if self.db.tracer is not None:
            self.db.tracer.op(self.ctx, self.ref.subtxn_id, self.reactor, table, key, "r")
        return value

    def write(self, table, key, value):
        self._last_async = None
        storage.write(self._st(), self._table(table), self._key(key), value,
                      self.ref.subtxn_id, self.reactor)

    def insert(self, table, key, value):
        self._last_async = None
        storage.insert(self._st(), self._table(table), self._key(key), value,
                       self.ref.subtxn_id, self.reactor)

    def delete(self, table, key):
        self._last_async = None
        storage.delete(self._st(), self._table(table), self._key(key),
                       self.ref.subtxn_id, self.reactor)

    def scan(self, table, lo, hi, limit=None, reverse=False):
        """Ordered range scan over this reactor's rows of ``table``.

        Keys in the result are returned as tuples without the reactor name.
        """
        self._last_async = None
        t = self._table(table)
        res = storage.range_scan(self._st(), t, self._key(lo), self._key(hi), limit, reverse)
        res.entries = [(k[1:], v, w) for k, v, w in res.entries]
        tracer = self.db.tracer
        if tracer is not None:
            for k, _, _ in res.entries:
                tracer.op(self.ctx, self.ref.subtxn_id, self.reactor, table, k, "r")
        return res

    def abort(self, message="aborted by procedure"):
        from .errors import UserAbort
        raise UserAbort(message)

    # -- calls -------------------------------------------------------------

    def call(self, reactor, procedure, *args):
        ctx = self.ctx
        ctx.check()
        self._last_async = None
        db = self.db
        dest = db.descriptor(reactor)
        db.types[dest.type_name].procedure(procedure)
        j = ctx.new_subtxn_id()
        if dest.name == self.desc.name:
            mode = INLINE
        elif dest.container_id == self.container_id:
            mode = SAME_CONTAINER
        else:
            mode = REMOTE
        ref = SubTxnRef(ctx.txn_id, j, dest.name, self.ref.subtxn_id, mode)
        fut = Future(ref, ctx)
        prof = None
        if ctx.profile is not None:
            prof = SubProfile(j, self.ref.subtxn_id, dest.name, procedure, mode, t_call=now_ns())
            ctx.profile.subtxns[j] = prof
            fut.profile = prof
        if mode == REMOTE:
            ctx.touched.add(dest.container_id)
            payload = pickle.dumps(args, protocol=pickle.HIGHEST_PROTOCOL)
            req = SubRequest(ctx, ref, dest, procedure, payload, fut)
            self.children.append(fut)
            if prof is not None:
                if not self._outstanding:
                    self._outstanding = set()
                    self._window_open = prof.t_call
                    self._window_owner = fut
                self._outstanding.add(fut)
            db.transport.send(dest.container_id, req)
            self._last_async = fut
            return fut
        # synchronous execution on this worker
        child = SubTxn(ctx, ref, dest, self.executor)
        child.profile = prof
        active = None
        if mode == SAME_CONTAINER:
            active = db.containers[dest.container_id].active
            other = active.enter(dest.name, ctx.txn_id, j)
            if other is not None:
                err = DangerousStructure(
                    f"{dest.name} already runs sub-transaction {other} of txn {ctx.txn_id}")
                ctx.abort(err)
                raise err
        try:
            value = child.run(procedure, args)
        finally:
            if active is not None:
                active.leave(dest.name, ctx.txn_id, j)
        fut._settle(value, encoded=False)
        return fut

    def get(self, fut):
        ctx = self.ctx
        ctx.check()
        synchronous = fut is self._last_async
        self._last_async = None
        if fut.state == PENDING:
            if self.executor is not None:
                self.executor.block(lambda: ctx.wait_for(fut))
            else:
                ctx.wait_for(fut)
        ctx.check()
        prof = fut.profile
        if prof is not None and prof.mode == REMOTE and not prof.t_resume:
            self._note_resume(fut, prof, synchronous)
        return fut._result()

    def _note_resume(self, fut, prof, synchronous):
        t = now_ns()
        prof.t_resume = t
        outstanding = self._outstanding
        if not outstanding or fut not in outstanding:
            return
        outstanding.discard(fut)
        if synchronous and self._window_owner is fut and not outstanding:
            prof.sync = True
            self._outstanding = None
            self._window_owner = None
            return
        if synchronous:
            prof.sync = True
        if not outstanding:
            self.profile_windows().append([self._window_open, t])
            self._outstanding = None
            self._window_owner = None

    def profile_windows(self):
        prof = self.profile
        if prof is None:
            prof = self.ctx.profile.subtxns.get(self.ref.subtxn_id)
        return prof.windows

    def join(self):
        """Wait for every call issued by this sub-transaction."""
        for fut in self.children:
            if fut.state == PENDING or (fut.profile is not None and not fut.profile.t_resume):
                self.get(fut)
            elif fut.state == FAILED:
                raise _fresh(fut.error)
        self.ctx.check()

    def run(self, procedure, args):
        fn = self.db.types[self.desc.type_name].procedure(procedure)
        prev = getattr(_tls, "sub", None)
        _tls.sub = self
        prof = self.profile
        if prof is not None:
            prof.t_start = now_ns()
        try:
            result = fn(self, *args)
            self.join()
        finally:
            _tls.sub = prev
        if prof is not None:
            prof.t_end = now_ns()
        return result


class _Request:
    seq_token = None
    t_enqueue = 0
    t_send = 0


class SubRequest(_Request):
    def __init__(self, ctx, ref, desc, procedure, payload, fut):
        self.ctx = ctx
        self.ref = ref
        self.desc = desc
        self.reactor = desc.name
        self.procedure = procedure
        self.payload = payload
        self.fut = fut
        self.seq_token = (ctx.txn_id, ref.subtxn_id)

    def abort(self, exc):
        self.ctx.abort(exc)
        self.fut._settle(error=exc)

    def run(self, executor):
        ctx = self.ctx
        ref = self.ref
        if ctx.abort_error is not None:
            self.fut._settle(error=ctx.abort_error)
            return
        db = ctx.db
        active = db.containers[self.desc.container_id].active
        other = active.enter(self.reactor, ctx.txn_id, ref.subtxn_id)
        if other is not None:
            err = DangerousStructure(
                f"{self.reactor} already runs sub-transaction {other} of txn {ctx.txn_id}")
            ctx.abort(err)
            self.fut._settle(error=err)
            return
        sub = SubTxn(ctx, ref, self.desc, executor)
        sub.profile = self.fut.profile
        error = None
        payload = None
        try:
            args = pickle.loads(self.payload)
            result = sub.run(self.procedure, args)
            payload = pickle.dumps(result, protocol=pickle.HIGHEST_PROTOCOL)
        except TransactionAborted as exc:
            error = exc
        except Exception as exc:  # noqa: BLE001 - bug in a procedure aborts the root
            error = ProcedureError(f"{self.reactor}.{self.procedure}: {exc!r}")
        finally:
            active.leave(self.reactor, ctx.txn_id, ref.subtxn_id)
        if error is not None:
            ctx.abort(error)
            db.transport.reply(self.fut, error=error)
        else:
            db.transport.reply(self.fut, payload)


@dataclass
class Outcome:
    txn_id: int
    committed: bool
    value: object = None
    reason: str | None = None
    error: BaseException | None = None
    tid: int | None = None
    profile: TxnProfile | None = field(default=None, repr=False)

    def result(self):
        if not self.committed:
            raise self.error
        return self.value


class ClientFuture:
    def __init__(self):
        self._event = threading.Event()
        self.outcome = None

    def set(self, outcome):
        self.outcome = outcome
        self._event.set()

    def done(self):
        return self._event.is_set()

    def wait(self, timeout=None) -> Outcome:
        if not self._event.wait(timeout):
            raise TimeoutError("transaction did not finish in time")
        prof = self.outcome.profile
        if prof is not None and not prof.t_client:
            prof.t_client = now_ns()
        return self.outcome

    def result(self, timeout=None):
        return self.wait(timeout).result()


class RootRequest(_Request):
    def __init__(self, ctx, desc, procedure, args, client):
        self.ctx = ctx
        self.desc = desc
        self.reactor = desc.name
        self.procedure = procedure
        self.args = args
        self.client = client
        self.seq_token = (ctx.txn_id, 0)

    def abort(self, exc):
        ctx = self.ctx
        ctx.abort(exc)
        ctx.db._finish(ctx, self.client, Outcome(ctx.txn_id, False, reason=exc.reason, error=exc))

    def run(self, executor):
        ctx = self.ctx
        db = ctx.db
        prof = ctx.profile
        if prof is not None:
            prof.t_start = now_ns()
        ref = SubTxnRef(ctx.txn_id, 0, self.reactor, None, INLINE)
        sub = SubTxn(ctx, ref, self.desc, executor)
        if prof is not None:
            sp = SubProfile(0, None, self.reactor, self.procedure, "root", t_call=prof.t_submit,
                            t_start=prof.t_start)
            prof.subtxns[0] = sp
            sub.profile = sp
        active = db.containers[self.desc.container_id].active
        ctx.touched.add(self.desc.container_id)
        outcome = None
        try:
            if active.enter(self.reactor, ctx.txn_id, 0) is not None:  # pragma: no cover
                raise DangerousStructure("root already active")
            try:
                value = sub.run(self.procedure, self.args)
            finally:
                active.leave(self.reactor, ctx.txn_id, 0)
            ctx.check()
            if prof is not None:
                prof.t_body_end = now_ns()
            tid = commit_root(ctx) if db.cc_enabled else None
            outcome = Outcome(ctx.txn_id, True, value, tid=tid)
        except TransactionAborted as exc:
            ctx.abort(exc)
            outcome = Outcome(ctx.txn_id, False, reason=exc.reason, error=exc)
        except Exception as exc:  # noqa: BLE001
            err = ProcedureError(f"{self.reactor}.{self.procedure}: {exc!r}")
            err.__cause__ = exc
            ctx.abort(err)
            outcome = Outcome(ctx.txn_id, False, reason=err.reason, error=err)
        if not outcome.committed:
            abort_root(ctx)
            if prof is not None and not prof.t_body_end:
                prof.t_body_end = now_ns()
        db._finish(ctx, self.client, outcome)


class Database:
    """A running reactor database: registry, containers and executors."""

    def __init__(self, declarations, types, plan, *, trace=None, profile=False, cc_enabled=True,
                 record_admissions=False, epoch_ms=40):
        self.plan = plan
        self.types = {}
        for t in types:
            if t.type_name in self.types:
                raise ValueError(f"reactor type {t.type_name!r} declared twice")
            self.types[t.type_name] = t
        affinity = {c.id: {} for c in plan.containers}
        self.reactors = {}
        for name, type_name in declarations:
            if type_name not in self.types:
                raise UnknownType(f"reactor {name!r} has unknown type {type_name!r}")
            if name in self.reactors:
                raise ValueError(f"reactor {name!r} declared twice")
            if not isinstance(name, str) or not name or " " in name:
                raise ValueError(f"invalid reactor name {name!r}")
            where = plan.resolve(name)
            if where is None:
                raise UnmappedReactor(f"reactor {name!r} is not mapped by the deployment plan")
            cid, eid = where
            self.reactors[name] = ReactorDescriptor(name, type_name, cid, eid)
            if eid is not None:
                affinity[cid][name] = eid
        self.containers = {c.id: Container(c, plan.router, affinity[c.id], record_admissions)
                           for c in plan.containers}
        for desc in self.reactors.values():
            container = self.containers[desc.container_id]
            container.reactors.add(desc.name)
            for schema in self.types[desc.type_name].tables:
                container.store.ensure_table(schema)
        self.transport = Transport(self.containers)
        self.tids = TidGenerator(epoch_ms)
        if isinstance(trace, Tracer) or trace is None:
            self.tracer = trace
        else:
            self.tracer = Tracer(trace)
        self.profiling = profile
        self.profiles = []
        self.cc_enabled = cc_enabled
        self._txn_ids = itertools.count(1)
        self._live = {}
        self._live_lock = threading.Lock()
        self.started = False
        self.closed = False

    def __repr__(self):
        return f"Database({len(self.reactors)} reactors, {len(self.containers)} containers)"

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.shutdown()

    def executors(self):
        for c in self.containers.values():
            yield from c.executors

    def start(self):
        if not self.started:
            self.started = True
            for ex in self.executors():
                ex.start()
        return self

    def shutdown(self, timeout=5.0):
        if self.closed:
            return
        self.closed = True
        for ex in self.executors():
            with ex._lock:
                ex.stopping = True
        with self._live_lock:
            live = list(self._live.values())
        for ctx in live:
            ctx.abort(ShutdownAbort("database shut down"))
        for ex in self.executors():
            ex.shutdown(timeout)
        if self.tracer is not None:
            self.tracer.close()

    def descriptor(self, name):
        try:
            return self.reactors[name]
        except KeyError:
            raise UnknownReactor(f"no reactor named {name!r}") from None

    # -- data access outside transactions ------------------------------------

    def table(self, reactor, name):
        return self.containers[self.descriptor(reactor).container_id].store.tables[name]

    def load(self, reactor, table, key, value):
        """Bulk-load a committed row into a reactor's table (before start)."""
        full = (reactor,) + key if isinstance(key, tuple) else (reactor, key)
        self.table(reactor, table).load(full, value)

    def reactor_rows(self, reactor, table):
        """Committed rows of ``table`` owned by ``reactor`` (keys without the reactor)."""
        t = self.table(reactor, table)
        return {k[1:]: v for k, v in t.committed_items().items() if k[0] == reactor}

    def logical_state(self):
        """{(reactor, table, key): value} for every committed row."""
        out = {}
        for c in self.containers.values():
            for tname, t in c.store.tables.items():
                for k, v in t.committed_items().items():
                    out[(k[0], tname, k[1:])] = v
        return out

    # -- clients -----------------------------------------------------------

    def submit(self, reactor, procedure, *args, t_origin=None) -> ClientFuture:
        if not self.started:
            raise RuntimeError("database not started")
        desc = self.descriptor(reactor)
        self.types[desc.type_name].procedure(procedure)
        ctx = TransactionContext(self, next(self._txn_ids), reactor, procedure)
        client = ClientFuture()
        if self.profiling:
            t = now_ns()
            ctx.profile = TxnProfile(ctx.txn_id, procedure, reactor,
                                     t_origin=t_origin if t_origin is not None else t, t_submit=t)
        with self._live_lock:
            self._live[ctx.txn_id] = ctx
        req = RootRequest(ctx, desc, procedure, args, client)
        container = self.containers[desc.container_id]
        if self.closed:
            req.abort(ShutdownAbort("database shut down"))
        else:
            container.router.route(reactor).enqueue(req)
        return client

    def run(self, reactor, procedure, *args, timeout=60.0) -> Outcome:
        return self.submit(reactor, procedure, *args).wait(timeout)

    def _finish(self, ctx, client, outcome):
        if self.tracer is not None:
            self.tracer.terminal(ctx, outcome.committed)
        else:
            ctx.terminated = True
        with self._live_lock:
            self._live.pop(ctx.txn_id, None)
        prof = ctx.profile
        if prof is not None:
            prof.committed = outcome.committed
            prof.t_commit_end = now_ns()
            outcome.profile = prof
        if prof is not None:
            self.profiles.append(prof)
        client.set(outcome)


def instantiate_database(declarations, types, plan, **options) -> Database:
    """Create the database described by reactor declarations, types and a plan."""
    return Database(declarations, types, plan, **options)
