"""Containers, transaction executors, routers and the in-process transport.

An executor is a FIFO request queue plus a pool of worker threads.  At most
``mpl`` workers execute requests at any time.  A worker that blocks on a
remote future gives its slot away (waking an idle peer or spawning one), and
when the future resolves it queues up to get a slot back; such resuming
workers take precedence over admitting new requests.
"""

from __future__ import annotations

import itertools
import logging
import os
import threading
import warnings
from collections import deque

from .errors import ShutdownAbort
from .storage import RecordStore
from .tracing import now_ns

log = logging.getLogger(__name__)


class TransactionExecutor:
    def __init__(self, container_id, executor_id, mpl=1, core=None, record_admissions=False):
        if mpl < 1:
            raise ValueError("mpl must be >= 1")
        self.container_id = container_id
        self.id = executor_id
        self.mpl = mpl
        self.core = core
        self.queue = deque()
        self._lock = threading.Lock()
        self._admit = threading.Condition(self._lock)
        self._resume = threading.Condition(self._lock)
        self.active = 0
        self.resuming = 0
        self.idle = 0
        self.threads = []
        self.started = False
        self.stopping = False
        # instrumentation
        self.max_active = 0
        self.admitted = 0
        self.arrivals = 0
        self.admission_log = deque(maxlen=100_000) if record_admissions else None
        self.arrival_log = deque(maxlen=100_000) if record_admissions else None

    def __repr__(self):
        return f"Executor(c{self.container_id}/e{self.id}, mpl={self.mpl}, active={self.active})"

    # -- lifecycle ---------------------------------------------------------

    def start(self):
        with self._lock:
            if self.started:
                return
            self.started = True
            self._spawn()

    def shutdown(self, timeout=5.0):
        with self._lock:
            self.stopping = True
            leftovers = list(self.queue)
            self.queue.clear()
            self._admit.notify_all()
            self._resume.notify_all()
        for req in leftovers:
            req.abort(ShutdownAbort("executor shut down before the request ran"))
        for t in list(self.threads):
            if t is not threading.current_thread():
                t.join(timeout)

    def _spawn(self):
        # caller holds the lock
        t = threading.Thread(target=self._worker_loop, daemon=True,
                             name=f"exec-c{self.container_id}-e{self.id}-{len(self.threads)}")
        self.threads.append(t)
        self.idle += 1  # counts as idle until it reaches the wait loop
        t.start()

    def _pin(self):
        if self.core is None:
            return
        try:
            os.sched_setaffinity(0, {self.core})
        except (OSError, AttributeError, ValueError) as exc:
            warnings.warn(f"could not pin executor c{self.container_id}/e{self.id} to core "
                          f"{self.core}: {exc}; running unpinned", RuntimeWarning, stacklevel=2)
            self.core = None

    # -- queue -------------------------------------------------------------

    def enqueue(self, request):
        request.t_enqueue = now_ns()
        with self._lock:
            if self.stopping:
                rejected = True
            else:
                rejected = False
                self.queue.append(request)
                self.arrivals += 1
                if self.arrival_log is not None:
                    self.arrival_log.append(request.seq_token)
                if self.idle > 0:
                    self._admit.notify()
                elif self.started and self.active < self.mpl and self.resuming == 0:
                    self._spawn()
        if rejected:
            request.abort(ShutdownAbort("executor is shutting down"))

    def _can_admit(self):
        return self.queue and self.active < self.mpl and self.resuming == 0

    def _worker_loop(self):
        self._pin()
        lock = self._lock
        with lock:
            self.idle -= 1
            while True:
                while not self.stopping and not self._can_admit():
                    self.idle += 1
                    self._admit.wait()
                    self.idle -= 1
                if self.stopping:
                    return
                req = self.queue.popleft()
                self.active += 1
                self.admitted += 1
                if self.active > self.max_active:
                    self.max_active = self.active
                if self.admission_log is not None:
                    self.admission_log.append(req.seq_token)
                # several enqueues may have "notified" one thread that was not
                # waiting yet; pass remaining admissible work on to a peer
                if self._can_admit():
                    if self.idle:
                        self._admit.notify()
                    else:
                        self._spawn()
                lock.release()
                try:
                    req.run(self)
                except BaseException:  # noqa: BLE001 - requests handle their own errors
                    log.exception("request crashed on %r", self)
                finally:
                    lock.acquire()
                    self.active -= 1
                    self._handoff()

    def _handoff(self):
        # caller holds the lock; a slot just became free
        if self.resuming:
            self._resume.notify()
        elif self.queue:
            if self.idle:
                self._admit.notify()
            elif not self.stopping:
                self._spawn()

    # -- cooperative blocking ----------------------------------------------

    def block(self, wait):
        """Run ``wait()`` (which blocks) without occupying an MPL slot."""
        with self._lock:
            self.active -= 1
            self._handoff()
        try:
            wait()
        finally:
            with self._lock:
                self.resuming += 1
                while self.active >= self.mpl and not self.stopping:
                    self._resume.wait()
                self.resuming -= 1
                self.active += 1
                if self.active > self.max_active:
                    self.max_active = self.active


class Router:
    """Chooses the executor of a container for an incoming request."""

    def __init__(self, policy, executors, affinity=None):
        if policy not in ("round_robin", "affinity"):
            raise ValueError(f"unknown router policy {policy!r}")
        self.policy = policy
        self.executors = list(executors)
        self._by_id = {e.id: e for e in self.executors}
        self.affinity = dict(affinity or {})
        self._counter = itertools.count()

    def route(self, reactor):
        if self.policy == "affinity" or len(self.executors) == 1:
            eid = self.affinity.get(reactor)
            if eid is not None:
                return self._by_id[eid]
            if len(self.executors) == 1:
                return self.executors[0]
        return self.executors[next(self._counter) % len(self.executors)]


class ActiveSet:
    """Per-reactor record of which sub-transaction of each root is running."""

    def __init__(self):
        self._lock = threading.Lock()
        self._active = {}  # reactor -> {txn_id: subtxn_id}

    def enter(self, reactor, txn_id, subtxn_id):
        """Register; returns the conflicting subtxn id, or None when admitted."""
        with self._lock:
            cur = self._active.get(reactor)
            if cur is None:
                cur = self._active[reactor] = {}
            other = cur.get(txn_id)
            if other is not None and other != subtxn_id:
                return other
            cur[txn_id] = subtxn_id
            return None

    def leave(self, reactor, txn_id, subtxn_id):
        with self._lock:
            cur = self._active.get(reactor)
            if cur is not None and cur.get(txn_id) == subtxn_id:
                del cur[txn_id]

    def snapshot(self):
        with self._lock:
            return {r: dict(m) for r, m in self._active.items() if m}


class Container:
    def __init__(self, spec, router_policy, affinity, record_admissions=False):
        self.id = spec.id
        self.store = RecordStore(spec.id)
        self.active = ActiveSet()
        self.executors = [TransactionExecutor(spec.id, x.id, x.mpl, x.core, record_admissions)
                          for x in spec.executors]
        self.router = Router(router_policy, self.executors, affinity)
        self.reactors = set()

    def __repr__(self):
        return f"Container({self.id}, executors={len(self.executors)}, reactors={len(self.reactors)})"

    def executor(self, eid):
        return self.router._by_id[eid]


class Transport:
    """In-process message passing between containers."""

    def __init__(self, containers):
        self.containers = containers
        self.sent = 0

    def send(self, container_id, request):
        container = self.containers[container_id]
        request.t_send = now_ns()
        self.sent += 1
        container.router.route(request.reactor).enqueue(request)

    def reply(self, future, value=None, error=None):
        future._settle(value, error)
