"""Fork-join latency model for reactor sub-transactions.

A fork-join sub-transaction on reactor ``k`` runs some sequential logic
(``p_seq`` plus synchronous calls ``sync_seq``), then forks ``async_children``
at one program point; while those run it executes ``p_ovp`` plus synchronous
calls ``sync_ovp``, and finally joins.  Its latency is::

    L = p_seq + sum(L(c) + Cs(k,c) + Cr(c,k) for c in sync_seq)
          + max(overlap, max_i(L(a_i) + Cr(a_i,k) + sum_{j<=i} Cs(k,a_j)))
    overlap = p_ovp + sum(L(c) + Cs(k,c) + Cr(c,k) for c in sync_ovp)

`estimate_latency` evaluates this recursively.  `simulate_forkjoin` computes
the same quantity by discrete-event simulation (one sequential sender per
parent, unlimited parallelism elsewhere) and serves as an independent check.

The second half of the module turns runtime profiles into the model's inputs
(`calibrate`) and splits a measured latency into the model's buckets
(`decompose`).
"""

from __future__ import annotations

import heapq
import itertools
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import IncompleteTrace, InsufficientSamples

REMOTE = "cross-container-async"


@dataclass
class ForkJoinNode:
    reactor: str
    p_seq: float = 0
    p_ovp: float = 0
    sync_seq: list = field(default_factory=list)
    async_children: list = field(default_factory=list)
    sync_ovp: list = field(default_factory=list)

    def children(self):
        return [*self.sync_seq, *self.async_children, *self.sync_ovp]

    def size(self):
        return 1 + sum(c.size() for c in self.children())


@dataclass
class CostParams:
    """Communication costs between reactors.

    ``send``/``recv`` apply to every pair of reactors in different containers
    unless ``pair_send``/``pair_recv`` override the pair.  Calls within one
    reactor or one container cost nothing.  ``location`` maps reactor to
    container; reactors missing from it are assumed to be alone in theirs.
    """

    send: float = 0
    recv: float = 0
    pair_send: dict = field(default_factory=dict)
    pair_recv: dict = field(default_factory=dict)
    location: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = [self.send, self.recv, *self.pair_send.values(), *self.pair_recv.values()]
        if any(v < 0 for v in vals):
            raise ValueError("communication costs must be nonnegative")

    def _local(self, a, b):
        if a == b:
            return True
        la, lb = self.location.get(a), self.location.get(b)
        return la is not None and la == lb

    def c_send(self, k, k2):
        if self._local(k, k2):
            return 0
        return self.pair_send.get((k, k2), self.send)

    def c_recv(self, k2, k):
        if self._local(k, k2):
            return 0
        return self.pair_recv.get((k2, k), self.recv)


def estimate_latency(node: ForkJoinNode, params: CostParams):
    k = node.reactor
    total = node.p_seq
    for c in node.sync_seq:
        total += estimate_latency(c, params) + params.c_send(k, c.reactor) + params.c_recv(c.reactor, k)
    best = node.p_ovp
    for c in node.sync_ovp:
        best += estimate_latency(c, params) + params.c_send(k, c.reactor) + params.c_recv(c.reactor, k)
    sent = 0
    for c in node.async_children:
        sent += params.c_send(k, c.reactor)
        best = max(best, estimate_latency(c, params) + params.c_recv(c.reactor, k) + sent)
    return total + best


# ---------------------------------------------------------------------------
# discrete-event oracle


class _Sim:
    def __init__(self):
        self.now = 0
        self._heap = []
        self._tie = itertools.count()

    def at(self, t, fn):
        heapq.heappush(self._heap, (t, next(self._tie), fn))

    def run(self):
        while self._heap:
            t, _, fn = heapq.heappop(self._heap)
            self.now = t
            fn()


def _start(sim, params, node, done):
    """Schedule the execution of ``node`` starting now; ``done()`` fires at completion."""
    k = node.reactor

    def sync_chain(children, then):
        # run the synchronous calls one after the other
        it = iter(children)

        def step():
            c = next(it, None)
            if c is None:
                then()
                return
            sim.at(sim.now + params.c_send(k, c.reactor),
                   lambda: _start(sim, params, c,
                                  lambda: sim.at(sim.now + params.c_recv(c.reactor, k), step)))
        step()

    def fork():
        pending = [1 + len(node.async_children)]

        def arrive():
            pending[0] -= 1
            if pending[0] == 0:
                done()

        # the sending loop of the parent: one message at a time
        def send(i):
            if i == len(node.async_children):
                return
            c = node.async_children[i]

            def delivered():
                _start(sim, params, c, lambda: sim.at(sim.now + params.c_recv(c.reactor, k), arrive))
                send(i + 1)

            sim.at(sim.now + params.c_send(k, c.reactor), delivered)

        send(0)
        sim.at(sim.now + node.p_ovp, lambda: sync_chain(node.sync_ovp, arrive))

    sim.at(sim.now + node.p_seq, lambda: sync_chain(node.sync_seq, fork))


def simulate_forkjoin(node: ForkJoinNode, params: CostParams):
    sim = _Sim()
    finish = []
    sim.at(0, lambda: _start(sim, params, node, lambda: finish.append(sim.now)))
    sim.run()
    return finish[0]


def random_tree(rng, max_depth=3, max_fanout=5, max_cost=20, n_reactors=6, depth=0):
    """Random fork-join tree with integer costs (for exact comparisons)."""
    def kids():
        if depth >= max_depth:
            return []
        return [random_tree(rng, max_depth, max_fanout, max_cost, n_reactors, depth + 1)
                for _ in range(rng.randint(0, max_fanout))]

    node = ForkJoinNode(f"k{rng.randrange(n_reactors)}", rng.randint(0, max_cost), rng.randint(0, max_cost))
    node.sync_seq = kids()[: rng.randint(0, 2)]
    node.async_children = kids()
    node.sync_ovp = kids()[: rng.randint(0, 2)]
    return node


def random_params(rng, n_reactors=6, max_cost=10, n_containers=3):
    names = [f"k{i}" for i in range(n_reactors)]
    params = CostParams(rng.randint(0, max_cost), rng.randint(0, max_cost),
                        location={n: rng.randrange(n_containers) for n in names})
    for a in names:
        for b in names:
            if rng.random() < 0.3:
                params.pair_send[(a, b)] = rng.randint(0, max_cost)
            if rng.random() < 0.3:
                params.pair_recv[(a, b)] = rng.randint(0, max_cost)
    return params


# ---------------------------------------------------------------------------
# profiles -> buckets and parameters


@dataclass
class LatencyBreakdown:
    sync_execution: float = 0
    c_s_total: float = 0
    c_r_total: float = 0
    async_execution: float = 0
    commit_plus_inputgen: float = 0
    total: float = 0

    BUCKETS = ("sync_execution", "c_s_total", "c_r_total", "async_execution", "commit_plus_inputgen")

    def bucket_sum(self):
        return sum(getattr(self, b) for b in self.BUCKETS)

    def scaled(self, f):
        return LatencyBreakdown(*(getattr(self, b) * f for b in self.BUCKETS), self.total * f)

    @classmethod
    def mean(cls, items):
        items = list(items)
        if not items:
            raise InsufficientSamples("no breakdowns to average")
        return cls(*(float(np.mean([getattr(x, b) for x in items])) for b in (*cls.BUCKETS, "total")))


def _children_index(profile):
    kids = defaultdict(list)
    for sp in profile.subtxns.values():
        if sp.parent is not None:
            kids[sp.parent].append(sp)
    for lst in kids.values():
        lst.sort(key=lambda s: s.t_call)
    return kids


def _in_windows(t, windows):
    return any(a <= t <= b for a, b in windows)


def _walk(sp, kids, acc):
    if not sp.t_end or not sp.t_start:
        raise IncompleteTrace(f"sub-transaction {sp.subtxn} has no start/end stamps")
    lo, hi = sp.t_start, sp.t_end
    windows = [(max(a, lo), min(b, hi)) for a, b in sp.windows if b > a]
    covered = sum(b - a for a, b in windows)
    acc.async_execution += covered
    inner = 0
    for c in kids[sp.subtxn]:
        if _in_windows(c.t_call, windows):
            continue
        if c.mode == REMOTE:
            if not c.t_resume:
                raise IncompleteTrace(f"remote sub-transaction {c.subtxn} never resumed its caller")
            acc.c_s_total += c.t_start - c.t_call
            acc.c_r_total += c.t_resume - c.t_end
            inner += c.t_resume - c.t_call
        else:
            inner += c.t_end - c.t_start
        _walk(c, kids, acc)
    acc.sync_execution += (hi - lo) - covered - inner


def decompose(profile, unit=1e-3) -> LatencyBreakdown:
    """Split one root transaction's latency into the model's buckets.

    Everything outside the root's execution span (input generation, queueing
    for an executor, commit protocol, returning the outcome) lands in
    ``commit_plus_inputgen``.  Durations are in ns scaled by ``unit``
    (default: microseconds).
    """
    root = profile.subtxns.get(0)
    if root is None or not profile.t_client or not profile.t_origin:
        raise IncompleteTrace(f"txn {profile.txn_id} lacks root or client timestamps")
    acc = LatencyBreakdown()
    _walk(root, _children_index(profile), acc)
    acc.total = profile.t_client - profile.t_origin
    acc.commit_plus_inputgen = acc.total - (root.t_end - root.t_start)
    return acc.scaled(unit)


def exclusive_times(profile):
    """Processing time of each sub-transaction excluding its calls and waits (ns)."""
    kids = _children_index(profile)
    out = {}
    for sp in profile.subtxns.values():
        intervals = []
        for c in kids[sp.subtxn]:
            end = c.t_resume if c.mode == REMOTE else c.t_end
            if end:
                intervals.append((c.t_call, end))
        intervals.extend((a, b) for a, b in sp.windows)
        busy = 0
        cur_a = cur_b = None
        for a, b in sorted(intervals):
            a, b = max(a, sp.t_start), min(b, sp.t_end)
            if b <= a:
                continue
            if cur_b is None or a > cur_b:
                if cur_b is not None:
                    busy += cur_b - cur_a
                cur_a, cur_b = a, b
            else:
                cur_b = max(cur_b, b)
        if cur_b is not None:
            busy += cur_b - cur_a
        out[sp.subtxn] = (sp.procedure, sp.t_end - sp.t_start - busy)
    return out


@dataclass
class Calibration:
    params: CostParams
    processing: dict          # procedure -> mean exclusive processing (us)
    commit_plus_inputgen: float
    samples: int
    comm_samples: int = 0

    def to_dict(self):
        return {"send": self.params.send, "recv": self.params.recv, "processing": dict(self.processing),
                "commit_plus_inputgen": self.commit_plus_inputgen, "samples": self.samples,
                "comm_samples": self.comm_samples}

    @classmethod
    def from_dict(cls, d):
        return cls(CostParams(d["send"], d["recv"]), dict(d["processing"]), d["commit_plus_inputgen"],
                   d.get("samples", 0), d.get("comm_samples", 0))

    def proc(self, name, default=None):
        if name in self.processing:
            return self.processing[name]
        if default is not None:
            return default
        raise KeyError(f"no calibrated processing cost for {name!r}")


def calibrate(profiles, unit=1e-3) -> Calibration:
    """Average communication and processing costs over committed profiles.

    Send/receive costs come from synchronous remote calls
    (call -> callee start, callee end -> caller resume).  Without any remote
    call they are zero.
    """
    profiles = [p for p in profiles if p.committed]
    if not profiles:
        raise InsufficientSamples("no committed profiled transactions")
    sends, recvs = [], []
    proc_times = defaultdict(list)
    cis = []
    for p in profiles:
        for sp in p.subtxns.values():
            if sp.mode == REMOTE and sp.sync and sp.t_resume:
                sends.append(sp.t_start - sp.t_call)
                recvs.append(sp.t_resume - sp.t_end)
        for name, t in exclusive_times(p).values():
            proc_times[name].append(t)
        cis.append(decompose(p, unit).commit_plus_inputgen)
    send = float(np.mean(sends)) * unit if sends else 0.0
    recv = float(np.mean(recvs)) * unit if recvs else 0.0
    processing = {name: float(np.mean(v)) * unit for name, v in proc_times.items()}
    return Calibration(CostParams(send, recv), processing, float(np.mean(cis)), len(profiles), len(sends))


# ---------------------------------------------------------------------------
# Smallbank multi-transfer formulations as fork-join trees

FORMULATIONS = ("fully-sync", "partially-async", "fully-async", "opt")


def smallbank_tree(formulation, source, destinations, p_root, p_transfer, p_credit, p_debit):
    """Fork-join shape of one multi-transfer rooted at ``source``."""
    def credit(d):
        return ForkJoinNode(d, p_credit)

    def debit():
        return ForkJoinNode(source, p_debit)

    if formulation == "fully-sync":
        transfers = [ForkJoinNode(source, p_transfer, sync_seq=[credit(d), debit()]) for d in destinations]
        return ForkJoinNode(source, p_root, sync_seq=transfers)
    if formulation == "partially-async":
        transfers = [ForkJoinNode(source, p_transfer, async_children=[credit(d)], sync_ovp=[debit()])
                     for d in destinations]
        return ForkJoinNode(source, p_root, sync_seq=transfers)
    if formulation == "fully-async":
        return ForkJoinNode(source, p_root, async_children=[credit(d) for d in destinations],
                            sync_ovp=[debit() for _ in destinations])
    if formulation == "opt":
        return ForkJoinNode(source, p_root, async_children=[credit(d) for d in destinations],
                            sync_ovp=[debit()])
    raise ValueError(f"unknown formulation {formulation!r}")
