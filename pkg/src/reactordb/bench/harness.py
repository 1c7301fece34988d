"""Closed-loop load generation and epoch-based measurement.

Each client worker is a thread outside the database's executors.  It builds a
transaction input, submits it, waits for the outcome and starts over.
Latency is measured from the start of input generation to the moment the
outcome is observed.  Aborted transactions are counted and not retried.
"""

from __future__ import annotations

import csv
import gc
import math
import random
import statistics
import threading
from dataclasses import dataclass, field

import numpy as np

from ..costmodel import LatencyBreakdown, decompose
from ..runtime import instantiate_database
from ..tracing import now_ns


@dataclass
class WorkloadSpec:
    benchmark: str = "smallbank"
    scale_factor: int = 1
    n_workers: int = 1
    mix: dict | None = None
    formulation: str | None = None
    txn_size: int = 1
    remote_pct: float | None = None
    dest_strategy: str = "all-remote"
    span: int | None = None
    zipfian: float = 0.99
    delay_us: tuple = (0, 0)
    simrisk_load: int = 0
    exchange_strategy: str = "procedure-parallelism"
    seed: int = 0
    epochs: int = 50
    epoch_ms: float = 100.0
    warmup_ms: float = 0.0
    txns_per_worker: int | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.txn_size < 1:
            raise ValueError("txn_size must be >= 1")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        if self.mix is not None and abs(sum(self.mix.values()) - 100) > 1e-9:
            raise ValueError(f"mix must sum to 100, got {sum(self.mix.values())}")


@dataclass
class EpochStats:
    epoch: int
    committed: int
    aborted: int
    mean_latency_us: float
    stddev_us: float
    buckets: dict | None = None

    @property
    def throughput(self):
        return self.committed


@dataclass
class RunResult:
    spec: WorkloadSpec
    plan: object
    epochs: list
    records: list            # (t_done_ns, latency_ns, committed, reason, procedure, txn_id)
    profiles: list
    checks: dict
    duration_s: float
    db: object = field(repr=False, default=None)
    abort_reasons: dict = field(default_factory=dict)

    @property
    def committed(self):
        return sum(e.committed for e in self.epochs)

    @property
    def aborted(self):
        return sum(e.aborted for e in self.epochs)

    @property
    def abort_rate(self):
        n = self.committed + self.aborted
        return self.aborted / n if n else 0.0

    def epoch_means(self):
        return [e.mean_latency_us for e in self.epochs if not math.isnan(e.mean_latency_us)]

    @property
    def mean_latency_us(self):
        m = self.epoch_means()
        return float(np.mean(m)) if m else float("nan")

    @property
    def latency_err_us(self):
        m = self.epoch_means()
        return float(np.std(m)) if len(m) > 1 else 0.0

    @property
    def throughput_tps(self):
        if self.spec.txns_per_worker is not None:
            return self.committed / self.duration_s if self.duration_s else 0.0
        secs = len(self.epochs) * self.spec.epoch_ms / 1000.0
        return self.committed / secs if secs else 0.0

    def breakdowns(self):
        out = []
        for p in self.profiles:
            if p.committed and p.t_client:
                out.append(decompose(p))
        return out

    def mean_breakdown(self):
        return LatencyBreakdown.mean(self.breakdowns())

    def write_csv(self, path):
        write_epochs_csv(self.epochs, path)

    def summary(self):
        return {"benchmark": self.spec.benchmark, "committed": self.committed, "aborted": self.aborted,
                "abort_rate": self.abort_rate, "mean_latency_us": self.mean_latency_us,
                "latency_err_us": self.latency_err_us, "throughput_tps": self.throughput_tps}


CSV_COLUMNS = ["epoch", "committed", "aborted", "mean_latency_us", "stddev_us"]


def write_epochs_csv(epochs, path):
    bucket_cols = []
    for e in epochs:
        if e.buckets:
            bucket_cols = list(e.buckets)
            break
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS + bucket_cols)
        for e in epochs:
            row = [e.epoch, e.committed, e.aborted, f"{e.mean_latency_us:.3f}", f"{e.stddev_us:.3f}"]
            row += [f"{(e.buckets or {}).get(c, float('nan')):.3f}" for c in bucket_cols]
            w.writerow(row)


def _epoch_stats(records, t0, epoch_ns, n_epochs, bucket_by_txn=None):
    bins = [[] for _ in range(n_epochs)]
    for rec in records:
        idx = (rec[0] - t0) // epoch_ns
        if 0 <= idx < n_epochs:
            bins[idx].append(rec)
    out = []
    for i, recs in enumerate(bins):
        lat = [r[1] / 1000.0 for r in recs if r[2]]
        aborted = sum(1 for r in recs if not r[2])
        mean = statistics.fmean(lat) if lat else float("nan")
        sd = statistics.pstdev(lat) if len(lat) > 1 else 0.0
        buckets = None
        if bucket_by_txn:
            bds = [bucket_by_txn[r[5]] for r in recs if r[2] and r[5] in bucket_by_txn]
            if bds:
                m = LatencyBreakdown.mean(bds)
                buckets = {b: getattr(m, b) for b in LatencyBreakdown.BUCKETS}
        out.append(EpochStats(i, len(lat), aborted, mean, sd, buckets))
    return out


def make_workload(spec):
    from . import WORKLOADS
    try:
        cls = WORKLOADS[spec.benchmark]
    except KeyError:
        raise ValueError(f"unknown benchmark {spec.benchmark!r}; choose from {sorted(WORKLOADS)}") from None
    return cls(spec)


def run(spec: WorkloadSpec, plan=None, *, strategy=None, n_executors=None, trace=None,
        profile=False, check=True, record_admissions=False, timeout=120.0) -> RunResult:
    """Load the workload, drive it with closed-loop workers, measure epochs."""
    workload = make_workload(spec)
    if plan is None:
        plan = workload.default_plan(strategy, n_executors)
    db = instantiate_database(workload.declarations(), workload.types(), plan, trace=trace,
                              profile=profile, cc_enabled=workload.cc_enabled,
                              record_admissions=record_admissions)
    workload.load(db)
    workload.bind(db)
    # the loaded population is long-lived; keep the cyclic collector from
    # rescanning it in the middle of measured transactions
    gc.collect()
    gc.freeze()
    db.start()
    records = []
    lock = threading.Lock()
    stop = threading.Event()
    epoch_ns = int(spec.epoch_ms * 1_000_000)
    warm_ns = int(spec.warmup_ms * 1_000_000)
    counted = spec.txns_per_worker is not None
    errors = []

    def worker(wid):
        rng = random.Random(spec.seed * 1_000_003 + wid)
        gen = workload.generator(wid, rng)
        local = []
        n = 0
        try:
            while not stop.is_set():
                if counted and n >= spec.txns_per_worker:
                    break
                t_origin = now_ns()
                reactor, proc, args = gen()
                fut = db.submit(reactor, proc, *args, t_origin=t_origin)
                out = fut.wait(timeout)
                t_done = now_ns()
                local.append((t_done, t_done - t_origin, out.committed, out.reason, proc, out.txn_id))
                n += 1
        except Exception as exc:  # noqa: BLE001 - surfaced after the run
            errors.append(exc)
        with lock:
            records.extend(local)

    threads = [threading.Thread(target=worker, args=(w,), name=f"client-{w}", daemon=True)
               for w in range(spec.n_workers)]
    t_start = now_ns()
    for t in threads:
        t.start()
    if not counted:
        stop.wait((warm_ns + epoch_ns * spec.epochs) / 1e9)
        stop.set()
    for t in threads:
        t.join(timeout + 5)
    t_end = now_ns()
    db.shutdown()
    gc.unfreeze()
    if errors:
        raise errors[0]
    records.sort()
    t0 = t_start + warm_ns
    if counted:
        # fixed-count runs: spread the records over the requested number of epochs
        span = max(1, (t_end - t0))
        epoch_ns = max(1, -(-span // spec.epochs))
    bucket_by_txn = None
    profiles = list(db.profiles)
    if profile:
        bucket_by_txn = {}
        for p in profiles:
            if p.committed and p.t_client:
                bucket_by_txn[p.txn_id] = decompose(p)
    epochs = _epoch_stats(records, t0, epoch_ns, spec.epochs, bucket_by_txn)
    reasons = {}
    for r in records:
        if not r[2]:
            reasons[r[3]] = reasons.get(r[3], 0) + 1
    checks = workload.check(db) if check else {}
    return RunResult(spec, plan, epochs, records, profiles, checks, (t_end - t_start) / 1e9, db, reasons)
