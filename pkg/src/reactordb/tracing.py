"""Operation traces and per-transaction timing profiles.

Trace lines are space separated, one event per line::

    <seq> <txn> <subtxn> <reactor> <table> <key> r|w
    <seq> <txn> c|a

Reads are logged once the value has been observed; writes are logged by the
commit path while the record is still latched, so the order of lines on one
item is the order in which the engine actually exposed the versions.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass, field


def now_ns():
    return time.perf_counter_ns()


def encode_key(key):
    if isinstance(key, tuple):
        text = ":".join(str(part) for part in key)
    else:
        text = str(key)
    return text.replace(" ", "_") or "_"


class Tracer:
    """Single appender for all workers: one lock, one global sequence."""

    def __init__(self, path=None):
        self.path = path
        self._lock = threading.Lock()
        self._seq = 0
        self.lines = []
        self._fh = open(path, "w") if path else None

    def _emit(self, text):
        self._seq += 1
        line = f"{self._seq} {text}"
        if self._fh is not None:
            self._fh.write(line + "\n")
        else:
            self.lines.append(line)

    def op(self, ctx, subtxn, reactor, table, key, kind):
        with self._lock:
            if ctx.terminated:
                return
            self._emit(f"{ctx.txn_id} {subtxn} {reactor} {table} {encode_key(key)} {kind}")

    def terminal(self, ctx, committed):
        with self._lock:
            if ctx.terminated:
                return
            ctx.terminated = True
            self._emit(f"{ctx.txn_id} {'c' if committed else 'a'}")

    def close(self):
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def text(self):
        if self.path:
            with open(self.path) as fh:
                return fh.read()
        return "\n".join(self.lines) + ("\n" if self.lines else "")


@dataclass
class SubProfile:
    subtxn: int
    parent: int | None
    reactor: str
    procedure: str
    mode: str
    t_call: int = 0
    t_start: int = 0
    t_end: int = 0
    t_resume: int = 0
    sync: bool = False
    windows: list = field(default_factory=list)  # closed async windows [t_open, t_close]


@dataclass
class TxnProfile:
    txn_id: int
    procedure: str
    reactor: str
    t_origin: int = 0      # input generation started (client side)
    t_submit: int = 0
    t_start: int = 0
    t_body_end: int = 0
    t_commit_end: int = 0
    t_client: int = 0      # client observed the outcome
    committed: bool = False
    subtxns: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["subtxns"] = [asdict(s) for s in self.subtxns.values()]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        subs = d.pop("subtxns", [])
        prof = cls(**d)
        for s in subs:
            sp = SubProfile(**s)
            prof.subtxns[sp.subtxn] = sp
        return prof


def dump_profiles(profiles, path):
    with open(path, "w") as fh:
        for p in profiles:
            fh.write(json.dumps(p.to_dict()) + "\n")


def load_profiles(path):
    with open(path) as fh:
        return [TxnProfile.from_dict(json.loads(line)) for line in fh if line.strip()]
