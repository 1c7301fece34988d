"""Deployment plans: which container owns each reactor, how containers are
split into executors, and how root transactions are routed.

Plan documents are JSON::

    {
      "strategy_label": "s3",
      "router": "round_robin" | "affinity",
      "containers": [{"id": 0, "executors": [{"id": 0, "mpl": 1, "core": 0}]}],
      "reactor_map": [
        {"reactor": "exchange", "container": 0, "executor": 0},
        {"range": {"prefix": "cust", "start": 0, "stop": 1000}, "container": 0,
         "executor": "modulo"}
      ]
    }

``core`` and ``executor`` are optional.  A range covers the names
``prefix + str(i)`` for ``start <= i < stop``.  ``"executor": "modulo"`` on a
range sends reactor ``i`` to executor number ``i % n`` of its container.
Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

from .errors import PlanError

ROUTERS = ("round_robin", "affinity")
MODULO = "modulo"


@dataclass(frozen=True)
class ExecutorSpec:
    id: int
    mpl: int = 1
    core: int | None = None


@dataclass(frozen=True)
class ContainerSpec:
    id: int
    executors: tuple


@dataclass(frozen=True)
class MapEntry:
    container: int
    reactor: str | None = None
    prefix: str | None = None
    start: int = 0
    stop: int = 0
    executor: object = None  # int, "modulo" or None

    @property
    def is_range(self):
        return self.reactor is None


@dataclass(frozen=True)
class DeploymentPlan:
    containers: tuple
    reactor_map: tuple
    router: str = "round_robin"
    strategy_label: str = ""

    def __post_init__(self):
        names = {}
        ranges = {}
        for entry in self.reactor_map:
            if entry.is_range:
                ranges.setdefault(entry.prefix, []).append(entry)
            else:
                names[entry.reactor] = entry
        object.__setattr__(self, "_names", names)
        object.__setattr__(self, "_ranges", ranges)
        object.__setattr__(self, "_containers", {c.id: c for c in self.containers})

    def container(self, cid):
        return self._containers[cid]

    def _entry(self, name):
        entry = self._names.get(name)
        if entry is not None:
            return entry, None
        m = _canonical(name)
        if m:
            prefix, idx = m.group(1), int(m.group(2))
            for entry in self._ranges.get(prefix, ()):
                if entry.start <= idx < entry.stop:
                    return entry, idx
        return None, None

    def resolve(self, name):
        """(container id, executor id or None) for a reactor name, or None."""
        entry, idx = self._entry(name)
        if entry is None:
            return None
        ex = entry.executor
        if ex == MODULO:
            execs = self._containers[entry.container].executors
            ex = execs[idx % len(execs)].id
        return entry.container, ex

    def to_dict(self):
        out = []
        for e in self.reactor_map:
            d = {"reactor": e.reactor} if not e.is_range else {
                "range": {"prefix": e.prefix, "start": e.start, "stop": e.stop}}
            d["container"] = e.container
            if e.executor is not None:
                d["executor"] = e.executor
            out.append(d)
        containers = []
        for c in self.containers:
            execs = []
            for x in c.executors:
                xd = {"id": x.id, "mpl": x.mpl}
                if x.core is not None:
                    xd["core"] = x.core
                execs.append(xd)
            containers.append({"id": c.id, "executors": execs})
        return {"strategy_label": self.strategy_label, "router": self.router,
                "containers": containers, "reactor_map": out}

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)


_NAME_RE = re.compile(r"^(.*?)(\d+)$")


def _canonical(name):
    """Match ``prefix<int>`` only when the number is written without leading
    zeros, i.e. when the name is one a range can cover."""
    m = _NAME_RE.match(name)
    if m and str(int(m.group(2))) == m.group(2):
        return m
    return None


def serialize_plan(plan: DeploymentPlan) -> str:
    return plan.to_json()


def _keys(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise PlanError("schema-error", f"{where} must be an object")
    extra = set(obj) - set(allowed)
    if extra:
        raise PlanError("schema-error", f"unknown keys in {where}: {sorted(extra)}")
    for k in required:
        if k not in obj:
            raise PlanError("schema-error", f"{where} is missing {k!r}")


def _int(v, where, minimum=None):
    if not isinstance(v, int) or isinstance(v, bool):
        raise PlanError("schema-error", f"{where} must be an integer")
    if minimum is not None and v < minimum:
        raise PlanError("schema-error", f"{where} must be >= {minimum}")
    return v


def parse_plan(document) -> DeploymentPlan:
    """Validate a plan given as a dict, a JSON string or a path to a JSON file."""
    if isinstance(document, str):
        text = document
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PlanError("schema-error", f"invalid JSON: {exc}") from None
    _keys(document, ("strategy_label", "router", "containers", "reactor_map"), "plan",
          required=("containers", "reactor_map"))
    router = document.get("router", "round_robin")
    if router not in ROUTERS:
        raise PlanError("schema-error", f"router must be one of {ROUTERS}")
    label = document.get("strategy_label", "")
    if not isinstance(label, str):
        raise PlanError("schema-error", "strategy_label must be a string")

    raw_containers = document["containers"]
    if not isinstance(raw_containers, list) or not raw_containers:
        raise PlanError("schema-error", "containers must be a non-empty list")
    containers = []
    seen_c = set()
    for i, c in enumerate(raw_containers):
        _keys(c, ("id", "executors"), f"containers[{i}]", required=("id", "executors"))
        cid = _int(c["id"], f"containers[{i}].id", 0)
        if cid in seen_c:
            raise PlanError("schema-error", f"container id {cid} declared twice")
        seen_c.add(cid)
        if not isinstance(c["executors"], list) or not c["executors"]:
            raise PlanError("schema-error", f"container {cid} needs at least one executor")
        execs = []
        seen_x = set()
        for x in c["executors"]:
            _keys(x, ("id", "mpl", "core"), f"container {cid} executor", required=("id",))
            xid = _int(x["id"], "executor id", 0)
            if xid in seen_x:
                raise PlanError("schema-error", f"executor {xid} declared twice in container {cid}")
            seen_x.add(xid)
            core = x.get("core")
            if core is not None:
                core = _int(core, "core", 0)
            execs.append(ExecutorSpec(xid, _int(x.get("mpl", 1), "mpl", 1), core))
        containers.append(ContainerSpec(cid, tuple(execs)))
    by_id = {c.id: c for c in containers}

    raw_map = document["reactor_map"]
    if not isinstance(raw_map, list):
        raise PlanError("schema-error", "reactor_map must be a list")
    entries = []
    explicit = {}
    ranges = {}
    for i, e in enumerate(raw_map):
        where = f"reactor_map[{i}]"
        _keys(e, ("reactor", "range", "container", "executor"), where, required=("container",))
        if ("reactor" in e) == ("range" in e):
            raise PlanError("schema-error", f"{where} needs exactly one of 'reactor' or 'range'")
        cid = _int(e["container"], f"{where}.container", 0)
        if cid not in by_id:
            raise PlanError("schema-error", f"{where} refers to unknown container {cid}")
        ex = e.get("executor")
        if ex is not None and ex != MODULO:
            ex = _int(ex, f"{where}.executor", 0)
            if ex not in {x.id for x in by_id[cid].executors}:
                raise PlanError("dangling-executor", f"{where}: executor {ex} not in container {cid}")
        if "reactor" in e:
            name = e["reactor"]
            if not isinstance(name, str) or not name or " " in name:
                raise PlanError("schema-error", f"{where}.reactor must be a name without spaces")
            if ex == MODULO:
                raise PlanError("schema-error", f"{where}: 'modulo' only applies to ranges")
            if name in explicit:
                raise PlanError("double-mapping", f"reactor {name!r} mapped twice")
            entry = MapEntry(cid, reactor=name, executor=ex)
            explicit[name] = entry
        else:
            r = e["range"]
            _keys(r, ("prefix", "start", "stop"), f"{where}.range", required=("prefix", "start", "stop"))
            prefix = r["prefix"]
            if not isinstance(prefix, str) or " " in prefix or (prefix and prefix[-1].isdigit()):
                raise PlanError("schema-error", f"{where}.range.prefix must not contain spaces or end in a digit")
            start = _int(r["start"], f"{where}.range.start", 0)
            stop = _int(r["stop"], f"{where}.range.stop", start)
            for other in ranges.get(prefix, ()):
                if start < other.stop and other.start < stop:
                    raise PlanError("double-mapping", f"ranges {prefix}[{start},{stop}) and "
                                                      f"{prefix}[{other.start},{other.stop}) overlap")
            entry = MapEntry(cid, prefix=prefix, start=start, stop=stop, executor=ex)
            ranges.setdefault(prefix, []).append(entry)
        entries.append(entry)
    for name in explicit:
        m = _canonical(name)
        if m:
            idx = int(m.group(2))
            for other in ranges.get(m.group(1), ()):
                if other.start <= idx < other.stop:
                    raise PlanError("double-mapping", f"reactor {name!r} is also covered by a range")
    if router == "affinity":
        for entry in entries:
            if entry.executor is None and len(by_id[entry.container].executors) > 1:
                what = entry.reactor or f"range {entry.prefix}[{entry.start},{entry.stop})"
                raise PlanError("schema-error", f"affinity router needs an executor for {what}")
    return DeploymentPlan(tuple(containers), tuple(entries), router, label)


def _runs(names):
    """Group names into (prefix, start, stop) runs of consecutive suffixes;
    names without a numeric suffix become singleton (name, None, None)."""
    out = []
    for name in names:
        m = _NAME_RE.match(name)
        if m and not (m.group(2).startswith("0") and len(m.group(2)) > 1):
            prefix, idx = m.group(1), int(m.group(2))
            if out and out[-1][0] == prefix and out[-1][2] == idx:
                out[-1][2] = idx + 1
                continue
            out.append([prefix, idx, idx + 1])
        else:
            out.append([name, None, None])
    return out


def _map_entries(names, container, executor):
    entries = []
    for prefix, start, stop in _runs(names):
        if start is None:
            ex = None if executor == MODULO else executor
            entries.append(MapEntry(container, reactor=prefix, executor=ex))
        elif stop - start == 1 and executor != MODULO:
            entries.append(MapEntry(container, reactor=f"{prefix}{start}", executor=executor))
        else:
            entries.append(MapEntry(container, prefix=prefix, start=start, stop=stop, executor=executor))
    return entries


def build_strategy(strategy, n_executors, reactor_names, mpl=1, pin_cores=False):
    """Canonical plans.

    s1: one container, n executors, round-robin routing.
    s2: one container, n executors, affinity routing (reactor i -> executor i mod n).
    s3: n containers with one executor each, reactors range-partitioned in order.
    """
    strategy = strategy.lower()
    if n_executors < 1:
        raise ValueError("n_executors must be >= 1")
    names = list(reactor_names)

    def ex(i):
        return ExecutorSpec(i, mpl, i if pin_cores else None)

    if strategy in ("s1", "s2"):
        container = ContainerSpec(0, tuple(ex(i) for i in range(n_executors)))
        if strategy == "s1":
            entries = _map_entries(names, 0, None)
            router = "round_robin"
        else:
            entries = []
            for prefix, start, stop in _runs(names):
                if start is None:
                    # no numeric suffix: place by declaration position
                    pos = names.index(prefix)
                    entries.append(MapEntry(0, reactor=prefix, executor=pos % n_executors))
                elif stop - start == 1:
                    entries.append(MapEntry(0, reactor=f"{prefix}{start}", executor=start % n_executors))
                else:
                    entries.append(MapEntry(0, prefix=prefix, start=start, stop=stop, executor=MODULO))
            router = "affinity"
        return DeploymentPlan((container,), tuple(entries), router, strategy)
    if strategy == "s3":
        containers = tuple(ContainerSpec(i, (ExecutorSpec(0, mpl, i if pin_cores else None),))
                           for i in range(n_executors))
        chunk = max(1, math.ceil(len(names) / n_executors))
        entries = []
        for i in range(n_executors):
            entries.extend(_map_entries(names[i * chunk:(i + 1) * chunk], i, None))
        return DeploymentPlan(containers, tuple(entries), "round_robin", "s3")
    raise ValueError(f"unknown strategy {strategy!r}")
