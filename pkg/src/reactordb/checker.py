"""Conflict-serializability checking for reactor-model and classic histories.

A reactor-model history is a sequence of read/write operations tagged with
(txn, sub-transaction, reactor, item) plus commit/abort terminals.  Its
projection renames every item ``x`` on reactor ``k`` to the classic item
``k∘x`` and forgets the sub-transaction structure.

Two serialization-graph constructions are provided.  The classic one works
on individual operations over named items.  The reactor-model one works on
sub-transactions: each sub-transaction stands for its own operations plus
those of its nested calls, two sub-transactions of different transactions
conflict when those operation sets conflict, and every ordered conflicting
pair contributes an edge between the owning transactions.
"""

from __future__ import annotations

import itertools
import random
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import HistoryTooLarge, MalformedHistory

READ = "r"
WRITE = "w"
COMMIT = "c"
ABORT = "a"
REACTOR = "reactor"
CLASSIC = "classic"
SEP = "∘"
BRUTE_FORCE_LIMIT = 6


@dataclass(frozen=True)
class TraceOp:
    kind: str
    txn: int
    subtxn: int | None = None
    reactor: str | None = None
    item: str | None = None
    seq: int = 0

    @property
    def is_data(self):
        return self.kind in (READ, WRITE)


@dataclass
class History:
    ops: list
    model: str = REACTOR
    parents: dict = field(default_factory=dict)  # (txn, subtxn) -> parent subtxn

    def __post_init__(self):
        if self.model not in (REACTOR, CLASSIC):
            raise MalformedHistory(f"unknown model {self.model!r}")
        last = None
        ended = {}
        for op in self.ops:
            if last is not None and op.seq <= last:
                raise MalformedHistory(f"sequence numbers must increase (at {op.seq})")
            last = op.seq
            if op.kind not in (READ, WRITE, COMMIT, ABORT):
                raise MalformedHistory(f"unknown op kind {op.kind!r}")
            if op.txn in ended:
                raise MalformedHistory(f"txn {op.txn} has operations after its {ended[op.txn]}")
            if op.kind in (COMMIT, ABORT):
                ended[op.txn] = op.kind
            elif op.item is None:
                raise MalformedHistory(f"data operation without item at seq {op.seq}")
            elif self.model == REACTOR and (op.reactor is None or op.subtxn is None):
                raise MalformedHistory(f"reactor-model operation without reactor/subtxn at seq {op.seq}")

    def __len__(self):
        return len(self.ops)

    def committed(self):
        return {op.txn for op in self.ops if op.kind == COMMIT}

    def txns(self):
        return {op.txn for op in self.ops}


def parse_trace(text) -> History:
    """Parse the engine's trace format into a reactor-model history.

    Items become ``table/key``; the reactor column stays separate.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    ops = []
    for n, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        try:
            if len(parts) == 3 and parts[2] in (COMMIT, ABORT):
                ops.append(TraceOp(parts[2], int(parts[1]), seq=int(parts[0])))
            elif len(parts) == 7 and parts[6] in (READ, WRITE):
                seq, txn, sub, reactor, table, key, kind = parts
                ops.append(TraceOp(kind, int(txn), int(sub), reactor, f"{table}/{key}", int(seq)))
            else:
                raise ValueError
        except ValueError:
            raise MalformedHistory(f"line {n}: cannot parse {line!r}") from None
    return History(ops, REACTOR)


def project(h: History) -> History:
    """Map r/w on item x of reactor k to r/w on classic item ``k∘x``."""
    if h.model != REACTOR:
        raise MalformedHistory("projection applies to reactor-model histories")
    out = []
    for op in h.ops:
        if op.is_data:
            out.append(TraceOp(op.kind, op.txn, None, None, f"{op.reactor}{SEP}{op.item}", op.seq))
        else:
            out.append(TraceOp(op.kind, op.txn, seq=op.seq))
    return History(out, CLASSIC)


@dataclass
class SerializationGraph:
    nodes: set
    edges: dict  # (from, to) -> witnessing (op, op)

    def successors(self):
        succ = defaultdict(set)
        for a, b in self.edges:
            succ[a].add(b)
        return succ

    def find_cycle(self):
        """A list of nodes forming a cycle, or None."""
        succ = self.successors()
        color = dict.fromkeys(self.nodes, 0)
        for start in sorted(self.nodes):
            if color[start]:
                continue
            stack = [(start, iter(sorted(succ[start])))]
            path = [start]
            color[start] = 1
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    color[node] = 2
                    stack.pop()
                    path.pop()
                elif color[nxt] == 1:
                    return path[path.index(nxt):] + [nxt]
                elif color[nxt] == 0:
                    color[nxt] = 1
                    path.append(nxt)
                    stack.append((nxt, iter(sorted(succ[nxt]))))
        return None

    def is_acyclic(self):
        return self.find_cycle() is None


def _conflicts(a, b):
    return a.txn != b.txn and (a.kind == WRITE or b.kind == WRITE)


def _classic_sg(h, reduced):
    committed = h.committed()
    by_item = defaultdict(list)
    for op in h.ops:
        if op.is_data and op.txn in committed:
            by_item[op.item].append(op)
    edges = {}
    for ops in by_item.values():
        if not reduced:
            for i, q in enumerate(ops):
                for p in ops[:i]:
                    if _conflicts(p, q):
                        edges.setdefault((p.txn, q.txn), (p, q))
            continue
        # last writer plus the readers since it reach every conflict through
        # transitivity, which is all acyclicity needs
        writer = None
        readers = []
        for q in ops:
            if q.kind == READ:
                if writer is not None and writer.txn != q.txn:
                    edges.setdefault((writer.txn, q.txn), (writer, q))
                readers.append(q)
            else:
                if writer is not None and writer.txn != q.txn:
                    edges.setdefault((writer.txn, q.txn), (writer, q))
                for r in readers:
                    if r.txn != q.txn:
                        edges.setdefault((r.txn, q.txn), (r, q))
                writer = q
                readers = []
    return SerializationGraph(set(committed), edges)


def _subtxn_ops(h):
    """Basic operations of each sub-transaction, nested calls included."""
    own = defaultdict(list)
    for op in h.ops:
        if op.is_data:
            own[(op.txn, op.subtxn)].append(op)
    basic = {key: list(ops) for key, ops in own.items()}
    for (txn, sub), ops in own.items():
        seen = {sub}
        parent = h.parents.get((txn, sub))
        while parent is not None and parent not in seen:
            seen.add(parent)
            basic.setdefault((txn, parent), []).extend(ops)
            parent = h.parents.get((txn, parent))
    return basic


def _reactor_sg(h):
    committed = h.committed()
    basic = _subtxn_ops(h)
    # index each sub-transaction's operations by (reactor, item)
    index = {}
    for key, ops in basic.items():
        if key[0] not in committed:
            continue
        per = defaultdict(list)
        for op in ops:
            per[(op.reactor, op.item)].append(op)
        index[key] = per
    by_target = defaultdict(set)
    for key, per in index.items():
        for target in per:
            by_target[target].add(key)
    edges = {}
    for target, subs in by_target.items():
        subs = sorted(subs)
        for s1, s2 in itertools.combinations(subs, 2):
            if s1[0] == s2[0]:
                continue
            for p in index[s1][target]:
                for q in index[s2][target]:
                    if p.kind != WRITE and q.kind != WRITE:
                        continue
                    first, second = (p, q) if p.seq < q.seq else (q, p)
                    edges.setdefault((first.txn, second.txn), (first, second))
    return SerializationGraph(set(committed), edges)


def build_sg(h: History, reduced=None) -> SerializationGraph:
    """Serialization graph over committed transactions in the history's own model.

    ``reduced`` (classic model only) keeps a transitively equivalent subset
    of edges; by default it is used for long histories.
    """
    if h.model == REACTOR:
        if reduced:
            return _classic_sg(_as_named(h), True)
        return _reactor_sg(h)
    if reduced is None:
        reduced = len(h.ops) > 5000
    return _classic_sg(h, reduced)


def _as_named(h):
    """Reactor-model ops with (reactor, item) folded into the item, for the
    reduced construction on long live traces."""
    ops = [TraceOp(op.kind, op.txn, op.subtxn, op.reactor, (op.reactor, op.item), op.seq)
           if op.is_data else op for op in h.ops]
    named = History.__new__(History)
    named.ops, named.model, named.parents = ops, CLASSIC, h.parents
    return named


def is_serializable(h: History, reduced=None) -> bool:
    if reduced is None:
        reduced = len(h.ops) > 5000
    return build_sg(h, reduced).is_acyclic()


def brute_force_serializable(h: History) -> bool:
    """Search for a serial order of the committed transactions that respects
    every ordered conflicting pair of the history."""
    committed = sorted(h.committed())
    if len(committed) > BRUTE_FORCE_LIMIT:
        raise HistoryTooLarge(f"{len(committed)} committed transactions (limit {BRUTE_FORCE_LIMIT})")
    keep = set(committed)
    ops = [op for op in h.ops if op.is_data and op.txn in keep]
    must = set()
    for i, q in enumerate(ops):
        qi = (q.reactor, q.item)
        for p in ops[:i]:
            if (p.reactor, p.item) == qi and p.txn != q.txn and WRITE in (p.kind, q.kind):
                must.add((p.txn, q.txn))
    for perm in itertools.permutations(committed):
        pos = {t: n for n, t in enumerate(perm)}
        if all(pos[a] < pos[b] for a, b in must):
            return True
    return False


# ---------------------------------------------------------------------------
# random reactor-model histories


def random_history(rng: random.Random, max_txns=5, max_reactors=3, max_items=4,
                   commit_p=0.85, max_depth=2, max_children=2) -> History:
    n_txn = rng.randint(1, max_txns)
    n_reactors = rng.randint(1, max_reactors)
    items = {k: [f"x{i}" for i in range(rng.randint(1, max_items))] for k in range(n_reactors)}
    parents = {}
    seqs = []
    for t in range(1, n_txn + 1):
        used = set()  # (reactor, item, kind): one read and one write per item
        counter = itertools.count()
        ops = []

        def emit_subtxn(reactor, parent, depth):
            j = next(counter)
            parents[(t, j)] = parent
            mine = []
            for _ in range(rng.randint(0, 3)):
                x = rng.choice(items[reactor])
                kind = rng.choice((READ, WRITE))
                if (reactor, x, kind) in used:
                    continue
                used.add((reactor, x, kind))
                mine.append((kind, t, j, str(reactor), x))
            split = rng.randint(0, len(mine))
            ops.extend(mine[:split])
            if depth < max_depth:
                for _ in range(rng.randint(0, max_children)):
                    emit_subtxn(rng.randrange(n_reactors), j, depth + 1)
            ops.extend(mine[split:])

        emit_subtxn(rng.randrange(n_reactors), None, 0)
        ops.append((COMMIT if rng.random() < commit_p else ABORT, t, None, None, None))
        seqs.append(ops)
    # random interleaving preserving each transaction's order
    merged = []
    cursors = [0] * len(seqs)
    live = [i for i, s in enumerate(seqs) if s]
    while live:
        i = rng.choice(live)
        merged.append(seqs[i][cursors[i]])
        cursors[i] += 1
        if cursors[i] == len(seqs[i]):
            live.remove(i)
    ops = [TraceOp(kind, txn, sub, reactor, item, seq)
           for seq, (kind, txn, sub, reactor, item) in enumerate(merged, 1)]
    return History(ops, REACTOR, parents)


@dataclass
class SuiteReport:
    seed: int
    cases: int
    violations: list = field(default_factory=list)      # reactor vs projected verdict disagreements
    oracle_checked: int = 0
    oracle_disagreements: list = field(default_factory=list)
    serializable_cases: int = 0

    @property
    def ok(self):
        return not self.violations and not self.oracle_disagreements


def theorem1_suite(seed=0, n_cases=1000, **gen) -> SuiteReport:
    """Reactor-model serializability must coincide with classic
    serializability of the projection on every generated history."""
    rng = random.Random(seed)
    report = SuiteReport(seed, n_cases)
    for case in range(n_cases):
        h = random_history(rng, **gen)
        p = project(h)
        lhs = build_sg(h).is_acyclic()
        rhs = build_sg(p, reduced=False).is_acyclic()
        if lhs:
            report.serializable_cases += 1
        if lhs != rhs:
            report.violations.append((case, lhs, rhs))
        if len(h.committed()) <= BRUTE_FORCE_LIMIT:
            report.oracle_checked += 1
            bf = brute_force_serializable(p)
            if bf != rhs or brute_force_serializable(h) != lhs:
                report.oracle_disagreements.append(case)
    return report


def check_trace(text):
    """Both verdicts for a live engine trace: (reactor model, classic projection)."""
    h = parse_trace(text)
    return is_serializable(h), is_serializable(project(h))
