"""YCSB with a ten-key ``multi_update``, one reactor per key.

Keys are drawn from a Zipf distribution (with replacement) and grouped, so a
key drawn twice is updated twice by one sub-transaction.  The root runs on a
randomly chosen reactor among the drawn keys.  Keys on other containers are
dispatched first, keys in the root's own container after them, and the root's
own key is updated inline, which keeps the transaction fork-join.
"""

from __future__ import annotations

from ..runtime import ReactorType
from ..storage import TableSchema
from .base import Workload
from .common import Zipf

KEYS_PER_SF = 10_000
RECORD_SIZE = 100
KEYS_PER_TXN = 10


def _bump(value, salt):
    head = (value[0] + 1 + salt) % 256
    return bytes([head]) + value[1:]


def update(tx, count, salt=0):
    v = tx.read("usertable", 0)
    for i in range(count):
        v = _bump(v, salt + i)
        tx.write("usertable", 0, v)
    return v[0]


def multi_update(tx, groups, salt=0):
    """``groups``: [(reactor, count)], remote containers first."""
    pending = []
    own = 0
    for reactor, count in groups:
        if reactor == tx.reactor:
            own += count
        else:
            pending.append(tx.call(reactor, "update", count, salt))
    heads = []
    if own:
        heads.append(update(tx, own, salt))
    heads.extend(f.get() for f in pending)
    return sum(heads)


KEY_TYPE = ReactorType("Key", {"update": update, "multi_update": multi_update},
                       (TableSchema("usertable", 1, ("field",)),))


def initial_value(i):
    raw = f"{i:010d}".encode()
    return (raw * (RECORD_SIZE // len(raw) + 1))[:RECORD_SIZE]


class YcsbWorkload(Workload):
    name = "ycsb"

    def __init__(self, spec):
        super().__init__(spec)
        opts = spec.options
        self.n_keys = opts.get("keys", KEYS_PER_SF * max(1, spec.scale_factor))
        self.keys_per_txn = opts.get("keys_per_txn", KEYS_PER_TXN)
        self._names = [f"key{i}" for i in range(self.n_keys)]
        self.zipf = Zipf(self.n_keys, spec.zipfian)

    def default_executors(self):
        return max(1, self.spec.scale_factor)

    def reactor_names(self):
        return self._names

    def declarations(self):
        return [(n, "Key") for n in self._names]

    def types(self):
        return [KEY_TYPE]

    def load(self, db):
        for i, name in enumerate(self._names):
            db.load(name, "usertable", 0, initial_value(i))

    def draw_keys(self, rng):
        """Ten Zipf draws with replacement; returns (root, [(reactor, count)])."""
        counts = {}
        for _ in range(self.keys_per_txn):
            k = self._names[self.zipf.draw(rng)]
            counts[k] = counts.get(k, 0) + 1
        distinct = sorted(counts, key=lambda n: int(n[3:]))
        root = distinct[rng.randrange(len(distinct))]
        home = self.container_of[root]
        # remote containers first, then local keys, the root's own key last
        order = sorted(distinct, key=lambda n: (self.container_of[n] == home, n == root, int(n[3:])))
        return root, [(n, counts[n]) for n in order]

    def generator(self, wid, rng):
        def gen():
            root, groups = self.draw_keys(rng)
            return root, "multi_update", (groups, rng.randrange(256))
        return gen
