"""Smallbank with multi-transfer, one reactor per customer.

Each customer reactor owns three tables: ``account`` (customer name -> id),
``savings`` and ``checking`` (id -> balance).  Every procedure first maps the
name to the id, like the original benchmark does.  A fourth one-row table,
``flow``, accumulates money that entered or left the bank through deposits
and checks, which turns balance conservation into an exact audit.

Multi-transfer comes in four shapes:

fully-sync       transfer sub-transactions, each awaiting its credit and debit
partially-async  transfer sub-transactions with the credit left running while
                 the debit executes
fully-async      all credits in flight at once, one awaited debit per credit
opt              all credits in flight at once, one debit for the total

fully-sync and partially-async share the ``multi_transfer_sync`` procedure;
which one runs is decided by the ``seq_transfer`` switch when the reactor type
is built (default from the ``ENV_SEQ_TRANSFER`` environment variable).
"""

from __future__ import annotations

import os

from ..runtime import ReactorType
from ..storage import TableSchema
from .base import Workload

INITIAL_BALANCE = 10_000
TRANSFER_AMOUNT = 1

STANDARD_MIX = {"amalgamate": 15, "balance": 15, "deposit_checking": 15, "send_payment": 25,
                "transact_savings": 15, "write_check": 15}
DEST_STRATEGIES = ("all-remote", "local", "round-robin-remote", "round-robin-all", "random")
PROC_OF = {"fully-sync": "multi_transfer_sync", "partially-async": "multi_transfer_sync",
           "fully-async": "multi_transfer_fully_async", "opt": "multi_transfer_opt"}


def _cust_id(tx):
    cid = tx.read("account", tx.reactor)
    if cid is None:
        tx.abort(f"no account for {tx.reactor}")
    return cid


def _add(tx, table, cid, amount):
    bal = tx.read(table, cid)
    if bal + amount < 0:
        tx.abort("insufficient funds")
    tx.write(table, cid, bal + amount)
    return bal + amount


def _flow(tx, amount):
    tx.write("flow", 0, tx.read("flow", 0) + amount)


def transact_saving(tx, amount, external=False):
    cid = _cust_id(tx)
    if external:
        _flow(tx, amount)
    return _add(tx, "savings", cid, amount)


def deposit_checking(tx, amount, external=False):
    cid = _cust_id(tx)
    if external:
        _flow(tx, amount)
    return _add(tx, "checking", cid, amount)


def balance(tx):
    cid = _cust_id(tx)
    return tx.read("savings", cid) + tx.read("checking", cid)


def write_check(tx, amount):
    cid = _cust_id(tx)
    total = tx.read("savings", cid) + tx.read("checking", cid)
    charge = amount + (1 if total < amount else 0)
    bal = tx.read("checking", cid)
    tx.write("checking", cid, bal - charge)
    _flow(tx, -charge)
    return bal - charge


def amalgamate(tx, dst):
    cid = _cust_id(tx)
    total = tx.read("savings", cid) + tx.read("checking", cid)
    tx.write("savings", cid, 0)
    tx.write("checking", cid, 0)
    tx.call(dst, "deposit_checking", total).get()
    return total


def send_payment(tx, dst, amount):
    _add(tx, "checking", _cust_id(tx), -amount)
    tx.call(dst, "deposit_checking", amount).get()


def make_transfer(seq_transfer):
    if seq_transfer:
        def transfer(tx, dst, amount):
            tx.call(dst, "transact_saving", amount).get()
            tx.call(tx.reactor, "transact_saving", -amount).get()
    else:
        def transfer(tx, dst, amount):
            credit = tx.call(dst, "transact_saving", amount)
            tx.call(tx.reactor, "transact_saving", -amount).get()
            credit.get()
    return transfer


def multi_transfer_sync(tx, dsts, amount):
    for d in dsts:
        tx.call(tx.reactor, "transfer", d, amount).get()


def multi_transfer_fully_async(tx, dsts, amount):
    credits = [tx.call(d, "transact_saving", amount) for d in dsts]
    for _ in dsts:
        tx.call(tx.reactor, "transact_saving", -amount).get()
    for f in credits:
        f.get()


def multi_transfer_opt(tx, dsts, amount):
    credits = [tx.call(d, "transact_saving", amount) for d in dsts]
    tx.call(tx.reactor, "transact_saving", -amount * len(dsts)).get()
    for f in credits:
        f.get()


TABLES = (TableSchema("account", 1, ("cust_id",)), TableSchema("savings", 1, ("balance",)),
          TableSchema("checking", 1, ("balance",)), TableSchema("flow", 1, ("net_external",)))


def make_customer_type(seq_transfer=None):
    if seq_transfer is None:
        seq_transfer = os.environ.get("ENV_SEQ_TRANSFER", "1") not in ("0", "false", "no")
    procs = {
        "transact_saving": transact_saving, "deposit_checking": deposit_checking, "balance": balance,
        "write_check": write_check, "amalgamate": amalgamate, "send_payment": send_payment,
        "transfer": make_transfer(seq_transfer), "multi_transfer_sync": multi_transfer_sync,
        "multi_transfer_fully_async": multi_transfer_fully_async, "multi_transfer_opt": multi_transfer_opt,
    }
    return ReactorType("Customer", procs, TABLES)


def pick_destinations(strategy, size, source, by_container, containers, rng, span=None):
    """Destination customers for a multi-transfer from ``source``.

    all-remote          credits round-robin over the containers other than the
                        source's (falls back to local with one container)
    local               all in the source's container
    round-robin-remote  size-span+1 local, span-1 round-robin over the next containers
    round-robin-all     destination i in the (i mod span)-th container from the source's
    random              uniform over all customers
    """
    src_c = containers.index(next(c for c in containers if source in by_container[c]))
    order = containers[src_c:] + containers[:src_c]
    span = len(order) if span is None else max(1, min(span, len(order)))
    if strategy == "all-remote":
        others = order[1:] or order[:1]
        targets = [others[i % len(others)] for i in range(size)]
    elif strategy == "local":
        targets = [order[0]] * size
    elif strategy == "round-robin-remote":
        n_remote = min(span - 1, size)
        remote = order[1:span]
        targets = [order[0]] * (size - n_remote) + [remote[i % len(remote)] for i in range(n_remote)]
    elif strategy == "round-robin-all":
        targets = [order[i % span] for i in range(size)]
    elif strategy == "random":
        targets = [None] * size
    else:
        raise ValueError(f"unknown destination strategy {strategy!r}")
    used = {source}
    out = []
    everyone = None
    for c in targets:
        pool = by_container[c] if c is not None else None
        if pool is None:
            if everyone is None:
                everyone = [n for cc in containers for n in by_container[cc]]
            pool = everyone
        if len(pool) <= len(used & set(pool)):
            raise ValueError(f"not enough customers in container {c} for {size} destinations")
        while True:
            d = pool[rng.randrange(len(pool))]
            if d not in used:
                break
        used.add(d)
        out.append(d)
    return out


class SmallbankWorkload(Workload):
    name = "smallbank"

    def __init__(self, spec):
        super().__init__(spec)
        opts = spec.options
        self.per_container = opts.get("customers_per_container", 1000)
        self.n_customers = opts.get("customers", self.per_container * max(1, spec.scale_factor))
        self.formulation = spec.formulation
        if self.formulation is not None and self.formulation not in PROC_OF:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if spec.dest_strategy not in DEST_STRATEGIES:
            raise ValueError(f"unknown destination strategy {spec.dest_strategy!r}")
        if spec.mix is not None:
            self.mix = dict(spec.mix)
        elif self.formulation is not None:
            self.mix = {"multi_transfer": 100}
        else:
            self.mix = dict(STANDARD_MIX)
        unknown = set(self.mix) - set(STANDARD_MIX) - {"multi_transfer"}
        if unknown:
            raise ValueError(f"unknown Smallbank transactions in mix: {sorted(unknown)}")
        seq = None
        if self.formulation == "fully-sync":
            seq = True
        elif self.formulation == "partially-async":
            seq = False
        self.ctype = make_customer_type(seq)
        self._names = [f"cust{i}" for i in range(self.n_customers)]

    def default_executors(self):
        return max(1, self.spec.scale_factor)

    def reactor_names(self):
        return self._names

    def declarations(self):
        return [(n, "Customer") for n in self._names]

    def types(self):
        return [self.ctype]

    def load(self, db):
        for i, name in enumerate(self._names):
            db.load(name, "account", name, i)
            db.load(name, "savings", i, INITIAL_BALANCE)
            db.load(name, "checking", i, INITIAL_BALANCE)
            db.load(name, "flow", 0, 0)

    def bind(self, db):
        super().bind(db)
        by_c = {}
        for name in self._names:
            by_c.setdefault(self.container_of[name], []).append(name)
        self.by_container = by_c
        self.containers = sorted(by_c)

    def generator(self, wid, rng):
        spec = self.spec
        kinds = list(self.mix)
        weights = [self.mix[k] for k in kinds]
        first = self.by_container[self.containers[0]]
        names = self._names
        size = spec.txn_size
        proc = PROC_OF.get(self.formulation or "fully-sync")

        def gen():
            kind = rng.choices(kinds, weights)[0]
            if kind == "multi_transfer":
                src = first[rng.randrange(len(first))]
                dsts = pick_destinations(spec.dest_strategy, size, src, self.by_container,
                                         self.containers, rng, spec.span)
                return src, proc, (dsts, TRANSFER_AMOUNT)
            a = names[rng.randrange(len(names))]
            if kind in ("amalgamate", "send_payment"):
                b = a
                while b == a:
                    b = names[rng.randrange(len(names))]
                return a, kind, ((b,) if kind == "amalgamate" else (b, rng.randint(1, 50)))
            if kind == "deposit_checking":
                return a, kind, (rng.randint(1, 50), True)
            if kind == "transact_savings":
                return a, "transact_saving", (rng.randint(-50, 50), True)
            if kind == "write_check":
                return a, kind, (rng.randint(1, 50),)
            return a, "balance", ()

        return gen

    def total_money(self, db):
        total = 0
        external = 0
        for c in db.containers.values():
            store = c.store
            for tname in ("savings", "checking"):
                total += sum(store.tables[tname].committed_items().values())
            external += sum(store.tables["flow"].committed_items().values())
        return total, external

    def check(self, db):
        total, external = self.total_money(db)
        return {"smallbank_conservation": total - external == 2 * INITIAL_BALANCE * self.n_customers}
