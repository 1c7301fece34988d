"""TPC-C with one reactor per warehouse.

Every warehouse reactor (``wh0``, ``wh1``, ...) owns the rows of its
warehouse, districts, customers, orders and stock, plus a full copy of the
read-only item table.  Two extra tables serve as secondary indexes:
``cust_name`` (district, last, first, customer) and ``order_cust``
(district, customer, order).

Cross-warehouse work happens through sub-transactions: new-order sends one
``update_stock`` call per remote supplying warehouse (all of them issued
before any local work, results collected at the end unless ``sync_calls`` is
set), and payment updates a remote customer with ``payment_customer``.

Simplifications, in the usual benchmark-kit spirit: no terminals or think
times, no initial history rows, a time stamp is a logical clock value from
the client, and the population is scaled down by default (see
``TpccScale``).  About 1% of new-orders name an unused item and roll back.
"""

from __future__ import annotations

import random
from collections import namedtuple
from dataclasses import dataclass

from ..runtime import ReactorType
from ..storage import TableSchema
from .base import Workload
from .common import last_name, nurand, spin_us

Warehouse = namedtuple("Warehouse", "name tax ytd")
District = namedtuple("District", "tax ytd next_o_id")
Customer = namedtuple("Customer", "first last credit discount balance ytd_payment payment_cnt delivery_cnt data")
Order = namedtuple("Order", "c_id entry_d carrier_id ol_cnt all_local")
OrderLine = namedtuple("OrderLine", "i_id supply_w delivery_d quantity amount dist_info")
Item = namedtuple("Item", "name price data")
Stock = namedtuple("Stock", "quantity ytd order_cnt remote_cnt dist_info data")
History = namedtuple("History", "c_id c_d_id c_w amount data")

DISTRICTS = 10
MAX_ID = 1 << 30
STANDARD_MIX = {"new_order": 45, "payment": 43, "order_status": 4, "delivery": 4, "stock_level": 4}

TABLES = (
    TableSchema("warehouse", 1, Warehouse._fields),
    TableSchema("district", 1, District._fields),
    TableSchema("customer", 2, Customer._fields),
    TableSchema("cust_name", 4, ()),
    TableSchema("history", 3, History._fields),
    TableSchema("orders", 2, Order._fields),
    TableSchema("order_cust", 3, ()),
    TableSchema("new_order", 2, ()),
    TableSchema("order_line", 3, OrderLine._fields),
    TableSchema("item", 1, Item._fields),
    TableSchema("stock", 1, Stock._fields),
)


@dataclass(frozen=True)
class TpccScale:
    """Population per warehouse.  The benchmark's full sizes are 100000
    items, 3000 customers and 3000 orders per district; the defaults are a
    desk-sized cut that keeps every code path and the contention pattern on
    warehouse and district rows."""

    items: int = 10_000
    customers_per_district: int = 300
    orders_per_district: int = 30


# ---------------------------------------------------------------------------
# procedures


def _delay(delay, ts, salt):
    if delay and delay[1] > 0:
        r = random.Random(ts * 1_000_003 + salt)
        spin_us(r.uniform(delay[0], delay[1]), seed=ts ^ salt)


def _update_stock_rows(tx, items, home, delay, ts):
    infos = []
    remote = tx.reactor != home
    for i_id, qty in items:
        s = tx.read("stock", i_id)
        q = s.quantity - qty if s.quantity - qty >= 10 else s.quantity - qty + 91
        tx.write("stock", i_id, s._replace(quantity=q, ytd=s.ytd + qty, order_cnt=s.order_cnt + 1,
                                           remote_cnt=s.remote_cnt + (1 if remote else 0)))
        _delay(delay, ts, i_id)
        infos.append(s.dist_info)
    return infos


def update_stock(tx, items, home, delay=None, ts=0):
    return _update_stock_rows(tx, items, home, delay, ts)


def new_order(tx, d_id, c_id, lines, ts, sync_calls=False, delay=None):
    home = tx.reactor
    prices = []
    for i_id, _, _ in lines:
        item = tx.read("item", i_id)
        if item is None:
            tx.abort(f"invalid item {i_id}")
        prices.append(item.price)
    groups = {}
    for n, (i_id, supply, qty) in enumerate(lines):
        if supply != home:
            groups.setdefault(supply, []).append((n, i_id, qty))
    pending = []
    for supply in sorted(groups):
        group = groups[supply]
        f = tx.call(supply, "update_stock", [(i, q) for _, i, q in group], home, delay, ts)
        if sync_calls:
            f.get()
        pending.append((group, f))

    w = tx.read("warehouse", 0)
    d = tx.read("district", d_id)
    o_id = d.next_o_id
    tx.write("district", d_id, d._replace(next_o_id=o_id + 1))
    c = tx.read("customer", (d_id, c_id))
    dist = [None] * len(lines)
    local = [(n, i, q) for n, (i, s, q) in enumerate(lines) if s == home]
    if local:
        infos = _update_stock_rows(tx, [(i, q) for _, i, q in local], home, delay, ts)
        for (n, _, _), info in zip(local, infos):
            dist[n] = info
    for group, f in pending:
        for (n, _, _), info in zip(group, f.get()):
            dist[n] = info

    all_local = 1 if not groups else 0
    tx.insert("orders", (d_id, o_id), Order(c_id, ts, None, len(lines), all_local))
    tx.insert("new_order", (d_id, o_id), True)
    tx.insert("order_cust", (d_id, c_id, o_id), True)
    total = 0
    for n, (i_id, supply, qty) in enumerate(lines):
        amount = qty * prices[n]
        total += amount
        tx.insert("order_line", (d_id, o_id, n + 1), OrderLine(i_id, supply, None, qty, amount, dist[n]))
    return round(total * (1 - c.discount) * (1 + w.tax + d.tax), 2)


def _find_customer(tx, d_id, c_key, by_name):
    if not by_name:
        return c_key, tx.read("customer", (d_id, c_key))
    res = tx.scan("cust_name", (d_id, c_key, "", 0), (d_id, c_key, "￿", MAX_ID))
    if not res.entries:
        tx.abort(f"no customer named {c_key}")
    key = res.entries[(len(res.entries) - 1) // 2][0]
    c_id = key[3]
    return c_id, tx.read("customer", (d_id, c_id))


def payment_customer(tx, d_id, c_key, by_name, amount, w_name, pay_d):
    c_id, c = _find_customer(tx, d_id, c_key, by_name)
    data = c.data
    if c.credit == "BC":
        data = f"{c_id} {d_id} {w_name} {pay_d} {amount}|{data}"[:500]
    tx.write("customer", (d_id, c_id), c._replace(balance=c.balance - amount, ytd_payment=c.ytd_payment + amount,
                                                 payment_cnt=c.payment_cnt + 1, data=data))
    return c_id


def payment(tx, d_id, c_w, c_d, c_key, by_name, amount, ts, wid):
    home = tx.reactor
    remote = None
    if c_w != home:
        remote = tx.call(c_w, "payment_customer", c_d, c_key, by_name, amount, home, d_id)
    w = tx.read("warehouse", 0)
    tx.write("warehouse", 0, w._replace(ytd=w.ytd + amount))
    d = tx.read("district", d_id)
    tx.write("district", d_id, d._replace(ytd=d.ytd + amount))
    if remote is None:
        c_id = payment_customer(tx, c_d, c_key, by_name, amount, home, d_id)
    else:
        c_id = remote.get()
    tx.insert("history", (d_id, ts, wid), History(c_id, c_d, c_w, amount, f"{w.name}    {d_id}"))
    return c_id


def order_status(tx, d_id, c_key, by_name):
    c_id, c = _find_customer(tx, d_id, c_key, by_name)
    last = tx.scan("order_cust", (d_id, c_id, 0), (d_id, c_id, MAX_ID), limit=1, reverse=True)
    if not last.entries:
        return c_id, c.balance, None, []
    o_id = last.entries[0][0][2]
    order = tx.read("orders", (d_id, o_id))
    lines = tx.scan("order_line", (d_id, o_id, 0), (d_id, o_id, 99))
    return c_id, c.balance, (o_id, order.carrier_id), [v for _, v, _ in lines.entries]


def delivery(tx, carrier_id, ts):
    done = []
    for d_id in range(1, DISTRICTS + 1):
        no = tx.scan("new_order", (d_id, 0), (d_id, MAX_ID), limit=1)
        if not no.entries:
            continue
        o_id = no.entries[0][0][1]
        tx.delete("new_order", (d_id, o_id))
        order = tx.read("orders", (d_id, o_id))
        tx.write("orders", (d_id, o_id), order._replace(carrier_id=carrier_id))
        total = 0
        for key, line, _ in tx.scan("order_line", (d_id, o_id, 0), (d_id, o_id, 99)).entries:
            total += line.amount
            tx.write("order_line", (d_id,) + key[1:], line._replace(delivery_d=ts))
        c = tx.read("customer", (d_id, order.c_id))
        tx.write("customer", (d_id, order.c_id),
                 c._replace(balance=c.balance + total, delivery_cnt=c.delivery_cnt + 1))
        done.append((d_id, o_id))
    return done


def stock_level(tx, d_id, threshold):
    d = tx.read("district", d_id)
    hi = d.next_o_id
    lo = max(1, hi - 20)
    items = set()
    if hi > lo:
        for _, line, _ in tx.scan("order_line", (d_id, lo, 0), (d_id, hi - 1, 99)).entries:
            items.add(line.i_id)
    low = 0
    for i_id in sorted(items):
        if tx.read("stock", i_id).quantity < threshold:
            low += 1
    return low


WAREHOUSE_TYPE = ReactorType("Warehouse", {
    "new_order": new_order, "update_stock": update_stock, "payment": payment,
    "payment_customer": payment_customer, "order_status": order_status, "delivery": delivery,
    "stock_level": stock_level,
}, TABLES)


# ---------------------------------------------------------------------------
# population, inputs, audits


def load_warehouse(db, name, w_idx, scale: TpccScale, seed=0):
    rng = random.Random(seed * 7919 + w_idx)
    db.load(name, "warehouse", 0, Warehouse(name, round(rng.uniform(0, 0.2), 4), 300_000.0))
    for i in range(1, scale.items + 1):
        db.load(name, "item", i, Item(f"item{i}", round(rng.uniform(1, 100), 2), "x"))
        db.load(name, "stock", i, Stock(rng.randint(10, 100), 0, 0, 0, f"d{w_idx}-{i}", "s"))
    n_c = scale.customers_per_district
    n_o = scale.orders_per_district
    for d in range(1, DISTRICTS + 1):
        db.load(name, "district", d, District(round(rng.uniform(0, 0.2), 4), 30_000.0, n_o + 1))
        for c in range(1, n_c + 1):
            last = last_name(c - 1 if c <= 1000 else nurand(rng, 255, 0, 999))
            first = f"F{c}"
            credit = "BC" if rng.random() < 0.1 else "GC"
            db.load(name, "customer", (d, c),
                    Customer(first, last, credit, round(rng.uniform(0, 0.5), 4), -10.0, 10.0, 1, 0, "data"))
            db.load(name, "cust_name", (d, last, first, c), True)
        perm = list(range(1, n_c + 1))
        rng.shuffle(perm)
        delivered_upto = int(n_o * 0.7)
        for o in range(1, n_o + 1):
            c_id = perm[(o - 1) % n_c]
            ol_cnt = rng.randint(5, 15)
            delivered = o <= delivered_upto
            db.load(name, "orders", (d, o), Order(c_id, 0, rng.randint(1, 10) if delivered else None, ol_cnt, 1))
            db.load(name, "order_cust", (d, c_id, o), True)
            if not delivered:
                db.load(name, "new_order", (d, o), True)
            for n in range(1, ol_cnt + 1):
                amount = 0.0 if delivered else round(rng.uniform(0.01, 9999.99), 2)
                db.load(name, "order_line", (d, o, n),
                        OrderLine(rng.randint(1, scale.items), name, 0 if delivered else None, 5, amount, "dist"))


def check_warehouse(db, name):
    """Consistency conditions 1-4 of the benchmark for one warehouse."""
    w = db.reactor_rows(name, "warehouse")[(0,)]
    districts = db.reactor_rows(name, "district")
    orders = db.reactor_rows(name, "orders")
    new_orders = db.reactor_rows(name, "new_order")
    lines = db.reactor_rows(name, "order_line")
    ok = {}
    ok["w_ytd"] = abs(w.ytd - sum(d.ytd for d in districts.values())) < 1e-6 * max(1.0, w.ytd)
    next_ok = no_ok = lines_ok = True
    for (d_id,), d in districts.items():
        o_ids = [k[1] for k in orders if k[0] == d_id]
        no_ids = [k[1] for k in new_orders if k[0] == d_id]
        if o_ids and d.next_o_id - 1 != max(o_ids):
            next_ok = False
        if no_ids and (max(no_ids) != d.next_o_id - 1 and max(no_ids) > max(o_ids)):
            next_ok = False
        if no_ids and len(no_ids) != max(no_ids) - min(no_ids) + 1:
            no_ok = False
        ol_total = sum(o.ol_cnt for k, o in orders.items() if k[0] == d_id)
        if ol_total != sum(1 for k in lines if k[0] == d_id):
            lines_ok = False
    ok["next_o_id"] = next_ok
    ok["new_order_contiguous"] = no_ok
    ok["order_line_count"] = lines_ok
    return ok


class TpccWorkload(Workload):
    name = "tpcc"
    default_strategy = "s2"

    def __init__(self, spec):
        super().__init__(spec)
        opts = spec.options
        self.scale = opts.get("scale") or TpccScale(
            items=opts.get("items", TpccScale.items),
            customers_per_district=opts.get("customers_per_district", TpccScale.customers_per_district),
            orders_per_district=opts.get("orders_per_district", TpccScale.orders_per_district))
        self.n_wh = max(1, spec.scale_factor)
        self._names = [f"wh{i}" for i in range(self.n_wh)]
        self.mix = dict(spec.mix) if spec.mix else dict(STANDARD_MIX)
        unknown = set(self.mix) - set(STANDARD_MIX)
        if unknown:
            raise ValueError(f"unknown TPC-C transactions in mix: {sorted(unknown)}")
        self.remote_item = (1.0 if spec.remote_pct is None else spec.remote_pct) / 100.0
        self.remote_customer = opts.get("remote_customer_pct", 15.0) / 100.0
        self.rollback = opts.get("rollback_pct", 1.0) / 100.0
        form = spec.formulation or "async"
        if form not in ("sync", "async"):
            raise ValueError(f"TPC-C formulation must be sync or async, got {form!r}")
        self.sync_calls = form == "sync"
        lo, hi = spec.delay_us or (0, 0)
        self.delay = (lo, hi) if hi > 0 else None
        self.fixed_lines = opts.get("items_per_order")  # (local, remote) pair for calibration probes

    def default_executors(self):
        return self.n_wh

    def reactor_names(self):
        return self._names

    def declarations(self):
        return [(n, "Warehouse") for n in self._names]

    def types(self):
        return [WAREHOUSE_TYPE]

    def load(self, db):
        for i, name in enumerate(self._names):
            load_warehouse(db, name, i, self.scale, self.spec.seed)

    def generator(self, wid, rng):
        names = self._names
        home_idx = wid % len(names)
        home = names[home_idx]
        others = [n for n in names if n != home]
        kinds = list(self.mix)
        weights = [self.mix[k] for k in kinds]
        n_items = self.scale.items
        n_c = self.scale.customers_per_district
        name_hi = min(999, n_c - 1)
        clock = [0]
        n_workers = self.spec.n_workers

        def customer_key():
            if rng.random() < 0.6:
                return last_name(nurand(rng, 255, 0, name_hi)), True
            return nurand(rng, 1023, 1, n_c), False

        def gen():
            clock[0] += 1
            ts = clock[0] * n_workers + wid
            kind = rng.choices(kinds, weights)[0]
            d_id = rng.randint(1, DISTRICTS)
            if kind == "new_order":
                c_id = nurand(rng, 1023, 1, n_c)
                lines = []
                if self.fixed_lines:
                    # all remote lines go to one warehouse: a single sub-transaction
                    n_local, n_remote = self.fixed_lines
                    remote = others[rng.randrange(len(others))] if others else home
                    for k in range(n_local + n_remote):
                        supply = home if k < n_local else remote
                        lines.append((nurand(rng, 8191, 1, n_items), supply, rng.randint(1, 10)))
                else:
                    for _ in range(rng.randint(5, 15)):
                        supply = home
                        if others and rng.random() < self.remote_item:
                            supply = others[rng.randrange(len(others))]
                        lines.append((nurand(rng, 8191, 1, n_items), supply, rng.randint(1, 10)))
                    if rng.random() < self.rollback:
                        i, s, q = lines[-1]
                        lines[-1] = (n_items + 1, s, q)
                return home, "new_order", (d_id, c_id, lines, ts, self.sync_calls, self.delay)
            if kind == "payment":
                c_w, c_d = home, d_id
                if others and rng.random() < self.remote_customer:
                    c_w, c_d = others[rng.randrange(len(others))], rng.randint(1, DISTRICTS)
                c_key, by_name = customer_key()
                return home, "payment", (d_id, c_w, c_d, c_key, by_name,
                                         round(rng.uniform(1, 5000), 2), ts, wid)
            if kind == "order_status":
                c_key, by_name = customer_key()
                return home, "order_status", (d_id, c_key, by_name)
            if kind == "delivery":
                return home, "delivery", (rng.randint(1, 10), ts)
            return home, "stock_level", (d_id, rng.randint(10, 20))

        return gen

    def check(self, db):
        out = {}
        for name in self._names:
            for k, v in check_warehouse(db, name).items():
                out[f"tpcc_{k}"] = out.get(f"tpcc_{k}", True) and v
        return out
