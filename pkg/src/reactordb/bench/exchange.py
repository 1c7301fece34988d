"""Currency exchange: authorize payments under settlement-risk limits.

One ``exchange`` reactor and 15 ``provider{p}`` reactors.  ``auth_pay``
applies two rules: abort if one provider's unsettled exposure (the sum over
a reverse-scanned window of its latest orders) exceeds ``p_exposure``, and
reject the order, still committing, if the total risk-adjusted exposure
exceeds ``g_risk``.  Risk adjustment runs the expensive ``sim_risk`` and
caches its result on the provider for ``cache_period`` clock ticks.

Three ways to run the same logic:

sequential             one reactor holds everything (the classic program)
query-parallelism      orders split over the providers; only the window scans
                       run on the providers, sim_risk runs at the exchange
procedure-parallelism  the exchange fans out ``calc_risk`` to every provider,
                       then leaves ``add_entry`` running on the chosen one
"""

from __future__ import annotations

import random
from collections import namedtuple

from ..deployment import ContainerSpec, DeploymentPlan, ExecutorSpec, MapEntry
from ..runtime import ReactorType
from ..storage import TableSchema
from .base import Workload
from .common import random_numbers

N_PROVIDERS = 15
WINDOW = 800
MAX_TS = 1 << 62
STRATEGIES = ("sequential", "query-parallelism", "procedure-parallelism")

Limits = namedtuple("Limits", "p_exposure g_risk")
RiskCache = namedtuple("RiskCache", "risk computed_at")


def sim_risk(exposure, load, seed):
    """Risk-adjusted exposure; ``load`` random numbers of simulated work."""
    if load <= 0:
        return float(exposure)
    return exposure * (0.5 + random_numbers(load, seed))


def _window_exposure(tx, table, lo, hi, window):
    res = tx.scan(table, lo, hi, limit=window, reverse=True)
    return sum(v for _, v, _ in res.entries)


def _cached_risk(cache, exposure, ts, period, load, seed):
    if cache is not None and ts - cache.computed_at < period:
        return cache.risk, False
    return sim_risk(exposure, load, seed), True


# -- provider side ----------------------------------------------------------

def calc_risk(tx, ts, p_exposure, window, load, period):
    exposure = _window_exposure(tx, "orders", (0, 0), (MAX_TS, MAX_TS), window)
    if exposure > p_exposure:
        tx.abort(f"{tx.reactor} exposure {exposure} above limit")
    risk, fresh = _cached_risk(tx.read("risk", 0), exposure, ts, period, load, ts)
    if fresh:
        tx.write("risk", 0, RiskCache(risk, ts))
    return risk


def add_entry(tx, ts, seq, amount):
    tx.insert("orders", (ts, seq), amount)


def window_exposure(tx, window):
    return _window_exposure(tx, "orders", (0, 0), (MAX_TS, MAX_TS), window)


# -- exchange side ----------------------------------------------------------

def _providers(tx):
    return [k[0] for k, _, _ in tx.scan("provider_names", ("",), ("￿",)).entries]


def auth_pay(tx, provider, amount, ts, seq, window, load, period):
    limits = tx.read("settlement_risk", 0)
    results = [tx.call(p, "calc_risk", ts, limits.p_exposure, window, load, period) for p in _providers(tx)]
    total = sum(f.get() for f in results)
    if total + amount > limits.g_risk:
        return False
    tx.call(provider, "add_entry", ts, seq, amount)
    return True


def auth_pay_query(tx, provider, amount, ts, seq, window, load, period):
    limits = tx.read("settlement_risk", 0)
    names = _providers(tx)
    scans = [tx.call(p, "window_exposure", window) for p in names]
    total = 0.0
    for p, f in zip(names, scans):
        exposure = f.get()
        if exposure > limits.p_exposure:
            tx.abort(f"{p} exposure {exposure} above limit")
        risk, fresh = _cached_risk(tx.read("provider_risk", p), exposure, ts, period, load, ts)
        if fresh:
            tx.write("provider_risk", p, RiskCache(risk, ts))
        total += risk
    if total + amount > limits.g_risk:
        return False
    tx.call(provider, "add_entry", ts, seq, amount).get()
    return True


def auth_pay_classic(tx, provider, amount, ts, seq, window, load, period):
    limits = tx.read("settlement_risk", 0)
    total = 0.0
    for p in _providers(tx):
        exposure = _window_exposure(tx, "all_orders", (p, 0, 0), (p, MAX_TS, MAX_TS), window)
        if exposure > limits.p_exposure:
            tx.abort(f"{p} exposure {exposure} above limit")
        risk, fresh = _cached_risk(tx.read("provider_risk", p), exposure, ts, period, load, ts)
        if fresh:
            tx.write("provider_risk", p, RiskCache(risk, ts))
        total += risk
    if total + amount > limits.g_risk:
        return False
    tx.insert("all_orders", (provider, ts, seq), amount)
    return True


EXCHANGE_TYPE = ReactorType("Exchange", {
    "auth_pay": auth_pay, "auth_pay_query": auth_pay_query, "auth_pay_classic": auth_pay_classic,
}, (TableSchema("provider_names", 1, ()), TableSchema("settlement_risk", 1, Limits._fields),
    TableSchema("provider_risk", 1, RiskCache._fields), TableSchema("all_orders", 3, ("amount",))))

PROVIDER_TYPE = ReactorType("Provider", {
    "calc_risk": calc_risk, "add_entry": add_entry, "window_exposure": window_exposure,
}, (TableSchema("risk", 1, RiskCache._fields), TableSchema("orders", 2, ("amount",))))

PROC_OF = {"sequential": "auth_pay_classic", "query-parallelism": "auth_pay_query",
           "procedure-parallelism": "auth_pay"}


class ExchangeWorkload(Workload):
    name = "exchange"

    def __init__(self, spec):
        super().__init__(spec)
        if spec.exchange_strategy not in STRATEGIES:
            raise ValueError(f"unknown exchange strategy {spec.exchange_strategy!r}")
        opts = spec.options
        self.strategy = spec.exchange_strategy
        self.n_providers = opts.get("providers", N_PROVIDERS)
        self.orders_per_provider = opts.get("orders_per_provider", 3000)
        self.window = opts.get("window", WINDOW)
        self.period = opts.get("cache_period", 0)
        # limits high enough that sim_risk always runs and nothing aborts
        self.limits = Limits(opts.get("p_exposure", 1e15), opts.get("g_risk", 1e18))
        self.providers = [f"provider{p}" for p in range(self.n_providers)]

    def reactor_names(self):
        return ["exchange"] + self.providers

    def declarations(self):
        return [("exchange", "Exchange")] + [(p, "Provider") for p in self.providers]

    def types(self):
        return [EXCHANGE_TYPE, PROVIDER_TYPE]

    def default_executors(self):
        return 1 if self.strategy == "sequential" else 1 + self.n_providers

    def default_plan(self, strategy=None, n_executors=None):
        if strategy is not None:
            return super().default_plan(strategy, n_executors)
        if self.strategy == "sequential":
            return DeploymentPlan((ContainerSpec(0, (ExecutorSpec(0),)),),
                                  (MapEntry(0, reactor="exchange"),
                                   MapEntry(0, prefix="provider", start=0, stop=self.n_providers)),
                                  "round_robin", "sequential")
        return super().default_plan("s3", n_executors or self.default_executors())

    def load(self, db):
        db.load("exchange", "settlement_risk", 0, self.limits)
        rng = random.Random(self.spec.seed)
        for p in self.providers:
            db.load("exchange", "provider_names", p, True)
            for o in range(self.orders_per_provider):
                amount = rng.randint(1, 100)
                if self.strategy == "sequential":
                    db.load("exchange", "all_orders", (p, o, 0), amount)
                else:
                    db.load(p, "orders", (o, 0), amount)

    def generator(self, wid, rng):
        proc = PROC_OF[self.strategy]
        clock = [self.orders_per_provider]
        args = (self.window, self.spec.simrisk_load, self.period)

        def gen():
            clock[0] += 1
            p = self.providers[rng.randrange(len(self.providers))]
            return "exchange", proc, (p, rng.randint(1, 100), clock[0], wid) + args

        return gen
