"""Cost-model predictions for benchmark transactions.

Calibration follows the same recipe everywhere: run a small probe with
profiling on, one worker, and read communication and per-procedure
processing costs off the profiles.  Predictions add the measured
commit-plus-input-generation time of the run being predicted (``Pred+C+I``).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

import numpy as np

from ..costmodel import CostParams, ForkJoinNode, calibrate, estimate_latency, smallbank_tree
from .harness import WorkloadSpec, make_workload, run

# -- Smallbank multi-transfer ----------------------------------------------

def calibrate_smallbank(n_executors=7, epochs=10, epoch_ms=100.0, seed=0, plan=None):
    """Profile fully-sync multi-transfers of size one to all-remote destinations."""
    spec = WorkloadSpec("smallbank", scale_factor=n_executors, n_workers=1, formulation="fully-sync",
                        txn_size=1, dest_strategy="all-remote", epochs=epochs, epoch_ms=epoch_ms, seed=seed)
    res = run(spec, plan, strategy="s3", n_executors=n_executors, profile=True)
    return calibrate(res.profiles), res


def smallbank_location(size, n_containers):
    """Reactor -> container map for a source in container 0 and all-remote
    destinations spread round-robin over the other containers."""
    loc = {"src": 0}
    others = list(range(1, n_containers)) or [0]
    for i in range(size):
        loc[f"dst{i}"] = others[i % len(others)]
    return loc


def root_calls(formulation, size):
    """Calls the multi-transfer root issues itself."""
    if formulation == "fully-async":
        return 2 * size
    if formulation == "opt":
        return size + 1
    return size


def predict_smallbank(cal, formulation, size, n_containers=7, location=None):
    """Model latency (us, without commit and input generation).

    The root's processing is little more than issuing calls, so its
    calibrated cost (one call at size one) is charged once per call.
    """
    location = location or smallbank_location(size, n_containers)
    dests = [f"dst{i}" for i in range(size)]
    credit = cal.proc("transact_saving")
    root = cal.proc("multi_transfer_sync") * root_calls(formulation, size)
    tree = smallbank_tree(formulation, "src", dests, root, cal.proc("transfer", 0.0), credit, credit)
    params = replace(cal.params, location=location)
    return estimate_latency(tree, params)


# -- TPC-C new-order -------------------------------------------------------

@dataclass
class NewOrderCosts:
    params: CostParams
    base: float          # root work independent of the item count
    per_item: float      # root work per order line (item read, line insert)
    stock_item: float    # one stock update
    stock_fixed: float   # fixed cost of a remote update_stock sub-transaction
    commit_plus_inputgen: float


def _probe(spec, lines, plan, n_executors):
    opts = dict(spec.options, items_per_order=lines)
    probe = replace(spec, options=opts, formulation="sync", n_workers=1, mix={"new_order": 100})
    res = run(probe, plan, strategy="s3", n_executors=n_executors, profile=True)
    return calibrate(res.profiles)


def calibrate_new_order(spec: WorkloadSpec, plan=None, n_executors=None):
    """Two probes: one local plus one remote item, then one local plus two
    remote items; their difference separates per-item from fixed costs.
    The probes await each remote call right away so that send and receive
    costs are observable."""
    n_executors = n_executors or spec.scale_factor
    c11 = _probe(spec, (1, 1), plan, n_executors)
    c12 = _probe(spec, (1, 2), plan, n_executors)
    u1 = c11.proc("update_stock")
    u2 = c12.proc("update_stock")
    stock_item = max(0.0, u2 - u1)
    stock_fixed = max(0.0, u1 - stock_item)
    per_item = max(0.0, c12.proc("new_order") - c11.proc("new_order"))
    base = max(0.0, c11.proc("new_order") - 2 * per_item - stock_item)
    return NewOrderCosts(c11.params, base, per_item, stock_item, stock_fixed, c11.commit_plus_inputgen)


def new_order_tree(costs: NewOrderCosts, home, lines):
    groups = {}
    n_local = 0
    for _, supply, _ in lines:
        if supply == home:
            n_local += 1
        else:
            groups[supply] = groups.get(supply, 0) + 1
    children = [ForkJoinNode(w, costs.stock_fixed + g * costs.stock_item) for w, g in sorted(groups.items())]
    own = costs.base + len(lines) * costs.per_item + n_local * costs.stock_item
    return ForkJoinNode(home, p_ovp=own, async_children=children)


def predict_new_order(costs: NewOrderCosts, spec: WorkloadSpec, n_txns=2000, location=None):
    """Mean model latency (us) over the inputs the workload generator produces
    for worker 0 with ``spec``'s seed."""
    wl = make_workload(replace(spec, mix={"new_order": 100}))
    names = wl.reactor_names()
    location = location or {n: i for i, n in enumerate(names)}
    params = replace(costs.params, location=location)
    rng = random.Random(spec.seed * 1_000_003)
    gen = wl.generator(0, rng)
    lat = []
    for _ in range(n_txns):
        home, proc, args = gen()
        lines = args[2]
        if any(i > wl.scale.items for i, _, _ in lines):
            continue  # rolled back before any call
        lat.append(estimate_latency(new_order_tree(costs, home, lines), params))
    return float(np.mean(lat))
