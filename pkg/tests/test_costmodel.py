import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reactordb.bench import WorkloadSpec, run
from reactordb.costmodel import (FORMULATIONS, Calibration, CostParams, ForkJoinNode, calibrate, decompose,
                                 estimate_latency, random_params, random_tree, simulate_forkjoin, smallbank_tree)
from reactordb.errors import IncompleteTrace, InsufficientSamples
from reactordb.tracing import TxnProfile

UNIFORM = CostParams(send=1, recv=2)


def test_leaf():
    leaf = ForkJoinNode("k0", p_seq=5)
    assert estimate_latency(leaf, UNIFORM) == 5 == simulate_forkjoin(leaf, UNIFORM)


def test_two_async_children():
    node = ForkJoinNode("k0", p_seq=3, async_children=[ForkJoinNode("k1", 5), ForkJoinNode("k2", 7)])
    assert estimate_latency(node, UNIFORM) == 14
    assert simulate_forkjoin(node, UNIFORM) == 14


def test_one_sync_child():
    node = ForkJoinNode("k0", p_seq=2, sync_seq=[ForkJoinNode("k1", 4)])
    assert estimate_latency(node, UNIFORM) == 9
    assert simulate_forkjoin(node, UNIFORM) == 9


def test_zero_params_spine_plus_async_max():
    zero = CostParams()
    node = ForkJoinNode("k0", p_seq=1, sync_seq=[ForkJoinNode("k1", 2)],
                        async_children=[ForkJoinNode("k2", 4), ForkJoinNode("k3", 6)], p_ovp=3)
    assert estimate_latency(node, zero) == 1 + 2 + 6
    assert simulate_forkjoin(node, zero) == 9


def test_same_container_calls_are_free():
    params = CostParams(send=10, recv=10, location={"k0": 0, "k1": 0})
    node = ForkJoinNode("k0", p_seq=1, sync_seq=[ForkJoinNode("k1", 2)])
    assert estimate_latency(node, params) == 3
    assert estimate_latency(node, replace(params, location={})) == 23


def test_negative_costs_rejected():
    with pytest.raises(ValueError):
        CostParams(send=-1)


def test_random_trees_match_simulator():
    rng = random.Random(7)
    for _ in range(300):
        tree, params = random_tree(rng), random_params(rng)
        assert estimate_latency(tree, params) == simulate_forkjoin(tree, params)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from(["send", "recv", "p_seq", "p_ovp", "pair"]),
       st.integers(1, 20))
def test_monotone_in_every_parameter(seed, which, bump):
    rng = random.Random(seed)
    tree, params = random_tree(rng), random_params(rng)
    before = estimate_latency(tree, params)
    if which in ("send", "recv"):
        params = replace(params, **{which: getattr(params, which) + bump})
    elif which == "pair":
        pair = ("k0", "k1")
        params = replace(params, pair_send={**params.pair_send,
                                            pair: params.pair_send.get(pair, params.send) + bump})
    else:
        nodes = [tree]
        while nodes:
            n = nodes.pop()
            if rng.random() < 0.5:
                setattr(n, which, getattr(n, which) + bump)
                break
            nodes.extend(n.children())
    assert estimate_latency(tree, params) >= before


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 7), st.floats(0, 50), st.floats(0, 50), st.floats(0, 50), st.floats(0, 50),
       st.floats(0, 50), st.floats(0, 50))
def test_formulation_ordering(size, send, recv, p_root, p_transfer, p_credit, p_debit):
    params = CostParams(send, recv, location={"src": 0, **{f"d{i}": 1 + i for i in range(size)}})
    dests = [f"d{i}" for i in range(size)]
    lat = [estimate_latency(smallbank_tree(f, "src", dests, p_root, p_transfer, p_credit, p_debit), params)
           for f in FORMULATIONS]
    eps = 1e-9 * (1 + max(lat))
    assert lat[0] + eps >= lat[1] and lat[1] + eps >= lat[2] and lat[2] + eps >= lat[3]


def test_unknown_formulation():
    with pytest.raises(ValueError):
        smallbank_tree("lazy", "s", ["d"], 1, 1, 1, 1)


# -- profiles -----------------------------------------------------------------

def profiled(formulation, size, dest="all-remote", n=7, txns=40):
    spec = WorkloadSpec("smallbank", scale_factor=n, formulation=formulation, txn_size=size,
                        dest_strategy=dest, txns_per_worker=txns, epochs=1, seed=3,
                        options={"customers_per_container": 30})
    return run(spec, strategy="s3", n_executors=n, profile=True)


def test_decompose_fully_sync_size_seven():
    res = profiled("fully-sync", 7)
    for b in res.breakdowns():
        assert abs(b.bucket_sum() - b.total) <= 1e-6 * b.total
        assert b.sync_execution > 0 and b.c_s_total > 0 and b.c_r_total > 0
        assert b.async_execution == 0


def test_decompose_opt_size_seven():
    res = profiled("opt", 7)
    m = res.mean_breakdown()
    assert m.async_execution > 0
    # only the root's bookkeeping around the fork remains synchronous
    assert m.sync_execution < 0.25 * m.async_execution
    assert abs(m.bucket_sum() - m.total) <= 1e-6 * m.total


def test_size_one_local_opt_behaves_like_fully_sync():
    opt = profiled("opt", 1, dest="local").mean_breakdown()
    sync = profiled("fully-sync", 1, dest="local").mean_breakdown()
    for m in (opt, sync):
        assert m.c_s_total == 0 and m.c_r_total == 0 and m.async_execution == 0


def test_calibrate_remote_and_all_local():
    cal = calibrate(profiled("fully-sync", 1).profiles)
    assert cal.params.send > 0 and cal.params.recv > 0 and cal.comm_samples > 0
    assert cal.proc("transact_saving") > 0
    assert Calibration.from_dict(cal.to_dict()).to_dict() == cal.to_dict()
    local = calibrate(profiled("fully-sync", 1, dest="local").profiles)
    assert local.params.send == 0 and local.params.recv == 0
    with pytest.raises(KeyError):
        local.proc("nothing")
    assert local.proc("nothing", 1.5) == 1.5


def test_calibrate_and_decompose_errors():
    with pytest.raises(InsufficientSamples):
        calibrate([])
    with pytest.raises(IncompleteTrace):
        decompose(TxnProfile(1, "p", "r"))
