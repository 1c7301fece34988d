import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reactordb.deployment import build_strategy, parse_plan, serialize_plan
from reactordb.errors import PlanError


def doc(**over):
    d = {"strategy_label": "s2", "router": "affinity",
         "containers": [{"id": 0, "executors": [{"id": i, "mpl": 1} for i in range(4)]}],
         "reactor_map": [{"range": {"prefix": "wh", "start": 0, "stop": 4}, "container": 0,
                          "executor": "modulo"}]}
    d.update(over)
    return d


def test_s2_document_parses():
    plan = parse_plan(doc())
    assert plan.router == "affinity" and len(plan.containers[0].executors) == 4
    assert [plan.resolve(f"wh{i}") for i in range(4)] == [(0, i) for i in range(4)]
    assert plan.resolve("wh4") is None


def test_s1_document_parses_from_json_text_and_file(tmp_path):
    d = doc(router="round_robin", strategy_label="s1",
            reactor_map=[{"range": {"prefix": "wh", "start": 0, "stop": 4}, "container": 0}])
    plan = parse_plan(json.dumps(d))
    assert plan.resolve("wh2") == (0, None)
    p = tmp_path / "plan.json"
    p.write_text(json.dumps(d))
    assert parse_plan(str(p)) == plan


@pytest.mark.parametrize("mutate,kind", [
    (lambda d: d.update(extra=1), "schema-error"),
    (lambda d: d["containers"][0]["executors"][0].update(threads=2), "schema-error"),
    (lambda d: d.update(router="random"), "schema-error"),
    (lambda d: d.update(containers=[]), "schema-error"),
    (lambda d: d["reactor_map"].append({"reactor": "wh1", "container": 0, "executor": 1}), "double-mapping"),
    (lambda d: d["reactor_map"].append({"range": {"prefix": "wh", "start": 3, "stop": 9}, "container": 0,
                                        "executor": 0}), "double-mapping"),
    (lambda d: d["reactor_map"].append({"reactor": "x", "container": 0, "executor": 9}), "dangling-executor"),
    (lambda d: d["reactor_map"].append({"reactor": "x", "container": 5}), "schema-error"),
    (lambda d: d["reactor_map"].append({"reactor": "x", "container": 0}), "schema-error"),
    (lambda d: d["containers"][0]["executors"][0].update(mpl=0), "schema-error"),
])
def test_rejections(mutate, kind):
    d = doc()
    mutate(d)
    with pytest.raises(PlanError) as err:
        parse_plan(d)
    assert err.value.kind == kind


def test_reactor_in_two_containers_is_double_mapped():
    d = {"containers": [{"id": 0, "executors": [{"id": 0}]}, {"id": 1, "executors": [{"id": 0}]}],
         "reactor_map": [{"reactor": "a", "container": 0}, {"reactor": "a", "container": 1}]}
    with pytest.raises(PlanError) as err:
        parse_plan(d)
    assert err.value.kind == "double-mapping"


def test_leading_zero_names_are_not_covered_by_ranges():
    plan = build_strategy("s1", 2, ["a0", "a01", "a1", "a2"])
    assert parse_plan(serialize_plan(plan)) == plan
    assert plan.resolve("a01") == (0, None)
    assert plan.resolve("a001") is None


def test_invalid_json_text():
    with pytest.raises(PlanError):
        parse_plan("{not json")


def test_build_s3_seven_by_thousand():
    names = [f"cust{i}" for i in range(7000)]
    plan = build_strategy("s3", 7, names)
    assert len(plan.containers) == 7
    assert all(len(c.executors) == 1 for c in plan.containers)
    counts = {}
    for n in names:
        c, _ = plan.resolve(n)
        counts[c] = counts.get(c, 0) + 1
    assert counts == {c: 1000 for c in range(7)}
    assert plan.resolve("cust999")[0] == 0 and plan.resolve("cust1000")[0] == 1


def test_build_s2_warehouse_i_on_executor_i():
    plan = build_strategy("s2", 4, [f"wh{i}" for i in range(4)])
    assert plan.router == "affinity"
    assert [plan.resolve(f"wh{i}") for i in range(4)] == [(0, i) for i in range(4)]


def test_build_s1_single_executor():
    plan = build_strategy("s1", 1, ["exchange", "provider0", "provider1"])
    assert len(plan.containers) == 1 and len(plan.containers[0].executors) == 1
    assert plan.resolve("exchange") == (0, None)


def test_build_errors():
    with pytest.raises(ValueError):
        build_strategy("s4", 2, ["a"])
    with pytest.raises(ValueError):
        build_strategy("s1", 0, ["a"])


names_st = st.lists(st.one_of(st.from_regex(r"[a-z]{1,4}[0-9]{1,3}", fullmatch=True),
                              st.from_regex(r"[a-z]{1,5}", fullmatch=True)),
                    min_size=1, max_size=40, unique=True)


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(["s1", "s2", "s3"]), st.integers(1, 6), names_st, st.integers(1, 3))
def test_round_trip_and_total_mapping(strategy, n, names, mpl):
    plan = build_strategy(strategy, n, names, mpl=mpl)
    assert parse_plan(serialize_plan(plan)) == plan
    for name in names:
        where = plan.resolve(name)
        assert where is not None
        if strategy == "s2":
            assert where[1] is not None
