"""Engine semantics: interpreter, attribution, parallelism, properties."""

import dataclasses
from pathlib import Path

import numpy as np
import pytest

from tempmine import dsl
from tempmine.engine import (
    Bindings,
    EngineInvariantError,
    FeatureMatrix,
    _PreparedPlan,
    execute_cell,
    merge_features,
    mine,
    run_plan_on_trigger,
)
from tempmine.plan import BUILTIN_COLUMNS, compile_pattern
from tempmine.oracle import enumerate_bruteforce
from .conftest import builtin_with, graph_from_edges, random_graph

CUSTOM_DIR = Path(__file__).parent / "data" / "custom"


def load_custom(name: str, delta: int | None = None,
                attribution: str = "trigger") -> dsl.ValidatedPattern:
    spec = dsl.parse_pattern((CUSTOM_DIR / f"{name}.pat").read_text())
    if delta is not None:
        spec = dataclasses.replace(spec, delta=delta)
    spec = dataclasses.replace(spec, attribution=attribution)
    return dsl.must_validate(spec)


def all_builtin_plans(g, delta, attribution="trigger", force_generic=False):
    return [
        compile_pattern(builtin_with(name, delta, attribution), g.stats, force_generic)
        for name in BUILTIN_COLUMNS
    ]


# --- mine basics -------------------------------------------------------------

def test_empty_pattern_list_gives_zero_columns_full_rows(rng):
    g = random_graph(rng, 5, 20, 10)
    matrix = mine(g, [])
    assert matrix.values.shape == (20, 0)
    assert matrix.edge_count == 20


def test_column_order_contract(rng):
    g = random_graph(rng, 6, 15, 10)
    plans = [
        compile_pattern(load_custom("spray_union", delta=5), g.stats),
        compile_pattern(builtin_with("sg_count", 5), g.stats),
        compile_pattern(builtin_with("fan_in", 5), g.stats),
        compile_pattern(load_custom("chain_5cycle", delta=5), g.stats),
    ]
    matrix = mine(g, plans)
    assert matrix.columns == ("fan_in", "sg_count", "spray_union", "chain_5cycle")


def test_duplicate_pattern_names_rejected(rng):
    g = random_graph(rng, 5, 10, 10)
    p = compile_pattern(builtin_with("fan_in", 5), g.stats)
    with pytest.raises(EngineInvariantError, match="duplicate"):
        mine(g, [p, p])


def test_worker_invariance_small(rng):
    g = random_graph(rng, 25, 600, 90)
    plans = all_builtin_plans(g, 30)
    m1 = mine(g, plans, workers=1)
    m2 = mine(g, plans, workers=2)
    m8 = mine(g, plans, workers=8)
    assert np.array_equal(m1.values, m2.values)
    assert np.array_equal(m1.values, m8.values)


def test_worker_invariance_members_and_instances(rng):
    g = random_graph(rng, 15, 200, 40)
    plans = all_builtin_plans(g, 20, attribution="members")
    m1, i1 = mine(g, plans, workers=1, collect_instances=True)
    m4, i4 = mine(g, plans, workers=4, collect_instances=True)
    assert np.array_equal(m1.values, m4.values)
    assert i1 == i4


# --- execute_cell spec examples ----------------------------------------------

def _bindings_for(g, plan, eid):
    u, v, t = int(g.edge_src[eid]), int(g.edge_dst[eid]), int(g.edge_time[eid])
    return Bindings(trigger=(u, v, t, eid), delta=plan.delta,
                    scalars={"N0": u, "N1": v},
                    slots=[None] * plan.slot_count,
                    bound_edges={"e0": [(t, eid)]})


def test_execute_cell_for_all_with_window_and_skip():
    # five in-edges of node 9; window covers three, skip rejects one of them
    g = graph_from_edges([
        (1, 9, 1), (2, 9, 2), (3, 9, 5), (4, 9, 6), (5, 9, 7),
        (9, 0, 7),  # trigger: N0=9, N1=0
        (3, 0, 1),
    ])
    vp = builtin_with("deg_in_src", 2)  # for_all over N0.in_neigh
    spec = dataclasses.replace(
        vp.spec,
        stages=(dataclasses.replace(
            vp.spec.stages[0],
            constraints=(dsl.ConstraintExpr(
                dsl.SKIP_IF, dsl.Term("node", "D"), "==", dsl.Term("node", "N1")),),
        ),),
    )
    # candidate nodes within [5,7]: {3,4,5}; none equals N1=0 so add a pred
    vp2 = dsl.must_validate(spec)
    plan = compile_pattern(vp2)
    result, iters = execute_cell(plan.cells[0], _bindings_for(g, plan, 5), g)
    assert set(result) == {3, 4, 5}
    assert iters == 3


def test_execute_cell_intersect():
    # out(m) = {x,y,z}, in(d) = {y,z,w} -> {y,z}
    g = graph_from_edges([
        (0, 2, 1), (0, 3, 1), (0, 4, 1),      # m=0 -> x,y,z
        (3, 1, 2), (4, 1, 2), (5, 1, 2),      # y,z,w -> d=1
        (0, 1, 3),                            # trigger m->d
    ])
    vp = builtin_with("cycle_3", 5)  # intersect N1.out_neigh? no: use sg stage
    spec = dsl.parse_pattern("""
pattern: probe
delta: 5
stage:
  op: intersect
  src: N0.out_neigh, N1.in_neigh
  dst_var: Z
emit:
  mode: set_cardinality
  target: Z
""")
    plan = compile_pattern(dsl.must_validate(spec))
    result, _ = execute_cell(plan.cells[0], _bindings_for(g, plan, 6), g)
    assert set(result) == {3, 4}


def test_execute_cell_differentiate():
    g = graph_from_edges([(2, 1, 1), (3, 1, 1), (0, 1, 2)])
    spec = dsl.parse_pattern("""
pattern: probe
delta: 5
stage:
  op: for_all
  src: N1.in_neigh
  dst_var: X
stage:
  op: differentiate
  src: X.self
  dst_var: Y
  skip_if: Y == N0
emit:
  mode: set_cardinality
  target: Y
""")
    plan = compile_pattern(dsl.must_validate(spec))
    prepared = _PreparedPlan(plan)
    count, _ = run_plan_on_trigger(g, prepared, 2, False)
    assert count == 2  # {2,3}; N0=0 filtered


# --- members attribution ------------------------------------------------------

def test_members_attribution_fan_star():
    g = graph_from_edges([(i, 5, i + 1) for i in range(5)])
    trig = mine(g, [compile_pattern(builtin_with("fan_in", 10))])
    memb = mine(g, [compile_pattern(builtin_with("fan_in", 10, "members"))])
    assert trig.column("fan_in").tolist() == [0, 1, 2, 3, 4]
    assert memb.column("fan_in").tolist() == [4, 4, 4, 4, 4]


def test_members_tie_anchoring():
    # two gathers at the same timestamp: instance counted once, at higher id
    g = graph_from_edges([(0, 1, 5), (0, 1, 5)])
    memb = mine(g, [compile_pattern(builtin_with("fan_in", 10, "members"))])
    assert memb.column("fan_in").tolist() == [1, 1]


def test_members_vs_oracle_on_customs(rng):
    g = random_graph(rng, 10, 80, 30)
    for name in ("spray_union", "filtered_senders", "sg_ordered",
                 "stack_forward", "chain_5cycle"):
        vp = load_custom(name, delta=12, attribution="members")
        got = mine(g, [compile_pattern(vp, g.stats)]).column(vp.name)
        want = enumerate_bruteforce(g, vp, attribution="members")
        assert np.array_equal(got, want), name


# --- instances -----------------------------------------------------------------

def test_instance_collection_sg():
    g = graph_from_edges([(0, 2, 1), (0, 3, 2), (0, 4, 3),
                          (2, 1, 4), (3, 1, 5), (4, 1, 6)])
    plan = compile_pattern(builtin_with("sg_count", 10, min_size=2))
    matrix, instances = mine(g, [plan], collect_instances=True)
    by_trigger = {i.trigger_edge: i for i in instances}
    assert set(by_trigger) == {4, 5}
    inst = by_trigger[5]
    assert inst.pattern == "sg_count"
    assert set(inst.member_edges) == {0, 1, 2, 3, 4, 5}
    assert set(inst.member_nodes) == {0, 1, 2, 3, 4}
    assert matrix.column("sg_count")[5] == 1


def test_instance_members_lie_in_window(rng):
    g = random_graph(rng, 12, 120, 40)
    plans = all_builtin_plans(g, 15)
    _, instances = mine(g, plans, collect_instances=True)
    for inst in instances:
        t = int(g.edge_time[inst.trigger_edge])
        for member in inst.member_edges:
            # stack_forward not in builtins: all builtin windows are backward
            assert t - 15 <= int(g.edge_time[member]) <= t


# --- merge ---------------------------------------------------------------------

def _matrix(cols, vals, g):
    return FeatureMatrix(cols, np.array(vals, dtype=np.int64),
                         g.edge_src, g.edge_dst, g.edge_time, g.edge_label)


def test_merge_disjoint_and_permuted(rng):
    g = random_graph(rng, 4, 3, 5)
    a = _matrix(("x",), [[1], [0], [0]], g)
    b = _matrix(("x",), [[0], [2], [0]], g)
    merged = merge_features([a, b])
    assert merged.values[:, 0].tolist() == [1, 2, 0]
    assert merge_features([b, a]).values.tolist() == merged.values.tolist()


def test_merge_column_mismatch(rng):
    g = random_graph(rng, 4, 3, 5)
    a = _matrix(("x",), [[1], [0], [0]], g)
    b = _matrix(("y",), [[0], [2], [0]], g)
    with pytest.raises(EngineInvariantError, match="column mismatch"):
        merge_features([a, b])


def test_eight_way_split_equals_one_way(rng):
    g = random_graph(rng, 20, 409, 70)
    plans = all_builtin_plans(g, 25)
    whole = mine(g, plans, workers=1)
    split = mine(g, plans, workers=8)
    assert np.array_equal(whole.values, split.values)


# --- properties -----------------------------------------------------------------

def test_window_monotonicity(rng):
    for _ in range(6):
        g = random_graph(rng, 14, 150, 60)
        d1 = rng.randrange(0, 25)
        d2 = d1 + rng.randrange(1, 30)
        m1 = mine(g, all_builtin_plans(g, d1))
        m2 = mine(g, all_builtin_plans(g, d2))
        assert np.all(m2.values >= m1.values)


def test_zero_delta_strictly_increasing_graph(rng):
    edges = []
    for t in range(60):
        u = rng.randrange(8)
        v = (u + 1 + rng.randrange(7)) % 8
        edges.append((u, v, t))
    g = graph_from_edges(edges)
    m = mine(g, all_builtin_plans(g, 0))
    assert np.all(m.column("cycle_2") == 0)
    assert np.all(m.column("cycle_3") == 0)
    assert np.all(m.column("cycle_4") == 0)
    assert np.all(m.column("sg_count") == 0)
    # a delta=0 window still contains the trigger's own timestamp
    assert np.all(m.column("deg_out_src") >= 1)


def test_structural_fuzziness_single_pass_covers_all_sizes(rng):
    # one mining pass at min_size K matches summing exact-size brute counts
    g = graph_from_edges([(0, 2, 1), (0, 3, 2), (0, 4, 3), (0, 5, 4),
                          (2, 1, 5), (3, 1, 6), (4, 1, 7), (5, 1, 8)])
    delta, k = 20, 2
    engine_count = mine(g, [compile_pattern(builtin_with("sg_count", delta, min_size=k))])
    # brute force per exact intermediate-set size, then sum sizes >= k
    per_size = {}
    for size in range(1, 6):
        lo = mine(g, [compile_pattern(builtin_with("sg_count", delta, min_size=size))])
        per_size[size] = lo.column("sg_count").astype(int)
    # sources with exactly `size` intermediates = (count at >=size) - (count at >=size+1)
    exact_sums = sum(per_size[s] - per_size.get(s + 1, per_size[5] * 0) for s in range(k, 5))
    assert np.array_equal(engine_count.column("sg_count"), per_size[k])
    assert np.array_equal(exact_sums, per_size[k])


def test_hinted_equals_generic_random(rng):
    for _ in range(4):
        g = random_graph(rng, 16, 220, 50)
        delta = rng.randrange(1, 40)
        hinted = mine(g, all_builtin_plans(g, delta))
        generic = mine(g, all_builtin_plans(g, delta, force_generic=True))
        assert np.array_equal(hinted.values, generic.values)


def test_forward_window_custom_vs_oracle(rng):
    g = random_graph(rng, 10, 90, 30)
    vp = load_custom("stack_forward", delta=10)
    got = mine(g, [compile_pattern(vp, g.stats)]).column("stack_forward")
    want = enumerate_bruteforce(g, vp)
    assert np.array_equal(got, want)


def test_csv_export_shape(rng, tmp_path):
    g = random_graph(rng, 8, 25, 12)
    m = mine(g, all_builtin_plans(g, 6))
    out = tmp_path / "f.csv"
    m.to_csv(str(out))
    lines = out.read_text().splitlines()
    assert lines[0] == ("edge_id,src,dst,timestamp,label," + ",".join(BUILTIN_COLUMNS))
    assert len(lines) == 26
    first = lines[1].split(",")
    assert first[0] == "0" and first[4] == ""  # unlabeled -> empty field
