"""Plan compiler: lowering, operand ordering, builtin recognition, dumps."""

from pathlib import Path

import pytest

from tempmine import dsl
from tempmine.plan import (
    GENERIC, SCATTER_GATHER, CYCLE_4, FAN, DEGREE, STACK, CYCLE_2, CYCLE_3,
    BUILTIN_COLUMNS, CompilerInvariantError, OperandDesc, compile_pattern,
    dump_plan, load_builtin, lower_builtin, order_intersection,
)
from tempmine.txgraph import GraphStats
from .conftest import builtin_with, random_graph

DATA = Path(__file__).parent / "data"
CUSTOM_DIR = DATA / "custom"

EXPECTED_HINTS = {
    "fan_in": FAN, "fan_out": FAN,
    "deg_in_src": DEGREE, "deg_out_src": DEGREE,
    "deg_in_dst": DEGREE, "deg_out_dst": DEGREE,
    "cycle_2": CYCLE_2, "cycle_3": CYCLE_3, "cycle_4": CYCLE_4,
    "sg_count": SCATTER_GATHER, "stack_count": STACK,
}


def load_custom(name: str) -> dsl.ValidatedPattern:
    spec = dsl.parse_pattern((CUSTOM_DIR / f"{name}.pat").read_text())
    return dsl.must_validate(spec)


def test_scatter_gather_plan_shape():
    plan = compile_pattern(load_builtin("sg_count"))
    assert len(plan.cells) == 2
    assert plan.cells[1].op == dsl.INTERSECT
    assert len(plan.cells[1].src) == 2
    assert plan.kernel_hint == SCATTER_GATHER
    assert plan.emission.mode == dsl.SOURCE_COUNT


def test_cycle4_plan_shape():
    plan = compile_pattern(load_builtin("cycle_4"))
    assert len(plan.cells) == 2
    assert plan.cells[1].op == dsl.INTERSECT
    kinds = {(d.kind, d.direction) for d in plan.cells[1].src}
    assert ("member_adj", "out") in kinds and ("adj", "in") in kinds
    assert plan.kernel_hint == CYCLE_4


def test_builtin_hints():
    for name, expected in EXPECTED_HINTS.items():
        assert compile_pattern(load_builtin(name)).kernel_hint == expected, name


def test_hint_is_name_insensitive():
    vp = load_builtin("cycle_4")
    text = dsl.format_pattern(vp.spec)
    renamed = (text.replace("cycle_4", "ring4")
                   .replace("M", "Hop")
                   .replace("C", "Closer"))
    vp2 = dsl.must_validate(dsl.parse_pattern(renamed))
    assert lower_builtin(vp2) == CYCLE_4


def test_hint_ignores_delta_and_min_size():
    vp = builtin_with("sg_count", delta=123, min_size=9, new_name="weird_sg")
    assert lower_builtin(vp) == SCATTER_GATHER


def test_custom_patterns_are_generic():
    for name in ("spray_union", "filtered_senders", "sg_ordered",
                 "stack_forward", "chain_5cycle"):
        assert compile_pattern(load_custom(name)).kernel_hint == GENERIC, name


def test_force_generic():
    plan = compile_pattern(load_builtin("sg_count"), force_generic=True)
    assert plan.kernel_hint == GENERIC


def test_order_intersection_set_first():
    ops = (
        OperandDesc("adj", "N1", -1, "in", "e1"),
        OperandDesc("set", "S", 0),
    )
    stats = GraphStats(40.0, 40.0, 200.0, 200.0)
    ordered = order_intersection(ops, stats)
    assert ordered[0].kind == "set"
    assert sorted(d.base for d in ordered) == sorted(d.base for d in ops)


def test_order_intersection_stable_on_ties():
    ops = (
        OperandDesc("adj", "N0", -1, "in", "e1"),
        OperandDesc("adj", "N1", -1, "in", "e2"),
    )
    stats = GraphStats(5.0, 5.0, 9.0, 9.0)
    assert order_intersection(ops, stats) == ops


def test_order_intersection_is_permutation(rng):
    kinds = ["scalar", "set", "adj", "member_adj"]
    for _ in range(200):
        ops = tuple(
            OperandDesc(k, f"V{i}", i if k in ("set", "member_adj") else -1,
                        rng.choice(["in", "out"]) if k.endswith("adj") else "",
                        f"e{i+1}" if k.endswith("adj") else None)
            for i, k in enumerate(rng.choices(kinds, k=rng.randrange(2, 5)))
        )
        stats = GraphStats(rng.uniform(1, 100), rng.uniform(1, 100), 100.0, 100.0)
        ordered = order_intersection(ops, stats)
        assert sorted(map(repr, ordered)) == sorted(map(repr, ops))


def test_reordering_never_changes_results(rng):
    # intersection output must be invariant under operand order
    import numpy as np
    from tempmine.engine import mine
    g = random_graph(rng, 20, 150, 60)
    vp = builtin_with("cycle_3", delta=25)
    with_stats = compile_pattern(vp, g.stats)
    without_stats = compile_pattern(vp, None)
    assert np.array_equal(mine(g, [with_stats]).values, mine(g, [without_stats]).values)


def test_compile_is_deterministic():
    vp = load_builtin("sg_count")
    stats = GraphStats(3.0, 4.0, 11.0, 12.0)
    assert dump_plan(compile_pattern(vp, stats)) == dump_plan(compile_pattern(vp, stats))


def test_dump_matches_golden():
    plan = compile_pattern(load_builtin("sg_count"))
    golden = (DATA / "golden_sg_plan.txt").read_text()
    assert dump_plan(plan) == golden


def test_forward_slot_reference_is_compiler_invariant_error():
    # unreachable through validate(); forge a corrupt ValidatedPattern to
    # prove the compiler refuses rather than silently miscompiling
    vp = load_builtin("sg_count")
    corrupt = dsl.ValidatedPattern(
        spec=vp.spec,
        stage_parent=vp.stage_parent,
        stage_driver=vp.stage_driver,
        enclosure=vp.enclosure,
        operand_symbols=vp.operand_symbols,
        defining_stage={"S": 1, "M": 1},
    )
    with pytest.raises(CompilerInvariantError):
        compile_pattern(corrupt)


def test_builtin_columns_complete():
    assert len(BUILTIN_COLUMNS) == 11
    assert BUILTIN_COLUMNS[0] == "fan_in" and BUILTIN_COLUMNS[-1] == "stack_count"
