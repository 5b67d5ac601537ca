"""Pattern language: parsing, validation, printing, totality."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempmine import dsl
from tempmine.dsl import (
    Diagnostic,
    PatternParseError,
    ValidatedPattern,
    format_pattern,
    must_validate,
    parse_pattern,
    validate,
)
from tempmine.plan import BUILTIN_COLUMNS, load_builtin, builtin_pattern_text

SCATTER_GATHER_TEXT = """
pattern: sg
delta: 600

stage:
  op: for_all
  src: N0.in_neigh
  dst_var: N2
  skip_if: N2 == N1

stage:
  op: intersect
  src: N2.out_neigh, N1.in_neigh
  dst_var: M

emit:
  mode: source_count
  min_size: 2
  target: M
"""

FOUR_CYCLE_TEXT = """
pattern: c4
delta: 600

stage:
  op: for_all
  src: N1.out_neigh
  dst_var: N2
  skip_if: N2 == N0

stage:
  op: intersect
  src: N2.out_neigh, N0.in_neigh
  dst_var: N3
  skip_if: N3 == N1

emit:
  mode: set_cardinality
  target: N3
"""


def test_parse_scatter_gather_two_stages():
    spec = parse_pattern(SCATTER_GATHER_TEXT)
    assert len(spec.stages) == 2
    assert spec.stages[0].op == "for_all"
    assert spec.stages[1].op == "intersect"
    assert spec.stages[1].inputs[0].base == "N2"
    assert spec.emit.min_size == 2
    vp = must_validate(spec)
    assert isinstance(vp, ValidatedPattern)
    assert vp.stage_parent == (-1, 0)
    assert vp.stage_driver == (None, "N2")
    assert vp.operand_symbols == (("e1",), ("e2", "e3"))


def test_parse_four_cycle():
    spec = parse_pattern(FOUR_CYCLE_TEXT)
    assert len(spec.stages) == 2
    vp = must_validate(spec)
    assert vp.enclosure == ((), (0,))


def test_parse_empty_stages_is_error():
    with pytest.raises(PatternParseError, match="no stages"):
        parse_pattern("pattern: x\ndelta: 5\nemit:\n  mode: set_cardinality\n  target: A\n")


def test_parse_missing_delta():
    with pytest.raises(PatternParseError, match="delta"):
        parse_pattern("pattern: x\nstage:\n  op: for_all\n  src: N0.out_neigh\n"
                      "  dst_var: A\nemit:\n  mode: set_cardinality\n  target: A\n")


def test_parse_unknown_op_lists_legal_ops():
    bad = SCATTER_GATHER_TEXT.replace("op: for_all", "op: wander")
    with pytest.raises(PatternParseError) as err:
        parse_pattern(bad)
    assert "legal ops" in str(err.value) and "intersect" in str(err.value)


def test_parse_unknown_key_rejected():
    bad = SCATTER_GATHER_TEXT.replace("delta: 600", "delta: 600\nflavor: spicy")
    with pytest.raises(PatternParseError, match="unknown key 'flavor'"):
        parse_pattern(bad)


def test_parse_diagnostics_carry_positions():
    try:
        parse_pattern("pattern: ok\ndelta: nope\n")
    except PatternParseError as err:
        lines = [d.line for d in err.diagnostics if d.line is not None]
        assert 2 in lines
    else:
        pytest.fail("expected a parse error")


def test_validate_undefined_operand():
    bad = SCATTER_GATHER_TEXT.replace("N2.out_neigh", "N5.out_neigh")
    diags = validate(parse_pattern(bad))
    assert isinstance(diags, list)
    assert any("undefined operand N5 at stage 1" in d.message for d in diags)


def test_validate_intersect_arity():
    bad = FOUR_CYCLE_TEXT.replace("src: N2.out_neigh, N0.in_neigh", "src: N2.out_neigh")
    diags = validate(parse_pattern(bad))
    assert any("at least two operands" in d.message for d in diags)


def test_validate_duplicate_output_var():
    bad = FOUR_CYCLE_TEXT.replace("dst_var: N3", "dst_var: N2")
    diags = validate(parse_pattern(bad))
    assert any("already bound" in d.message for d in diags)


def test_validate_unknown_emission_target():
    bad = SCATTER_GATHER_TEXT.replace("target: M", "target: Q")
    diags = validate(parse_pattern(bad))
    assert any("not a stage output" in d.message for d in diags)


def test_validate_order_needs_bound_edge():
    bad = SCATTER_GATHER_TEXT.replace("dst_var: M", "dst_var: M\n  order: e9.t <= e0.t")
    diags = validate(parse_pattern(bad))
    assert any("e9" in d.message for d in diags)


def test_validate_break_if_needs_sorted_source():
    text = """
pattern: x
delta: 5
stage:
  op: for_all
  src: N0.out_neigh
  dst_var: A
stage:
  op: differentiate
  src: A.self
  dst_var: B
  break_if: e1.t > t
emit:
  mode: set_cardinality
  target: B
"""
    diags = validate(parse_pattern(text))
    assert any("break_if requires timestamp-sorted iteration" in d.message for d in diags)


def test_validate_scalar_only_node_terms():
    text = SCATTER_GATHER_TEXT.replace("skip_if: N2 == N1", "skip_if: N2 == M")
    diags = validate(parse_pattern(text))
    assert any("unbound variable M" in d.message for d in diags)


def test_round_trip_on_builtins_and_examples():
    specs = [parse_pattern(builtin_pattern_text(name)) for name in BUILTIN_COLUMNS]
    specs.append(parse_pattern(SCATTER_GATHER_TEXT))
    specs.append(parse_pattern(FOUR_CYCLE_TEXT))
    assert len(specs) >= 10
    for spec in specs:
        assert parse_pattern(format_pattern(spec)) == spec


def test_builtin_library_validates():
    for name in BUILTIN_COLUMNS:
        vp = load_builtin(name)
        assert vp.spec.name == name
        assert vp.spec.delta > 0


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=400))
def test_parse_total_on_arbitrary_text(text):
    try:
        spec = parse_pattern(text)
    except PatternParseError:
        return
    result = validate(spec)
    assert isinstance(result, (ValidatedPattern, list))


@settings(max_examples=150, deadline=None)
@given(st.text(alphabet="pattern:delta stage op src dst_var emit N012.#_\n=<>!", max_size=300))
def test_parse_total_on_grammar_shaped_text(text):
    try:
        spec = parse_pattern(text)
    except PatternParseError:
        return
    result = validate(spec)
    assert isinstance(result, (ValidatedPattern, list))


def test_diagnostic_str_format():
    d = Diagnostic("boom", line=3, col=7, stage=1)
    assert str(d) == "[line 3, col 7, stage 1] boom"


def test_validate_never_mutates_spec():
    spec = parse_pattern(SCATTER_GATHER_TEXT)
    before = format_pattern(spec)
    must_validate(spec)
    assert format_pattern(spec) == before
