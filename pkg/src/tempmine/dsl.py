"""The multi-stage pattern language: types, parser, validator, printer.

A pattern anchors on a trigger edge e0 = (N0 -> N1, t) and advances through
stages, each a set operation over node sets. The concrete grammar is
line-oriented (keys: pattern/delta/attribution/stage/op/src/dst_var/skip_if/
break_if/order/window/emit/mode/min_size/target) and documented normatively
in docs/pattern_grammar.md together with the execution semantics.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

FOR_ALL = "for_all"
INTERSECT = "intersect"
UNION = "union"
DIFFERENTIATE = "differentiate"
STAGE_OPS = (FOR_ALL, INTERSECT, UNION, DIFFERENTIATE)

SET_CARDINALITY = "set_cardinality"
SOURCE_COUNT = "source_count"
PAIR_PRODUCT = "pair_product"
EDGE_COUNT = "edge_count"
INSTANCE_LIST = "instance_list"
EMIT_MODES = (SET_CARDINALITY, SOURCE_COUNT, PAIR_PRODUCT, EDGE_COUNT, INSTANCE_LIST)

SKIP_IF = "skip_if"
BREAK_IF = "break_if"
ORDER = "order"

IN_NEIGH = "in_neigh"
OUT_NEIGH = "out_neigh"
SELF = "self"
ACCESSORS = (IN_NEIGH, OUT_NEIGH, SELF)

TRIGGER_VARS = ("N0", "N1")
TRIGGER_EDGE = "e0"

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_EDGE_SYM = re.compile(r"^e[0-9]+$")
_NUMBER = re.compile(r"^-?[0-9]+(\.[0-9]+)?$")


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: int | None = None
    col: int | None = None
    stage: int | None = None

    def __str__(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.col is not None:
            where.append(f"col {self.col}")
        if self.stage is not None:
            where.append(f"stage {self.stage}")
        prefix = f"[{', '.join(where)}] " if where else ""
        return prefix + self.message


class PatternParseError(ValueError):
    """Syntax error(s) in a pattern document."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class PatternValidationError(ValueError):
    """Raised by helpers that need a ValidatedPattern and got diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Term:
    """One side of a constraint comparison.

    kind: node (variable), edge (identity of eK), etime (eK.t),
    trigger_time (bare t), window_end (t + delta), eattr (eK.amount /
    eK.currency), number, or string.
    """

    kind: str
    name: str = ""
    attr: str = ""
    value: float | str = 0

    def render(self) -> str:
        if self.kind == "node" or self.kind == "edge":
            return self.name
        if self.kind == "etime":
            return f"{self.name}.t"
        if self.kind == "trigger_time":
            return "t"
        if self.kind == "window_end":
            return "t + delta"
        if self.kind == "eattr":
            return f"{self.name}.{self.attr}"
        if self.kind == "number":
            v = self.value
            return str(int(v)) if float(v).is_integer() else str(v)
        return '"' + str(self.value) + '"'


@dataclass(frozen=True)
class ConstraintExpr:
    kind: str  # skip_if | break_if | order
    lhs: Term
    op: str  # == != <= < >= >
    rhs: Term

    def render(self) -> str:
        return f"{self.lhs.render()} {self.op} {self.rhs.render()}"


@dataclass(frozen=True)
class OperandExpr:
    base: str
    accessor: str

    def render(self) -> str:
        return f"{self.base}.{self.accessor}"


@dataclass(frozen=True)
class StageSpec:
    op: str
    inputs: tuple[OperandExpr, ...]
    constraints: tuple[ConstraintExpr, ...]
    output_var: str
    window: str = "backward"  # backward -> [t-delta, t]; forward -> [t, t+delta]


@dataclass(frozen=True)
class EmissionRule:
    mode: str
    targets: tuple[str, ...]
    min_size: int = 1


@dataclass(frozen=True)
class PatternSpec:
    name: str
    delta: int
    stages: tuple[StageSpec, ...]
    emit: EmissionRule
    attribution: str = "trigger"


@dataclass(frozen=True, eq=False)
class ValidatedPattern:
    """A PatternSpec plus the resolved loop structure the executor needs.

    stage_parent[i]   index of the stage whose output set stage i iterates
                      member-wise (-1 when stage i runs at trigger level).
    stage_driver[i]   the variable being iterated (None at trigger level).
    enclosure[i]      chain of ancestor stage indices, outermost first.
    operand_symbols[i][j]  edge symbol ("e1", ...) of adjacency operand j of
                      stage i, None for `self` operands. e0 is the trigger.
    defining_stage    output variable name -> stage index.
    """

    spec: PatternSpec
    stage_parent: tuple[int, ...]
    stage_driver: tuple[str | None, ...]
    enclosure: tuple[tuple[int, ...], ...]
    operand_symbols: tuple[tuple[str | None, ...], ...]
    defining_stage: dict[str, int] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def delta(self) -> int:
        return self.spec.delta

    @property
    def stages(self) -> tuple[StageSpec, ...]:
        return self.spec.stages

    @property
    def emit(self) -> EmissionRule:
        return self.spec.emit


# ---------------------------------------------------------------------------
# Parsing


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out)


def _parse_term(text: str, line: int, col: int, diags: list[Diagnostic]) -> Term | None:
    text = text.strip()
    if not text:
        diags.append(Diagnostic("empty term in constraint", line, col))
        return None
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return Term("string", value=text[1:-1])
    if text == "t":
        return Term("trigger_time")
    normalized = text.replace(" ", "")
    if normalized == "t+delta":
        return Term("window_end")
    if _NUMBER.match(text):
        return Term("number", value=float(text))
    if "." in text:
        base, _, attr = text.partition(".")
        base, attr = base.strip(), attr.strip()
        if not _EDGE_SYM.match(base):
            diags.append(Diagnostic(f"expected an edge symbol before '.', got {base!r}", line, col))
            return None
        if attr == "t":
            return Term("etime", name=base)
        if attr in ("amount", "currency"):
            return Term("eattr", name=base, attr=attr)
        diags.append(Diagnostic(f"unknown edge attribute {attr!r} (expected t, amount or currency)", line, col))
        return None
    if _EDGE_SYM.match(text):
        return Term("edge", name=text)
    if _IDENT.match(text):
        return Term("node", name=text)
    diags.append(Diagnostic(f"cannot parse term {text!r}", line, col))
    return None


_CMP_OPS = ("==", "!=", "<=", ">=", "<", ">")


def _parse_constraint(kind: str, value: str, line: int, col: int, diags: list[Diagnostic]) -> ConstraintExpr | None:
    for op in _CMP_OPS:
        if op in value:
            lhs_text, _, rhs_text = value.partition(op)
            lhs = _parse_term(lhs_text, line, col, diags)
            rhs = _parse_term(rhs_text, line, col + len(lhs_text) + len(op), diags)
            if lhs is None or rhs is None:
                return None
            return ConstraintExpr(kind, lhs, op, rhs)
    diags.append(Diagnostic(f"no comparison operator in {value!r}", line, col))
    return None


def _parse_operand(text: str, line: int, col: int, diags: list[Diagnostic]) -> OperandExpr | None:
    text = text.strip()
    if "." in text:
        base, _, accessor = text.partition(".")
        base, accessor = base.strip(), accessor.strip()
    else:
        base, accessor = text, SELF
    if not _IDENT.match(base):
        diags.append(Diagnostic(f"bad operand base {base!r}", line, col))
        return None
    if accessor not in ACCESSORS:
        diags.append(Diagnostic(
            f"unknown accessor {accessor!r} (expected {', '.join(ACCESSORS)})", line, col))
        return None
    return OperandExpr(base, accessor)


class _StageDraft:
    def __init__(self, line: int):
        self.line = line
        self.op: str | None = None
        self.inputs: list[OperandExpr] = []
        self.constraints: list[ConstraintExpr] = []
        self.output_var: str | None = None
        self.window = "backward"


class _EmitDraft:
    def __init__(self, line: int):
        self.line = line
        self.mode: str | None = None
        self.min_size = 1
        self.targets: list[str] = []


def parse_pattern(text: str) -> PatternSpec:
    """Parse one pattern document; raises PatternParseError on any defect.

    Total on arbitrary input: every byte string either returns a PatternSpec
    or raises PatternParseError carrying position-annotated diagnostics.
    """
    diags: list[Diagnostic] = []
    name: str | None = None
    delta: int | None = None
    attribution = "trigger"
    stages: list[_StageDraft] = []
    emit: _EmitDraft | None = None
    section: _StageDraft | _EmitDraft | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        key = key.strip()
        if not sep:
            diags.append(Diagnostic(f"expected 'key: value', got {line!r}", lineno, 1))
            continue
        value = value.strip()
        vcol = raw.find(":") + 2

        if key == "stage":
            section = _StageDraft(lineno)
            stages.append(section)
            continue
        if key == "emit":
            if emit is not None:
                diags.append(Diagnostic("duplicate emit section", lineno, 1))
            section = _EmitDraft(lineno)
            emit = section
            continue

        if isinstance(section, _StageDraft):
            st = section
            if key == "op":
                if value not in STAGE_OPS:
                    diags.append(Diagnostic(
                        f"unknown op {value!r} (legal ops: {', '.join(STAGE_OPS)})", lineno, vcol))
                else:
                    st.op = value
            elif key == "src":
                for part in value.split(","):
                    operand = _parse_operand(part, lineno, vcol, diags)
                    if operand is not None:
                        st.inputs.append(operand)
            elif key == "dst_var":
                if not _IDENT.match(value):
                    diags.append(Diagnostic(f"bad output variable name {value!r}", lineno, vcol))
                else:
                    st.output_var = value
            elif key in (SKIP_IF, BREAK_IF, ORDER):
                cons = _parse_constraint(key, value, lineno, vcol, diags)
                if cons is not None:
                    st.constraints.append(cons)
            elif key == "window":
                if value not in ("backward", "forward"):
                    diags.append(Diagnostic(f"window must be backward or forward, got {value!r}", lineno, vcol))
                else:
                    st.window = value
            else:
                diags.append(Diagnostic(f"unknown stage key {key!r}", lineno, 1))
        elif isinstance(section, _EmitDraft):
            em = section
            if key == "mode":
                if value not in EMIT_MODES:
                    diags.append(Diagnostic(
                        f"unknown emission mode {value!r} (legal: {', '.join(EMIT_MODES)})", lineno, vcol))
                else:
                    em.mode = value
            elif key == "min_size":
                try:
                    em.min_size = int(value)
                except ValueError:
                    diags.append(Diagnostic(f"min_size must be an integer, got {value!r}", lineno, vcol))
            elif key == "target":
                for part in value.split(","):
                    part = part.strip()
                    if not _IDENT.match(part):
                        diags.append(Diagnostic(f"bad target variable {part!r}", lineno, vcol))
                    else:
                        em.targets.append(part)
            else:
                diags.append(Diagnostic(f"unknown emit key {key!r}", lineno, 1))
        else:
            if key == "pattern":
                if not _IDENT.match(value):
                    diags.append(Diagnostic(f"bad pattern name {value!r}", lineno, vcol))
                else:
                    name = value
            elif key == "delta":
                try:
                    delta = int(value)
                except ValueError:
                    diags.append(Diagnostic(f"delta must be an integer tick count, got {value!r}", lineno, vcol))
            elif key == "attribution":
                if value not in ("trigger", "members"):
                    diags.append(Diagnostic(f"attribution must be trigger or members, got {value!r}", lineno, vcol))
                else:
                    attribution = value
            else:
                diags.append(Diagnostic(f"unknown key {key!r}", lineno, 1))

    if name is None:
        diags.append(Diagnostic("missing 'pattern:' name"))
    if delta is None:
        diags.append(Diagnostic("missing 'delta:'"))
    elif delta < 0:
        diags.append(Diagnostic(f"delta must be non-negative, got {delta}"))
    if not stages:
        diags.append(Diagnostic("pattern has no stages"))
    if emit is None:
        diags.append(Diagnostic("missing 'emit:' section"))
    else:
        if emit.mode is None:
            diags.append(Diagnostic("emit section missing 'mode:'", emit.line))
        if not emit.targets:
            diags.append(Diagnostic("emit section missing 'target:'", emit.line))

    built_stages = []
    for i, st in enumerate(stages):
        if st.op is None:
            diags.append(Diagnostic("stage missing 'op:'", st.line, stage=i))
        if not st.inputs:
            diags.append(Diagnostic("stage missing 'src:'", st.line, stage=i))
        if st.output_var is None:
            diags.append(Diagnostic("stage missing 'dst_var:'", st.line, stage=i))
        if st.op and st.inputs and st.output_var:
            built_stages.append(StageSpec(st.op, tuple(st.inputs), tuple(st.constraints),
                                          st.output_var, st.window))
    if diags:
        raise PatternParseError(diags)
    assert name is not None and delta is not None and emit is not None and emit.mode is not None
    return PatternSpec(name, delta, tuple(built_stages),
                       EmissionRule(emit.mode, tuple(emit.targets), emit.min_size), attribution)


# ---------------------------------------------------------------------------
# Validation


def _is_trigger(var: str) -> bool:
    return var in TRIGGER_VARS


def validate(spec: PatternSpec) -> "ValidatedPattern | list[Diagnostic]":
    """Check cross-stage consistency; returns diagnostics instead of raising.

    Verified rules: operand bases defined before use, unique output vars,
    op arities, one nested driver per stage, scope visibility of set
    references, edge symbols bound before ORDER/skip references, emission
    targets, and window/break_if agreement.
    """
    diags: list[Diagnostic] = []
    defining: dict[str, int] = {}
    symbols: list[list[str | None]] = []
    drivers: list[str | None] = []
    parents: list[int] = []
    enclosures: list[tuple[int, ...]] = []
    next_symbol = 1
    if spec.delta < 0:
        diags.append(Diagnostic(f"delta must be non-negative, got {spec.delta}"))
    if spec.emit.min_size < 1:
        diags.append(Diagnostic(f"emit min_size must be >= 1, got {spec.emit.min_size}"))

    for i, stage in enumerate(spec.stages):
        arity = len(stage.inputs)
        if stage.op in (FOR_ALL, DIFFERENTIATE) and arity != 1:
            diags.append(Diagnostic(f"{stage.op} takes exactly one operand, got {arity}", stage=i))
        if stage.op in (INTERSECT, UNION) and arity < 2:
            diags.append(Diagnostic(f"{stage.op} needs at least two operands, got {arity}", stage=i))

        if stage.output_var in defining or _is_trigger(stage.output_var):
            diags.append(Diagnostic(f"output variable {stage.output_var!r} already bound", stage=i))
        if _EDGE_SYM.match(stage.output_var) or stage.output_var == "t":
            diags.append(Diagnostic(f"output variable {stage.output_var!r} shadows a reserved symbol", stage=i))

        stage_syms: list[str | None] = []
        driver: str | None = None
        set_refs: list[str] = []
        for j, operand in enumerate(stage.inputs):
            base_known = _is_trigger(operand.base) or operand.base in defining
            if not base_known:
                diags.append(Diagnostic(f"undefined operand {operand.base} at stage {i}", stage=i))
                stage_syms.append(None)
                continue
            is_set = operand.base in defining
            if operand.accessor == SELF:
                stage_syms.append(None)
                if is_set:
                    set_refs.append(operand.base)
                else:
                    # N0.self / N1.self: a singleton trigger endpoint
                    pass
            else:
                stage_syms.append(f"e{next_symbol}")
                next_symbol += 1
                if is_set:
                    if driver is not None:
                        diags.append(Diagnostic(
                            "at most one operand per stage may iterate a prior stage's set "
                            f"({driver} and {operand.base} both do)", stage=i))
                    driver = operand.base
                    if stage.op == UNION:
                        diags.append(Diagnostic(
                            f"union operands must be materialized sets or trigger adjacency, "
                            f"not member iteration over {operand.base}", stage=i))
            if stage.op == DIFFERENTIATE and operand.accessor != SELF:
                diags.append(Diagnostic("differentiate filters a materialized set; use VAR.self", stage=i))
            if stage.op == DIFFERENTIATE and not is_set:
                diags.append(Diagnostic("differentiate operand must be a prior stage's output", stage=i))

        # Scope: driver fixes the enclosure; set refs must live on its chain.
        if driver is not None:
            d = defining[driver]
            enc = enclosures[d] + (d,)
        else:
            enc = ()
            for ref in set_refs:
                cand = enclosures[defining[ref]]
                if len(cand) > len(enc):
                    enc = cand
        for ref in set_refs:
            ref_enc = enclosures[defining[ref]]
            if ref_enc != enc[: len(ref_enc)]:
                diags.append(Diagnostic(
                    f"set {ref} is not visible from stage {i} (defined in a different loop scope)", stage=i))
        parents.append(enc[-1] if enc else -1)
        enclosures.append(enc)
        drivers.append(driver)
        symbols.append(stage_syms)

        own_syms = {s for s in stage_syms if s}
        visible_syms = {TRIGGER_EDGE} | own_syms
        for anc in enc:
            visible_syms.update(s for s in symbols[anc] if s)
        # Node terms must denote scalars: trigger endpoints, the stage's own
        # candidate variable, or variables bound by enclosing loops.
        visible_nodes = set(TRIGGER_VARS) | {stage.output_var}
        visible_nodes.update(spec.stages[a].output_var for a in enc)

        has_sorted_source = any(op.accessor != SELF for op in stage.inputs)
        for cons in stage.constraints:
            for term in (cons.lhs, cons.rhs):
                if term.kind in ("edge", "etime", "eattr") and term.name not in visible_syms:
                    diags.append(Diagnostic(
                        f"{cons.kind} references edge {term.name} not bound at stage {i}", stage=i))
                if term.kind == "node" and term.name not in visible_nodes:
                    diags.append(Diagnostic(
                        f"{cons.kind} references unbound variable {term.name} at stage {i}", stage=i))
            if cons.kind == SKIP_IF:
                kinds = {cons.lhs.kind, cons.rhs.kind}
                if kinds == {"node"} or kinds == {"edge"}:
                    if cons.op not in ("==", "!="):
                        diags.append(Diagnostic(f"skip_if {cons.render()!r}: identity comparisons use == or !=", stage=i))
                    if kinds == {"edge"}:
                        names = {cons.lhs.name, cons.rhs.name}
                        if TRIGGER_EDGE not in names or not (names - {TRIGGER_EDGE}) <= own_syms:
                            diags.append(Diagnostic(
                                f"skip_if {cons.render()!r}: edge identity compares an own-stage "
                                "edge against the trigger e0", stage=i))
                elif "eattr" in kinds:
                    pass  # attribute predicates; experimental
                else:
                    diags.append(Diagnostic(
                        f"skip_if {cons.render()!r}: expected node, edge-identity or attribute comparison", stage=i))
            elif cons.kind == ORDER:
                ok = {cons.lhs.kind, cons.rhs.kind} <= {"etime", "trigger_time"}
                if not ok or cons.op in ("==", "!="):
                    diags.append(Diagnostic(f"order {cons.render()!r}: expected a time comparison", stage=i))
            elif cons.kind == BREAK_IF:
                if not has_sorted_source:
                    diags.append(Diagnostic(
                        "break_if requires timestamp-sorted iteration; this stage only reads materialized sets",
                        stage=i))
                form_ok = (cons.lhs.kind == "etime" and cons.op == ">" and
                           cons.rhs.kind in ("trigger_time", "window_end"))
                if not form_ok:
                    diags.append(Diagnostic(
                        f"break_if {cons.render()!r}: expected 'eK.t > t' or 'eK.t > t + delta'", stage=i))
                elif cons.rhs.kind == "window_end" and stage.window != "forward":
                    diags.append(Diagnostic(
                        "break_if 'eK.t > t + delta' only matches a forward-window stage", stage=i))

        defining[stage.output_var] = i

    emit = spec.emit
    expected_targets = 2 if emit.mode == PAIR_PRODUCT else 1
    if len(emit.targets) != expected_targets:
        diags.append(Diagnostic(
            f"emission mode {emit.mode} takes {expected_targets} target(s), got {len(emit.targets)}"))
    for tv in emit.targets:
        if tv not in defining:
            diags.append(Diagnostic(f"emission target {tv!r} is not a stage output"))
    if emit.mode == PAIR_PRODUCT and all(tv in defining for tv in emit.targets):
        for tv in emit.targets:
            if enclosures[defining[tv]]:
                diags.append(Diagnostic(
                    f"pair_product target {tv!r} must be computed at trigger level, not inside a loop"))
    if emit.mode == EDGE_COUNT and emit.targets and emit.targets[0] in defining:
        tstage = spec.stages[defining[emit.targets[0]]]
        if tstage.op != FOR_ALL or tstage.inputs[0].accessor == SELF:
            diags.append(Diagnostic("edge_count requires the target stage to be a for_all over adjacency"))

    if diags:
        return diags
    return ValidatedPattern(
        spec=spec,
        stage_parent=tuple(parents),
        stage_driver=tuple(drivers),
        enclosure=tuple(enclosures),
        operand_symbols=tuple(tuple(s) for s in symbols),
        defining_stage=defining,
    )


def must_validate(spec: PatternSpec) -> ValidatedPattern:
    result = validate(spec)
    if isinstance(result, list):
        raise PatternValidationError(result)
    return result


def load_pattern(path: str) -> ValidatedPattern:
    with open(path, "r", encoding="utf-8") as fh:
        spec = parse_pattern(fh.read())
    return must_validate(spec)


# ---------------------------------------------------------------------------
# Printing


def format_pattern(spec: PatternSpec) -> str:
    """Render the canonical textual form; parse(format(spec)) == spec."""
    lines = [f"pattern: {spec.name}", f"delta: {spec.delta}"]
    if spec.attribution != "trigger":
        lines.append(f"attribution: {spec.attribution}")
    for stage in spec.stages:
        lines.append("")
        lines.append("stage:")
        lines.append(f"  op: {stage.op}")
        lines.append(f"  src: {', '.join(op.render() for op in stage.inputs)}")
        lines.append(f"  dst_var: {stage.output_var}")
        if stage.window != "backward":
            lines.append(f"  window: {stage.window}")
        for cons in stage.constraints:
            lines.append(f"  {cons.kind}: {cons.render()}")
    lines.append("")
    lines.append("emit:")
    lines.append(f"  mode: {spec.emit.mode}")
    if spec.emit.min_size != 1:
        lines.append(f"  min_size: {spec.emit.min_size}")
    lines.append(f"  target: {', '.join(spec.emit.targets)}")
    lines.append("")
    return "\n".join(lines)
