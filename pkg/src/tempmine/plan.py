"""Lowering of validated patterns into executable plans.

A plan is a sequence of loop cells (one per stage) with resolved operand
descriptors, dense output slots, compiled predicate groups and window
anchors. Cells form a loop tree via `parent`; the engine interprets the tree
directly, and structurally recognized plans additionally carry a kernel hint
that selects a specialized fast path with identical observable output.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from . import dsl
from .dsl import ConstraintExpr, ValidatedPattern
from .txgraph import GraphStats

GENERIC = "GENERIC"
FAN = "FAN"
DEGREE = "DEGREE"
CYCLE_2 = "CYCLE_2"
CYCLE_3 = "CYCLE_3"
CYCLE_4 = "CYCLE_4"
SCATTER_GATHER = "SCATTER_GATHER"
STACK = "STACK"

BUILTIN_COLUMNS = (
    "fan_in", "fan_out",
    "deg_in_src", "deg_out_src", "deg_in_dst", "deg_out_dst",
    "cycle_2", "cycle_3", "cycle_4",
    "sg_count", "stack_count",
)


class CompilerInvariantError(RuntimeError):
    """Internal inconsistency after validation; never a silent miscompile."""


@dataclass(frozen=True)
class OperandDesc:
    """A resolved stage input.

    kind: "scalar" (singleton trigger endpoint), "adj" (windowed adjacency
    of a scalar-bound variable), "member_adj" (adjacency per member of a
    prior stage's set; the nested driver), or "set" (materialized set).
    """

    kind: str
    base: str
    slot: int  # slot of the referenced set, -1 for trigger endpoints
    direction: str = ""  # "in" | "out" for adjacency kinds
    symbol: str | None = None

    def render(self) -> str:
        sym = f"{self.symbol} = " if self.symbol else ""
        where = f"{self.base}@{self.slot}" if self.slot >= 0 else self.base
        dirpart = f" {self.direction}" if self.direction else ""
        return f"{sym}{self.kind}{dirpart} {where}"


@dataclass(frozen=True)
class LoopCell:
    op: str
    src: tuple[OperandDesc, ...]
    dst_slot: int
    dst_var: str
    parent: int  # parent cell index, -1 at trigger level
    skip_preds: tuple[ConstraintExpr, ...]
    order_preds: tuple[ConstraintExpr, ...]
    window_lo: str  # "t-delta" | "t"
    window_hi: str  # "t" | "t+delta"


@dataclass(frozen=True)
class CompiledEmission:
    mode: str
    min_size: int
    target_slots: tuple[int, ...]
    target_vars: tuple[str, ...]


@dataclass(frozen=True)
class ExecutionPlan:
    name: str
    delta: int
    cells: tuple[LoopCell, ...]
    slot_count: int
    emission: CompiledEmission
    kernel_hint: str
    attribution: str


def _resolve_operand(operand: dsl.OperandExpr, defining: dict[str, int],
                     symbol: str | None) -> OperandDesc:
    is_trigger = operand.base in dsl.TRIGGER_VARS
    if operand.accessor == dsl.SELF:
        if is_trigger:
            return OperandDesc("scalar", operand.base, -1)
        return OperandDesc("set", operand.base, defining[operand.base])
    direction = "in" if operand.accessor == dsl.IN_NEIGH else "out"
    if is_trigger:
        return OperandDesc("adj", operand.base, -1, direction, symbol)
    return OperandDesc("member_adj", operand.base, defining[operand.base], direction, symbol)


def order_intersection(operands: tuple[OperandDesc, ...],
                       stats: GraphStats | None) -> tuple[OperandDesc, ...]:
    """Sort intersect operands so the expected-smallest set drives.

    Scalars (size 1) come first, then materialized sets, then adjacency
    operands sized by the per-direction mean degree when stats are given.
    Ties keep the original order; the result is always a permutation and
    intersection output is invariant under it.
    """

    def estimate(idx_op: tuple[int, OperandDesc]) -> tuple[float, int]:
        idx, op = idx_op
        if op.kind == "scalar":
            size = 1.0
        elif op.kind == "set":
            size = 4.0  # stage outputs are typically small vs adjacency
        elif stats is not None:
            size = stats.mean_in_degree if op.direction == "in" else stats.mean_out_degree
            size = max(size, 4.0)
        else:
            size = 64.0 if op.direction == "in" else 64.5  # in before out, after sets
        return (size, idx)

    ranked = sorted(enumerate(operands), key=estimate)
    return tuple(op for _, op in ranked)


def compile_pattern(pattern: ValidatedPattern, stats: GraphStats | None = None,
                    force_generic: bool = False) -> ExecutionPlan:
    """Lower a validated pattern to an ExecutionPlan.

    Deterministic: the same pattern and stats yield an identical plan (and
    an identical debug dump). Kernel hints never change results, only the
    execution path, and `force_generic` disables them for differential
    testing.
    """
    spec = pattern.spec
    defining = pattern.defining_stage
    cells = []
    for i, stage in enumerate(spec.stages):
        operands = tuple(
            _resolve_operand(op, defining, pattern.operand_symbols[i][j])
            for j, op in enumerate(stage.inputs)
        )
        if stage.op == dsl.INTERSECT:
            operands = order_intersection(operands, stats)
        skip = tuple(c for c in stage.constraints if c.kind == dsl.SKIP_IF)
        order = tuple(c for c in stage.constraints if c.kind == dsl.ORDER)
        window_lo, window_hi = ("t", "t+delta") if stage.window == "forward" else ("t-delta", "t")
        cells.append(LoopCell(
            op=stage.op,
            src=operands,
            dst_slot=i,
            dst_var=stage.output_var,
            parent=pattern.stage_parent[i],
            skip_preds=skip,
            order_preds=order,
            window_lo=window_lo,
            window_hi=window_hi,
        ))
        for desc in operands:
            if desc.slot >= i:
                raise CompilerInvariantError(
                    f"cell {i} reads slot {desc.slot} before it is written")

    emit = spec.emit
    try:
        target_slots = tuple(defining[tv] for tv in emit.targets)
    except KeyError as exc:  # unreachable post-validate
        raise CompilerInvariantError(f"emission target {exc} has no slot") from exc

    hint = GENERIC if force_generic else lower_builtin(pattern)
    return ExecutionPlan(
        name=spec.name,
        delta=spec.delta,
        cells=tuple(cells),
        slot_count=len(spec.stages),
        emission=CompiledEmission(emit.mode, emit.min_size, target_slots, emit.targets),
        kernel_hint=hint,
        attribution=spec.attribution,
    )


# ---------------------------------------------------------------------------
# Builtin recognition (alpha-insensitive structural matching)


def _canonical_term(term: dsl.Term, stage_var: str, loop_vars: dict[str, int]) -> tuple:
    if term.kind == "node":
        if term.name in dsl.TRIGGER_VARS:
            return ("node", term.name)
        if term.name == stage_var:
            return ("node", "$cand")
        if term.name in loop_vars:
            return ("node", f"$loop{loop_vars[term.name]}")
        return ("node", "$unknown")
    if term.kind in ("edge", "etime", "eattr"):
        return (term.kind, term.name, term.attr)
    return (term.kind, term.value)


def _canonical_shape(pattern: ValidatedPattern) -> tuple:
    """Structure of a pattern with all analyst-chosen names erased."""
    spec = pattern.spec
    defining = pattern.defining_stage
    shape = []
    for i, stage in enumerate(spec.stages):
        loop_vars = {spec.stages[a].output_var: a for a in pattern.enclosure[i]}
        ops = []
        for operand in stage.inputs:
            base = operand.base if operand.base in dsl.TRIGGER_VARS else f"$s{defining[operand.base]}"
            ops.append((base, operand.accessor))
        cons = []
        for c in stage.constraints:
            if c.kind == dsl.BREAK_IF:
                continue  # realized by the window anchor
            lhs = _canonical_term(c.lhs, stage.output_var, loop_vars)
            rhs = _canonical_term(c.rhs, stage.output_var, loop_vars)
            if c.op in ("==", "!=") and rhs < lhs:
                lhs, rhs = rhs, lhs
            cons.append((c.kind, lhs, c.op, rhs))
        shape.append((stage.op, tuple(ops), tuple(sorted(cons)), stage.window))
    return (tuple(shape), spec.emit.mode, len(spec.emit.targets))


_BUILTIN_HINTS = {
    "fan_in": FAN, "fan_out": FAN,
    "deg_in_src": DEGREE, "deg_out_src": DEGREE,
    "deg_in_dst": DEGREE, "deg_out_dst": DEGREE,
    "cycle_2": CYCLE_2, "cycle_3": CYCLE_3, "cycle_4": CYCLE_4,
    "sg_count": SCATTER_GATHER, "stack_count": STACK,
}

_SHAPE_TABLE: dict[tuple, str] | None = None


def builtin_pattern_text(name: str) -> str:
    """Source text of a shipped builtin pattern file."""
    return resources.files("tempmine.patterns").joinpath(f"{name}.pat").read_text("utf-8")


def load_builtin(name: str) -> ValidatedPattern:
    if name not in _BUILTIN_HINTS:
        raise KeyError(f"no builtin pattern {name!r}")
    return dsl.must_validate(dsl.parse_pattern(builtin_pattern_text(name)))


def _shape_table() -> dict[tuple, str]:
    global _SHAPE_TABLE
    if _SHAPE_TABLE is None:
        table = {}
        for name, hint in _BUILTIN_HINTS.items():
            table[_canonical_shape(load_builtin(name))] = hint
        _SHAPE_TABLE = table
    return _SHAPE_TABLE


def lower_builtin(pattern: ValidatedPattern) -> str:
    """Kernel hint for structurally recognized patterns, GENERIC otherwise."""
    return _shape_table().get(_canonical_shape(pattern), GENERIC)


# ---------------------------------------------------------------------------
# Debug dump


def dump_plan(plan: ExecutionPlan) -> str:
    """Human-readable plan dump with stable ordering (golden-file friendly)."""
    lines = [
        f"plan {plan.name}",
        f"delta {plan.delta}",
        f"attribution {plan.attribution}",
        f"hint {plan.kernel_hint}",
        f"slots {plan.slot_count}",
    ]
    for i, cell in enumerate(plan.cells):
        lines.append(
            f"cell {i}: {cell.op} parent={cell.parent} "
            f"window=[{cell.window_lo},{cell.window_hi}] dst {cell.dst_var}@{cell.dst_slot}"
        )
        for desc in cell.src:
            lines.append(f"  operand {desc.render()}")
        for pred in cell.skip_preds:
            lines.append(f"  skip {pred.render()}")
        for pred in cell.order_preds:
            lines.append(f"  order {pred.render()}")
    emission = plan.emission
    targets = ", ".join(f"{v}@{s}" for v, s in zip(emission.target_vars, emission.target_slots))
    lines.append(f"emit {emission.mode} min_size={emission.min_size} targets={targets}")
    return "\n".join(lines) + "\n"
