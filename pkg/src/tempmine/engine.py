"""Plan execution: interpret loop cells over the graph for every trigger edge.

Every edge acts once as the trigger, anchoring the window [t - delta, t]
backward from its own timestamp. The generic interpreter walks the plan's
loop tree exactly as compiled; structurally recognized plans take the
specialized kernel path instead (identical results, asserted by tests). Both
attribution modes are supported: `trigger` increments only the trigger row
of each counted instance, `members` anchors an instance at its temporally
last member edge — (timestamp, edge_id) order — and increments every member
row once.

Workers partition the trigger range into contiguous chunks over the shared
immutable graph; partial accumulators merge by integer sum, so results are
independent of the worker count.
"""

from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dsl, kernels
from .plan import (
    BUILTIN_COLUMNS, CYCLE_2, CYCLE_3, CYCLE_4, DEGREE, FAN, GENERIC,
    SCATTER_GATHER, STACK, ExecutionPlan, LoopCell,
)
from .txgraph import TemporalGraph


class EngineInvariantError(RuntimeError):
    pass


@dataclass(frozen=True)
class InstanceRecord:
    """One concrete matched instance (member_edges includes the trigger)."""

    pattern: str
    trigger_edge: int
    member_edges: tuple[int, ...]
    member_nodes: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "pattern": self.pattern,
            "trigger_edge": self.trigger_edge,
            "member_edges": list(self.member_edges),
            "member_nodes": list(self.member_nodes),
        }


@dataclass
class FeatureMatrix:
    """Per-edge pattern-participation counts plus the edge identity columns."""

    columns: tuple[str, ...]
    values: np.ndarray  # (edge_count, len(columns)) int64
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_time: np.ndarray
    edge_label: np.ndarray  # int8; -1 = unlabeled

    @property
    def edge_count(self) -> int:
        return len(self.edge_src)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def to_csv(self, path: str) -> None:
        """Write edge_id,src,dst,timestamp,label,<features> (UTF-8, LF)."""
        n = self.edge_count
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("edge_id,src,dst,timestamp,label")
            for col in self.columns:
                fh.write("," + col)
            fh.write("\n")
            ids = np.arange(n, dtype=np.int64)
            stacked = np.column_stack(
                [ids, self.edge_src, self.edge_dst, self.edge_time,
                 self.edge_label.astype(np.int64)] + [self.values[:, j] for j in range(len(self.columns))]
            )
            fmt = ",".join(["%d"] * stacked.shape[1])
            has_unlabeled = bool((self.edge_label < 0).any())
            chunk = 65536
            for start in range(0, n, chunk):
                rows = stacked[start:start + chunk].tolist()
                if has_unlabeled:
                    lines = []
                    for row in rows:
                        txt = fmt % tuple(row)
                        if row[4] < 0:
                            parts = txt.split(",")
                            parts[4] = ""
                            txt = ",".join(parts)
                        lines.append(txt)
                else:
                    lines = [fmt % tuple(row) for row in rows]
                fh.write("\n".join(lines))
                fh.write("\n")


def merge_features(partials: list[FeatureMatrix]) -> FeatureMatrix:
    """Elementwise integer sum; ordering-independent."""
    if not partials:
        raise EngineInvariantError("nothing to merge")
    first = partials[0]
    total = first.values.copy()
    for other in partials[1:]:
        if other.columns != first.columns:
            raise EngineInvariantError(
                f"column mismatch in merge: {other.columns} vs {first.columns}")
        if other.values.shape != first.values.shape:
            raise EngineInvariantError("row-count mismatch in merge")
        total += other.values
    return FeatureMatrix(first.columns, total, first.edge_src, first.edge_dst,
                         first.edge_time, first.edge_label)


# ---------------------------------------------------------------------------
# Generic interpreter


@dataclass
class Bindings:
    """Execution context for one trigger: endpoints, loop scalars, slot sets,
    and the qualifying-edge lists currently bound to each edge symbol."""

    trigger: tuple[int, int, int, int]  # (N0, N1, t, edge_id)
    delta: int
    scalars: dict[str, int]
    slots: list
    bound_edges: dict[str, list[tuple[int, int]]]


class _PreparedCell:
    __slots__ = ("cell", "node_preds", "edge_preds", "gate_preds", "order_preds",
                 "children", "own_symbols")

    def __init__(self, cell: LoopCell):
        self.cell = cell
        self.own_symbols = {d.symbol for d in cell.src if d.symbol}
        self.node_preds = []
        self.edge_preds = {}  # own symbol -> [pred]
        self.gate_preds = []  # preds on e0 / ancestor symbols
        for pred in cell.skip_preds:
            kinds = {pred.lhs.kind, pred.rhs.kind}
            if kinds == {"node"}:
                self.node_preds.append(pred)
                continue
            sym = None
            for term in (pred.lhs, pred.rhs):
                if term.kind in ("edge", "etime", "eattr") and term.name in self.own_symbols:
                    sym = term.name
            if sym is not None:
                self.edge_preds.setdefault(sym, []).append(pred)
            else:
                self.gate_preds.append(pred)
        self.order_preds = list(cell.order_preds)
        self.children: list[int] = []


class _PreparedPlan:
    __slots__ = ("plan", "cells", "roots", "target_cells", "needs_instances")

    def __init__(self, plan: ExecutionPlan):
        self.plan = plan
        self.cells = [_PreparedCell(c) for c in plan.cells]
        self.roots = []
        for i, cell in enumerate(plan.cells):
            if cell.parent < 0:
                self.roots.append(i)
            else:
                self.cells[cell.parent].children.append(i)
        self.target_cells = set(plan.emission.target_slots)


def _edge_attr_value(graph: TemporalGraph, eid: int, attr: str):
    if attr == "amount":
        return float(graph.edge_amount[eid])
    return graph.currency_vocab[int(graph.edge_currency[eid])]


def _edge_pred_keeps(graph: TemporalGraph, pred, time_eid: tuple[int, int],
                     trigger_eid: int) -> bool:
    """True when the edge survives the skip predicate (predicate is false)."""
    _, eid = time_eid
    lhs, rhs = pred.lhs, pred.rhs

    def value(term):
        if term.kind == "edge":
            return trigger_eid if term.name == "e0" else eid
        if term.kind == "etime":
            return time_eid[0] if term.name != "e0" else None
        if term.kind == "eattr":
            which = trigger_eid if term.name == "e0" else eid
            return _edge_attr_value(graph, which, term.attr)
        if term.kind == "number":
            return term.value
        if term.kind == "string":
            return term.value
        return None

    a, b = value(lhs), value(rhs)
    holds = _compare(a, b, pred.op)
    return not holds


def _compare(a, b, op: str) -> bool:
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<=":
        return a <= b
    if op == "<":
        return a < b
    if op == ">=":
        return a >= b
    return a > b


def _node_pred_holds(pred, candidate: int, dst_var: str, scalars: dict[str, int]) -> bool:
    def value(term):
        if term.name == dst_var:
            return candidate
        return scalars[term.name]

    return _compare(value(pred.lhs), value(pred.rhs), pred.op)


def _order_satisfiable(order_preds, lists: dict[str, list[int]], t: int) -> bool:
    """Existential check: one timestamp per symbol satisfying every pred."""
    syms = []
    for pred in order_preds:
        for term in (pred.lhs, pred.rhs):
            if term.kind == "etime" and term.name not in syms:
                syms.append(term.name)
    choices: list[list[int]] = []
    for sym in syms:
        lst = lists.get(sym)
        if not lst:
            return False
        choices.append(sorted(set(lst)))

    assignment: dict[str, int] = {}

    def term_value(term):
        if term.kind == "trigger_time":
            return t
        return assignment.get(term.name)

    def consistent() -> bool:
        for pred in order_preds:
            a, b = term_value(pred.lhs), term_value(pred.rhs)
            if a is None or b is None:
                continue
            if not _compare(a, b, pred.op):
                return False
        return True

    def assign(i: int) -> bool:
        if i == len(syms):
            return True
        for value in choices[i]:
            assignment[syms[i]] = value
            if consistent() and assign(i + 1):
                return True
        assignment.pop(syms[i], None)
        return False

    return assign(0)


def _window_of(cell: LoopCell, t: int, delta: int) -> tuple[int, int]:
    lo = t - delta if cell.window_lo == "t-delta" else t
    hi = t if cell.window_hi == "t" else t + delta
    return lo, hi


def _adjacency_map(graph: TemporalGraph, node: int, direction: str, symbol: str,
                   window: tuple[int, int], edge_preds, prepared: _PreparedCell,
                   bindings: Bindings) -> tuple[dict, int]:
    """Windowed adjacency of `node` as {nbr: {symbol: [(t, eid), ...]}}.

    Self-loops are skipped; edge-level skip predicates are applied per entry.
    Also returns the surviving iteration count (for edge_count emission).
    """
    if direction == "out":
        p0, p1 = graph.out_indptr[node], graph.out_indptr[node + 1]
        nbr, times, eids = graph.out_nbr[p0:p1], graph.out_time[p0:p1], graph.out_eid[p0:p1]
    else:
        p0, p1 = graph.in_indptr[node], graph.in_indptr[node + 1]
        nbr, times, eids = graph.in_nbr[p0:p1], graph.in_time[p0:p1], graph.in_eid[p0:p1]
    lo = int(np.searchsorted(times, window[0], side="left"))
    hi = int(np.searchsorted(times, window[1], side="right"))
    result: dict[int, dict[str, list[tuple[int, int]]]] = {}
    survivors = 0
    preds = edge_preds.get(symbol, ())
    trig_eid = bindings.trigger[3]
    for n, tt, eid in zip(nbr[lo:hi].tolist(), times[lo:hi].tolist(), eids[lo:hi].tolist()):
        if n == node:
            continue  # self-loops never extend a pattern
        keep = True
        for pred in preds:
            if not _edge_pred_keeps(graph, pred, (tt, eid), trig_eid):
                keep = False
                break
        if not keep:
            continue
        survivors += 1
        entry = result.setdefault(n, {})
        entry.setdefault(symbol, []).append((tt, eid))
    return result, survivors


def _merge_lists(into: dict, lists: dict) -> None:
    for sym, lst in lists.items():
        into.setdefault(sym, []).extend(lst)


def execute_cell(cell: LoopCell, bindings: Bindings, graph: TemporalGraph,
                 prepared: _PreparedCell | None = None) -> tuple[dict, int]:
    """Evaluate one loop cell under the given bindings.

    Returns ({node: {symbol: [(time, edge_id), ...]}}, surviving_iterations).
    Node keys form the stage's output set (already deduplicated); the edge
    lists record which adjacency entries admitted each node, keyed by the
    operand's edge symbol.
    """
    prepared = prepared or _PreparedCell(cell)
    t = bindings.trigger[2]
    window = _window_of(cell, t, bindings.delta)

    # Gate predicates reference e0 or enclosing bindings: when such a
    # predicate rejects every bound edge of its symbol, nothing iterates.
    for pred in prepared.gate_preds:
        target_sym = None
        for term in (pred.lhs, pred.rhs):
            if term.kind in ("edge", "etime", "eattr"):
                target_sym = term.name
        lst = bindings.bound_edges.get(target_sym, [])
        kept = [te for te in lst if _edge_pred_keeps(graph, pred, te, bindings.trigger[3])]
        if not kept:
            return {}, 0

    const_skip = False
    candidate_preds = []
    for pred in prepared.node_preds:
        if pred.lhs.name != cell.dst_var and pred.rhs.name != cell.dst_var:
            if _node_pred_holds(pred, 0, "", bindings.scalars):
                const_skip = True
        else:
            candidate_preds.append(pred)
    if const_skip:
        return {}, 0

    operand_maps: list[dict] = []
    survivors = 0
    for desc in cell.src:
        if desc.kind == "scalar":
            node = bindings.scalars[desc.base]
            operand_maps.append({node: {}})
        elif desc.kind == "set":
            if desc.base in bindings.scalars:
                bound = bindings.scalars[desc.base]
                stored = bindings.slots[desc.slot] or {}
                operand_maps.append({bound: dict(stored.get(bound, {}))})
            else:
                stored = bindings.slots[desc.slot]
                if stored is None:
                    raise EngineInvariantError(
                        f"slot {desc.slot} read before it was written")
                operand_maps.append(stored)
        else:  # adj / member_adj
            node = bindings.scalars.get(desc.base)
            if node is None:
                raise EngineInvariantError(f"operand base {desc.base} is not bound")
            amap, count = _adjacency_map(graph, node, desc.direction, desc.symbol,
                                         window, prepared.edge_preds, prepared, bindings)
            operand_maps.append(amap)
            survivors += count

    if cell.op == dsl.FOR_ALL:
        base = operand_maps[0]
        candidates = base
    elif cell.op == dsl.INTERSECT:
        keysets = [set(m.keys()) for m in operand_maps]
        common = set.intersection(*keysets) if keysets else set()
        candidates = {n: {} for n in common}
        for m in operand_maps:
            for n in common:
                _merge_lists(candidates[n], m.get(n, {}))
    elif cell.op == dsl.UNION:
        candidates = {}
        for m in operand_maps:
            for n, lists in m.items():
                entry = candidates.setdefault(n, {})
                _merge_lists(entry, lists)
    elif cell.op == dsl.DIFFERENTIATE:
        candidates = {n: dict(lists) for n, lists in operand_maps[0].items()}
    else:
        raise EngineInvariantError(f"unknown cell op {cell.op}")

    result: dict[int, dict[str, list[tuple[int, int]]]] = {}
    for n in sorted(candidates):
        lists = candidates[n]
        skip = False
        for pred in candidate_preds:
            if _node_pred_holds(pred, n, cell.dst_var, bindings.scalars):
                skip = True
                break
        if skip:
            continue
        if prepared.order_preds:
            time_lists = {sym: [te[0] for te in lst] for sym, lst in lists.items()}
            for sym, lst in bindings.bound_edges.items():
                time_lists.setdefault(sym, [te[0] for te in lst])
            if not _order_satisfiable(prepared.order_preds, time_lists, t):
                continue
        result[n] = lists

    # edge_count emission counts surviving adjacency iterations, not nodes
    # (only meaningful for for_all cells; the validator pins that).
    kept_iterations = sum(
        len(lst) for lists in result.values() for lst in lists.values())
    return result, kept_iterations


class _EmissionState:
    """Accumulates the per-trigger count and (optionally) instances."""

    __slots__ = ("prepared", "count", "instances", "want_instances", "graph", "trigger")

    def __init__(self, prepared: _PreparedPlan, graph: TemporalGraph,
                 trigger: tuple[int, int, int, int], want_instances: bool):
        self.prepared = prepared
        self.graph = graph
        self.trigger = trigger
        self.count = 0
        self.instances: list[tuple[frozenset[int], frozenset[int]]] = []
        self.want_instances = want_instances

    def _base_members(self, bindings: Bindings) -> tuple[set[int], set[int]]:
        edges = {self.trigger[3]}
        for lst in bindings.bound_edges.values():
            edges.update(eid for _, eid in lst)
        nodes = {self.trigger[0], self.trigger[1]}
        nodes.update(bindings.scalars.values())
        return edges, nodes

    def on_cell(self, cell_index: int, result: dict, iterations: int,
                bindings: Bindings) -> None:
        emission = self.prepared.plan.emission
        if emission.mode == dsl.PAIR_PRODUCT or cell_index not in self.prepared.target_cells:
            return
        min_size = emission.min_size
        mode = emission.mode
        if mode in (dsl.SET_CARDINALITY, dsl.INSTANCE_LIST):
            if len(result) >= min_size:
                self.count += len(result)
                if self.want_instances:
                    for n, lists in result.items():
                        edges, nodes = self._base_members(bindings)
                        nodes.add(n)
                        for lst in lists.values():
                            edges.update(eid for _, eid in lst)
                        self.instances.append((frozenset(edges), frozenset(nodes)))
        elif mode == dsl.EDGE_COUNT:
            if iterations >= min_size:
                self.count += iterations
                if self.want_instances:
                    for n, lists in result.items():
                        for lst in lists.values():
                            for _, eid in lst:
                                edges, nodes = self._base_members(bindings)
                                nodes.add(n)
                                edges.add(eid)
                                self.instances.append((frozenset(edges), frozenset(nodes)))
        elif mode == dsl.SOURCE_COUNT:
            if len(result) >= min_size:
                self.count += 1
                if self.want_instances:
                    edges, nodes = self._base_members(bindings)
                    for n, lists in result.items():
                        nodes.add(n)
                        for lst in lists.values():
                            edges.update(eid for _, eid in lst)
                    self.instances.append((frozenset(edges), frozenset(nodes)))

    def finish_pair_product(self, bindings: Bindings) -> None:
        emission = self.prepared.plan.emission
        if emission.mode != dsl.PAIR_PRODUCT:
            return
        slot_a, slot_b = emission.target_slots
        map_a = bindings.slots[slot_a] or {}
        map_b = bindings.slots[slot_b] or {}
        if len(map_a) < emission.min_size or len(map_b) < emission.min_size:
            return
        self.count += len(map_a) * len(map_b)
        if self.want_instances:
            for a, lists_a in map_a.items():
                for c, lists_c in map_b.items():
                    edges, nodes = self._base_members(bindings)
                    nodes.update((a, c))
                    for lst in lists_a.values():
                        edges.update(eid for _, eid in lst)
                    for lst in lists_c.values():
                        edges.update(eid for _, eid in lst)
                    self.instances.append((frozenset(edges), frozenset(nodes)))


def run_plan_on_trigger(
    graph: TemporalGraph,
    prepared: _PreparedPlan,
    edge_id: int,
    want_instances: bool,
) -> tuple[int, list[tuple[frozenset[int], frozenset[int]]]]:
    """Generic interpretation of one plan anchored at one trigger edge."""
    plan = prepared.plan
    u = int(graph.edge_src[edge_id])
    v = int(graph.edge_dst[edge_id])
    t = int(graph.edge_time[edge_id])
    trigger = (u, v, t, edge_id)
    bindings = Bindings(
        trigger=trigger,
        delta=plan.delta,
        scalars={"N0": u, "N1": v},
        slots=[None] * plan.slot_count,
        bound_edges={"e0": [(t, edge_id)]},
    )
    state = _EmissionState(prepared, graph, trigger, want_instances)

    def run(cell_indices: list[int]) -> None:
        for ci in cell_indices:
            pcell = prepared.cells[ci]
            cell = pcell.cell
            result, iterations = execute_cell(cell, bindings, graph, pcell)
            bindings.slots[cell.dst_slot] = result
            state.on_cell(ci, result, iterations, bindings)
            if pcell.children and result:
                var = cell.dst_var
                for member in sorted(result):
                    bindings.scalars[var] = member
                    added = result[member]
                    saved = {sym: bindings.bound_edges.get(sym) for sym in added}
                    for sym, lst in added.items():
                        bindings.bound_edges[sym] = lst
                    run(pcell.children)
                    for sym, old in saved.items():
                        if old is None:
                            bindings.bound_edges.pop(sym, None)
                        else:
                            bindings.bound_edges[sym] = old
                del bindings.scalars[var]

    run(prepared.roots)
    state.finish_pair_product(bindings)
    return state.count, state.instances


# ---------------------------------------------------------------------------
# Kernel dispatch


def _kernel_fn(plan: ExecutionPlan):
    """Batch fast path for a hinted plan; parameters come from the plan
    itself so a structurally matched custom pattern stays faithful."""
    hint = plan.kernel_hint
    emission = plan.emission
    if hint in (FAN, DEGREE):
        desc = plan.cells[0].src[0]
        exclude = hint == FAN
        return lambda g, lo, hi: kernels.batch_fan_degree(
            g, plan.delta, desc.base, desc.direction, exclude, emission.min_size, lo, hi)
    if hint in (CYCLE_2, CYCLE_3, CYCLE_4):
        length = {CYCLE_2: 2, CYCLE_3: 3, CYCLE_4: 4}[hint]
        return lambda g, lo, hi: kernels.batch_cycle(
            g, plan.delta, length, emission.min_size, lo, hi)
    if hint == SCATTER_GATHER:
        return lambda g, lo, hi: kernels.batch_scatter_gather(
            g, plan.delta, emission.min_size, lo, hi)
    if hint == STACK:
        return lambda g, lo, hi: kernels.batch_stack(
            g, plan.delta, emission.min_size, lo, hi)
    raise EngineInvariantError(f"no kernel for hint {hint}")


# ---------------------------------------------------------------------------
# Mining orchestration


def order_plans(plans: list[ExecutionPlan]) -> list[ExecutionPlan]:
    """Builtin columns first in their canonical order, then customs in the
    order given (the CSV column contract)."""
    names = [p.name for p in plans]
    if len(set(names)) != len(names):
        raise EngineInvariantError(f"duplicate pattern names in {names}")
    builtin = [p for name in BUILTIN_COLUMNS for p in plans if p.name == name]
    custom = [p for p in plans if p.name not in BUILTIN_COLUMNS]
    return builtin + custom


def _mine_range(graph: TemporalGraph, plans: list[ExecutionPlan], lo: int, hi: int,
                collect: bool):
    """Counts for trigger edges [lo, hi): returns (block, members_full, instances).

    `block` holds trigger-attributed rows for the local range; columns of
    members-attributed plans live in `members_full` (full edge range) since
    an instance increments rows outside the local range.
    """
    n_cols = len(plans)
    block = np.zeros((hi - lo, n_cols), dtype=np.int64)
    members_full: np.ndarray | None = None
    instances: list[InstanceRecord] = []
    edge_time = graph.edge_time

    for ci, plan in enumerate(plans):
        members_mode = plan.attribution == "members"
        if members_mode and members_full is None:
            members_full = np.zeros((graph.edge_count, n_cols), dtype=np.int64)
        use_kernel = (plan.kernel_hint != GENERIC and not members_mode and not collect)
        if use_kernel:
            block[:, ci] = _kernel_fn(plan)(graph, lo, hi)
            continue
        prepared = _PreparedPlan(plan)
        need_instances = collect or members_mode
        for eid in range(lo, hi):
            count, found = run_plan_on_trigger(graph, prepared, eid, need_instances)
            if members_mode:
                for edges, _nodes in found:
                    last = max(edges, key=lambda e: (int(edge_time[e]), e))
                    if last != eid:
                        continue
                    for member in edges:
                        members_full[member, ci] += 1
            else:
                block[eid - lo, ci] = count
            if collect:
                for edges, nodes in found:
                    instances.append(InstanceRecord(
                        plan.name, eid, tuple(sorted(edges)), tuple(sorted(nodes))))
    return block, members_full, instances


_FORK_CTX: dict = {}


def _worker_range(args):
    lo, hi = args
    graph, plans, collect = _FORK_CTX["graph"], _FORK_CTX["plans"], _FORK_CTX["collect"]
    return _mine_range(graph, plans, lo, hi, collect)


def mine(
    graph: TemporalGraph,
    plans: list[ExecutionPlan],
    workers: int = 1,
    collect_instances: bool = False,
):
    """Mine every plan over every trigger edge.

    Returns a FeatureMatrix, or (FeatureMatrix, [InstanceRecord]) when
    collect_instances is set. The matrix is identical for any worker count.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    plans = order_plans(list(plans))
    for p in plans:
        if p.slot_count != len(p.cells):
            raise EngineInvariantError(f"plan {p.name}: slot count disagrees with cells")
    n_edges = graph.edge_count

    if workers == 1 or n_edges < 4 * workers:
        parts = [_mine_range(graph, plans, 0, n_edges, collect_instances)]
        bounds = [(0, n_edges)]
    else:
        step = (n_edges + workers - 1) // workers
        bounds = [(i, min(i + step, n_edges)) for i in range(0, n_edges, step)]
        _FORK_CTX["graph"] = graph
        _FORK_CTX["plans"] = plans
        _FORK_CTX["collect"] = collect_instances
        ctx = multiprocessing.get_context("fork")
        try:
            with ProcessPoolExecutor(max_workers=len(bounds), mp_context=ctx) as pool:
                parts = list(pool.map(_worker_range, bounds))
        finally:
            _FORK_CTX.clear()

    values = np.zeros((n_edges, len(plans)), dtype=np.int64)
    instances: list[InstanceRecord] = []
    for (lo, hi), (block, members_full, found) in zip(bounds, parts):
        values[lo:hi, :] += block
        if members_full is not None:
            values += members_full
        instances.extend(found)

    matrix = FeatureMatrix(
        columns=tuple(p.name for p in plans),
        values=values,
        edge_src=graph.edge_src,
        edge_dst=graph.edge_dst,
        edge_time=graph.edge_time,
        edge_label=graph.edge_label,
    )
    if collect_instances:
        instances.sort(key=lambda r: (r.pattern, r.trigger_edge, r.member_edges))
        return matrix, instances
    return matrix
