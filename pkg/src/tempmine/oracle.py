"""Brute-force reference counts for any validated pattern on small graphs.

This module is the ground truth the engine is tested against, so it shares
no traversal machinery with the engine: adjacency is a plain dict keyed by
node pair, candidates come from scanning every node id, windows are checked
per edge with explicit comparisons, and ORDER constraints are decided by
enumerating whole edge tuples. Exponential cost is acceptable here;
correctness and independence are the point.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import dsl
from .dsl import ValidatedPattern
from .engine import InstanceRecord
from .txgraph import TemporalGraph


class OracleSizeError(RuntimeError):
    """Graph exceeds the brute-force size guard."""


MAX_ORACLE_NODES = 64


@dataclass
class OracleReport:
    pattern: str
    expected: np.ndarray
    mismatches: list[tuple[int, int, int]]  # (edge_id, expected, actual)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def render(self) -> str:
        lines = [f"pattern {self.pattern}: "
                 f"{'OK' if self.ok else f'{len(self.mismatches)} mismatch(es)'}"]
        for edge_id, exp, act in self.mismatches[:50]:
            lines.append(f"  edge {edge_id}: expected {exp}, engine said {act}")
        if len(self.mismatches) > 50:
            lines.append(f"  ... {len(self.mismatches) - 50} more")
        return "\n".join(lines)


class _PlainGraph:
    """Dict-of-pairs view of the transaction list; nothing shared with CSR."""

    def __init__(self, graph: TemporalGraph):
        self.node_count = graph.node_count
        self.edge_fields = []
        self.pair_edges: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for eid in range(graph.edge_count):
            rec = graph.record(eid)
            self.edge_fields.append(rec)
            self.pair_edges.setdefault((rec.src, rec.dst), []).append((rec.timestamp, rec.edge_id))
        self.edge_count = graph.edge_count

    def edges_between(self, a: int, b: int) -> list[tuple[int, int]]:
        return self.pair_edges.get((a, b), [])


def _term_scalar(term: dsl.Term, candidate, dst_var: str, env: dict):
    if term.name == dst_var:
        return candidate
    return env[term.name]


def _cmp(a, b, op: str) -> bool:
    return {"==": a == b, "!=": a != b, "<=": a <= b,
            "<": a < b, ">=": a >= b, ">": a > b}[op]


def _edge_term_value(pg: _PlainGraph, term: dsl.Term, tt: int, eid: int, trig_eid: int):
    if term.kind == "edge":
        return trig_eid if term.name == "e0" else eid
    if term.kind == "eattr":
        rec = pg.edge_fields[trig_eid if term.name == "e0" else eid]
        return rec.amount if term.attr == "amount" else rec.currency
    if term.kind in ("number", "string"):
        return term.value
    return tt


def _edge_passes(pg: _PlainGraph, pred: dsl.ConstraintExpr, tt: int, eid: int,
                 trig_eid: int) -> bool:
    a = _edge_term_value(pg, pred.lhs, tt, eid, trig_eid)
    b = _edge_term_value(pg, pred.rhs, tt, eid, trig_eid)
    return not _cmp(a, b, pred.op)


def _split_preds(stage: dsl.StageSpec, own_syms: set[str]):
    node_preds, edge_preds, gate_preds = [], {}, []
    for pred in stage.constraints:
        if pred.kind == dsl.ORDER or pred.kind == dsl.BREAK_IF:
            continue
        kinds = {pred.lhs.kind, pred.rhs.kind}
        if kinds == {"node"}:
            node_preds.append(pred)
            continue
        sym = None
        for term in (pred.lhs, pred.rhs):
            if term.kind in ("edge", "etime", "eattr") and term.name in own_syms:
                sym = term.name
        if sym is None:
            gate_preds.append(pred)
        else:
            edge_preds.setdefault(sym, []).append(pred)
    return node_preds, edge_preds, gate_preds


def _order_brute(order_preds, lists: dict[str, list[tuple[int, int]]], t: int) -> bool:
    """Satisfiability by exhaustive edge-tuple enumeration."""
    syms = []
    for pred in order_preds:
        for term in (pred.lhs, pred.rhs):
            if term.kind == "etime" and term.name not in syms:
                syms.append(term.name)
    pools = []
    for sym in syms:
        pool = lists.get(sym, [])
        if not pool:
            return False
        pools.append(pool)
    for combo in product(*pools):
        chosen = {sym: te[0] for sym, te in zip(syms, combo)}

        def tval(term):
            return t if term.kind == "trigger_time" else chosen[term.name]

        if all(_cmp(tval(p.lhs), tval(p.rhs), p.op) for p in order_preds):
            return True
    return False


def enumerate_bruteforce(
    graph: TemporalGraph,
    pattern: ValidatedPattern,
    attribution: str = "trigger",
    collect_instances: bool = False,
    force: bool = False,
):
    """Per-edge counts by exhaustive enumeration of pattern instances.

    Every edge is taken as the trigger in turn; instances are enumerated by
    scanning all candidate node ids per stage and demanding explicit edge
    evidence inside the window. `attribution` follows the engine's documented
    semantics (trigger row per instance, or all member rows for instances
    anchored at their temporally last member edge).
    """
    if graph.node_count > MAX_ORACLE_NODES and not force:
        raise OracleSizeError(
            f"graph has {graph.node_count} nodes; the brute-force oracle "
            f"refuses above {MAX_ORACLE_NODES} (pass force=True to override)")
    pg = _PlainGraph(graph)
    spec = pattern.spec
    counts = np.zeros(pg.edge_count, dtype=np.int64)
    all_instances: list[InstanceRecord] = []

    for trig in pg.edge_fields:
        instances = _instances_for_trigger(pg, pattern, trig.src, trig.dst,
                                           trig.timestamp, trig.edge_id)
        if attribution == "trigger":
            counts[trig.edge_id] += len(instances)
        else:
            for edges, _nodes in instances:
                anchor = max(edges, key=lambda e: (pg.edge_fields[e].timestamp, e))
                if anchor != trig.edge_id:
                    continue
                for member in edges:
                    counts[member] += 1
        if collect_instances:
            for edges, nodes in instances:
                all_instances.append(InstanceRecord(
                    spec.name, trig.edge_id, tuple(sorted(edges)), tuple(sorted(nodes))))
    if collect_instances:
        all_instances.sort(key=lambda r: (r.pattern, r.trigger_edge, r.member_edges))
        return counts, all_instances
    return counts


def enumerate_bruteforce_both(
    graph: TemporalGraph,
    pattern: ValidatedPattern,
    force: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """(trigger_counts, members_counts) from a single instance enumeration."""
    if graph.node_count > MAX_ORACLE_NODES and not force:
        raise OracleSizeError(
            f"graph has {graph.node_count} nodes; the brute-force oracle "
            f"refuses above {MAX_ORACLE_NODES} (pass force=True to override)")
    pg = _PlainGraph(graph)
    trigger_counts = np.zeros(pg.edge_count, dtype=np.int64)
    member_counts = np.zeros(pg.edge_count, dtype=np.int64)
    for trig in pg.edge_fields:
        instances = _instances_for_trigger(pg, pattern, trig.src, trig.dst,
                                           trig.timestamp, trig.edge_id)
        trigger_counts[trig.edge_id] += len(instances)
        for edges, _nodes in instances:
            anchor = max(edges, key=lambda e: (pg.edge_fields[e].timestamp, e))
            if anchor != trig.edge_id:
                continue
            for member in edges:
                member_counts[member] += 1
    return trigger_counts, member_counts


def _instances_for_trigger(pg: _PlainGraph, pattern: ValidatedPattern,
                           u: int, v: int, t: int, trig_eid: int):
    """All instances anchored at one trigger, as (edge-id set, node set)."""
    spec = pattern.spec
    delta = spec.delta
    emit = spec.emit
    instances: list[tuple[frozenset[int], frozenset[int]]] = []

    children: dict[int, list[int]] = {}
    roots: list[int] = []
    for i in range(len(spec.stages)):
        parent = pattern.stage_parent[i]
        if parent < 0:
            roots.append(i)
        else:
            children.setdefault(parent, []).append(i)

    env: dict[str, int] = {"N0": u, "N1": v}
    sets: list[dict | None] = [None] * len(spec.stages)
    bound: dict[str, list[tuple[int, int]]] = {"e0": [(t, trig_eid)]}
    target_stages = {pattern.defining_stage[tv] for tv in emit.targets}

    def window_of(stage: dsl.StageSpec) -> tuple[int, int]:
        return (t, t + delta) if stage.window == "forward" else (t - delta, t)

    def evidence(a: int, b: int, wlo: int, whi: int, preds) -> list[tuple[int, int]]:
        if a == b:
            return []
        found = []
        for tt, eid in pg.edges_between(a, b):
            if tt < wlo or tt > whi:
                continue
            if all(_edge_passes(pg, p, tt, eid, trig_eid) for p in preds):
                found.append((tt, eid))
        return found

    def eval_stage(si: int) -> dict[int, dict[str, list[tuple[int, int]]]]:
        stage = spec.stages[si]
        own_syms = {s for s in pattern.operand_symbols[si] if s}
        node_preds, edge_preds, gate_preds = _split_preds(stage, own_syms)
        wlo, whi = window_of(stage)

        for pred in gate_preds:
            sym = next(term.name for term in (pred.lhs, pred.rhs)
                       if term.kind in ("edge", "etime", "eattr"))
            pool = bound.get(sym, [])
            if not any(_edge_passes(pg, pred, tt, eid, trig_eid) for tt, eid in pool):
                return {}
        for pred in node_preds:
            involves_cand = stage.output_var in (pred.lhs.name, pred.rhs.name)
            if not involves_cand and _cmp(
                    _term_scalar(pred.lhs, None, "", env),
                    _term_scalar(pred.rhs, None, "", env), pred.op):
                return {}
        cand_preds = [p for p in node_preds
                      if stage.output_var in (p.lhs.name, p.rhs.name)]
        order_preds = [c for c in stage.constraints if c.kind == dsl.ORDER]

        out: dict[int, dict[str, list[tuple[int, int]]]] = {}
        for n in range(pg.node_count):
            support: dict[str, list[tuple[int, int]]] = {}
            admitted = None
            per_operand = []
            for j, operand in enumerate(stage.inputs):
                sym = pattern.operand_symbols[si][j]
                if operand.accessor == dsl.SELF:
                    if operand.base in env:
                        ok = n == env[operand.base]
                        evidence_lists = {}
                    else:
                        stored = sets[pattern.defining_stage[operand.base]]
                        ok = stored is not None and n in stored
                        evidence_lists = dict(stored[n]) if ok else {}
                else:
                    base_node = env.get(operand.base)
                    if base_node is None:
                        raise RuntimeError(f"operand base {operand.base} unbound in oracle")
                    if operand.accessor == dsl.IN_NEIGH:
                        found = evidence(n, base_node, wlo, whi, edge_preds.get(sym, ()))
                    else:
                        found = evidence(base_node, n, wlo, whi, edge_preds.get(sym, ()))
                    ok = bool(found)
                    evidence_lists = {sym: found} if found else {}
                per_operand.append((ok, evidence_lists))

            if stage.op in (dsl.FOR_ALL, dsl.INTERSECT, dsl.DIFFERENTIATE):
                admitted = all(ok for ok, _ in per_operand)
            else:  # union
                admitted = any(ok for ok, _ in per_operand)
            if not admitted:
                continue
            for ok, lists in per_operand:
                if ok:
                    for sym, lst in lists.items():
                        support.setdefault(sym, []).extend(lst)
            if any(_cmp(_term_scalar(p.lhs, n, stage.output_var, env),
                        _term_scalar(p.rhs, n, stage.output_var, env), p.op)
                   for p in cand_preds):
                continue
            if order_preds:
                pool = dict(bound)
                pool.update(support)
                if not _order_brute(order_preds, pool, t):
                    continue
            out[n] = support
        return out

    def base_members() -> tuple[set[int], set[int]]:
        edges = {eid for lst in bound.values() for _, eid in lst}
        nodes = {u, v}
        nodes.update(x for name, x in env.items() if name not in ("N0", "N1"))
        return edges, nodes

    def emit_here(si: int, result: dict, stage: dsl.StageSpec) -> None:
        if emit.mode == dsl.PAIR_PRODUCT or si not in target_stages:
            return
        if emit.mode in (dsl.SET_CARDINALITY, dsl.INSTANCE_LIST):
            if len(result) >= emit.min_size:
                for n, lists in result.items():
                    edges, nodes = base_members()
                    nodes.add(n)
                    for lst in lists.values():
                        edges.update(eid for _, eid in lst)
                    instances.append((frozenset(edges), frozenset(nodes)))
        elif emit.mode == dsl.EDGE_COUNT:
            total = sum(len(lst) for lists in result.values() for lst in lists.values())
            if total >= emit.min_size:
                for n, lists in result.items():
                    for lst in lists.values():
                        for _, eid in lst:
                            edges, nodes = base_members()
                            nodes.add(n)
                            edges.add(eid)
                            instances.append((frozenset(edges), frozenset(nodes)))
        elif emit.mode == dsl.SOURCE_COUNT:
            if len(result) >= emit.min_size:
                edges, nodes = base_members()
                for n, lists in result.items():
                    nodes.add(n)
                    for lst in lists.values():
                        edges.update(eid for _, eid in lst)
                instances.append((frozenset(edges), frozenset(nodes)))

    def run(stage_list: list[int]) -> None:
        for si in stage_list:
            stage = spec.stages[si]
            result = eval_stage(si)
            sets[si] = result
            emit_here(si, result, stage)
            kids = children.get(si, [])
            if kids and result:
                var = stage.output_var
                for member in sorted(result):
                    env[var] = member
                    saved = {sym: bound.get(sym) for sym in result[member]}
                    for sym, lst in result[member].items():
                        bound[sym] = lst
                    run(kids)
                    for sym, old in saved.items():
                        if old is None:
                            bound.pop(sym, None)
                        else:
                            bound[sym] = old
                del env[var]

    run(roots)

    if emit.mode == dsl.PAIR_PRODUCT:
        slot_a = pattern.defining_stage[emit.targets[0]]
        slot_b = pattern.defining_stage[emit.targets[1]]
        map_a, map_b = sets[slot_a] or {}, sets[slot_b] or {}
        if len(map_a) >= emit.min_size and len(map_b) >= emit.min_size:
            for a, lists_a in map_a.items():
                for c, lists_c in map_b.items():
                    edges, nodes = base_members()
                    nodes.update((a, c))
                    for lst in lists_a.values():
                        edges.update(eid for _, eid in lst)
                    for lst in lists_c.values():
                        edges.update(eid for _, eid in lst)
                    instances.append((frozenset(edges), frozenset(nodes)))
    return instances


def compare(pattern_name: str, expected: np.ndarray, actual: np.ndarray) -> OracleReport:
    """Exact elementwise comparison over the same edge universe."""
    if expected.shape != actual.shape:
        raise ValueError(f"shape mismatch: {expected.shape} vs {actual.shape}")
    mism = np.flatnonzero(expected != actual)
    return OracleReport(
        pattern=pattern_name,
        expected=expected,
        mismatches=[(int(i), int(expected[i]), int(actual[i])) for i in mism],
    )
