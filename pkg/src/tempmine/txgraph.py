"""Transaction-log ingestion and the immutable temporal graph.

The graph is a dual CSR: every node carries its out-edges and in-edges as
contiguous (neighbor, timestamp, edge_id) runs sorted by timestamp (ties
broken by edge_id ascending). Timestamps are int64 in dataset-native ticks;
window arithmetic never touches floats.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Iterable, Iterator, Sequence

import numpy as np


class ParseError(ValueError):
    """Malformed input row. `line` is 1-based (header is line 1)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MappingError(ValueError):
    """A ColumnMapping names a column the header does not have."""


class GraphConstructionError(ValueError):
    """Records violate a TemporalGraph precondition."""


@dataclass(frozen=True, slots=True)
class TransactionRecord:
    edge_id: int
    src: int
    dst: int
    timestamp: int
    amount: float
    currency: str
    label: bool | None = None


@dataclass(frozen=True)
class ColumnMapping:
    """Names the input columns. Defaults match the IBM AML CSV layout.

    The IBM layout repeats the header name "Account" for the source and
    destination account; duplicated names are resolved positionally in the
    order the fields are declared here (src_account gets the first
    occurrence, dst_account the second). Set the bank columns to None for
    single-column account ids. `timestamp_format` is a strptime format used
    when the timestamp cell is not already an integer tick count; parsed
    datetimes become epoch seconds (UTC) divided by `tick_seconds`, ticks
    being the dataset-native resolution window lengths are expressed in.
    """

    timestamp: str = "Timestamp"
    src_bank: str | None = "From Bank"
    src_account: str = "Account"
    dst_bank: str | None = "To Bank"
    dst_account: str = "Account"
    amount: str | None = "Amount Paid"
    currency: str | None = "Payment Currency"
    label: str | None = "Is Laundering"
    timestamp_format: str | None = "%Y/%m/%d %H:%M"
    tick_seconds: int = 1
    delimiter: str = ","


@dataclass(frozen=True)
class GraphStats:
    """Per-direction degree summary used by the plan compiler."""

    mean_out_degree: float
    mean_in_degree: float
    p99_out_degree: float
    p99_in_degree: float


@dataclass(frozen=True)
class AdjacencySlice:
    """A contiguous run of (neighbor, timestamp, edge_id) adjacency entries."""

    nbr: np.ndarray
    time: np.ndarray
    eid: np.ndarray

    def __len__(self) -> int:
        return len(self.nbr)

    def __iter__(self) -> Iterator[tuple[int, int, int]]:
        return zip(self.nbr.tolist(), self.time.tolist(), self.eid.tolist())


_EMPTY_I64 = np.empty(0, dtype=np.int64)
_EMPTY_SLICE = AdjacencySlice(_EMPTY_I64, _EMPTY_I64, _EMPTY_I64)


class TemporalGraph:
    """Immutable dual-CSR temporal multigraph.

    Construction happens once in :func:`build_graph`; afterwards all arrays
    are marked read-only and the instance is safe to share across workers.
    """

    def __init__(
        self,
        node_count: int,
        edge_src: np.ndarray,
        edge_dst: np.ndarray,
        edge_time: np.ndarray,
        edge_amount: np.ndarray,
        edge_currency: np.ndarray,
        edge_label: np.ndarray,
        currency_vocab: tuple[str, ...],
    ):
        self.node_count = int(node_count)
        self.edge_count = len(edge_src)
        self.edge_src = edge_src
        self.edge_dst = edge_dst
        self.edge_time = edge_time
        self.edge_amount = edge_amount
        self.edge_currency = edge_currency
        self.edge_label = edge_label
        self.currency_vocab = currency_vocab

        eids = np.arange(self.edge_count, dtype=np.int64)
        order_out = np.lexsort((eids, edge_time, edge_src))
        order_in = np.lexsort((eids, edge_time, edge_dst))
        self.out_indptr = _indptr(edge_src, self.node_count)
        self.in_indptr = _indptr(edge_dst, self.node_count)
        self.out_nbr = edge_dst[order_out]
        self.out_time = edge_time[order_out]
        self.out_eid = eids[order_out]
        self.in_nbr = edge_src[order_in]
        self.in_time = edge_time[order_in]
        self.in_eid = eids[order_in]

        # Self-loop index: pattern iteration skips a->a edges everywhere, and
        # the vectorized fan/degree kernels subtract them via this CSR.
        loop_mask = edge_src == edge_dst
        loop_nodes = edge_src[loop_mask]
        loop_times = edge_time[loop_mask]
        loop_order = np.lexsort((loop_times, loop_nodes))
        self.selfloop_indptr = _indptr(loop_nodes, self.node_count)
        self.selfloop_time = loop_times[loop_order]

        degs_out = np.diff(self.out_indptr)
        degs_in = np.diff(self.in_indptr)
        self.stats = GraphStats(
            mean_out_degree=float(degs_out.mean()),
            mean_in_degree=float(degs_in.mean()),
            p99_out_degree=float(np.percentile(degs_out, 99)),
            p99_in_degree=float(np.percentile(degs_in, 99)),
        )

        for arr in (
            self.edge_src, self.edge_dst, self.edge_time, self.edge_amount,
            self.edge_currency, self.edge_label, self.out_indptr, self.out_nbr,
            self.out_time, self.out_eid, self.in_indptr, self.in_nbr,
            self.in_time, self.in_eid, self.selfloop_indptr, self.selfloop_time,
        ):
            arr.flags.writeable = False

    def out_slice(self, node: int) -> AdjacencySlice:
        if not 0 <= node < self.node_count:
            return _EMPTY_SLICE
        lo, hi = self.out_indptr[node], self.out_indptr[node + 1]
        return AdjacencySlice(self.out_nbr[lo:hi], self.out_time[lo:hi], self.out_eid[lo:hi])

    def in_slice(self, node: int) -> AdjacencySlice:
        if not 0 <= node < self.node_count:
            return _EMPTY_SLICE
        lo, hi = self.in_indptr[node], self.in_indptr[node + 1]
        return AdjacencySlice(self.in_nbr[lo:hi], self.in_time[lo:hi], self.in_eid[lo:hi])

    def record(self, edge_id: int) -> TransactionRecord:
        lab = int(self.edge_label[edge_id])
        return TransactionRecord(
            edge_id=int(edge_id),
            src=int(self.edge_src[edge_id]),
            dst=int(self.edge_dst[edge_id]),
            timestamp=int(self.edge_time[edge_id]),
            amount=float(self.edge_amount[edge_id]),
            currency=self.currency_vocab[int(self.edge_currency[edge_id])],
            label=None if lab < 0 else bool(lab),
        )

    def records(self) -> list[TransactionRecord]:
        return [self.record(i) for i in range(self.edge_count)]


def _indptr(nodes: np.ndarray, node_count: int) -> np.ndarray:
    counts = np.bincount(nodes, minlength=node_count)
    indptr = np.zeros(node_count + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr


def _resolve_columns(header: Sequence[str], mapping: ColumnMapping) -> dict[str, int | None]:
    positions: dict[str, list[int]] = {}
    for i, name in enumerate(header):
        positions.setdefault(name.strip(), []).append(i)
    used: dict[str, int] = {}

    def col(name: str | None, field: str) -> int | None:
        if name is None:
            return None
        idxs = positions.get(name)
        if not idxs:
            raise MappingError(f"column {name!r} (mapped as {field}) not found in header {list(header)!r}")
        k = used.get(name, 0)
        used[name] = k + 1
        return idxs[min(k, len(idxs) - 1)]

    # Declaration order matters: duplicate header names are consumed
    # positionally (IBM repeats "Account" for source then destination).
    return {
        "timestamp": col(mapping.timestamp, "timestamp"),
        "src_bank": col(mapping.src_bank, "src_bank"),
        "src_account": col(mapping.src_account, "src_account"),
        "dst_bank": col(mapping.dst_bank, "dst_bank"),
        "dst_account": col(mapping.dst_account, "dst_account"),
        "amount": col(mapping.amount, "amount"),
        "currency": col(mapping.currency, "currency"),
        "label": col(mapping.label, "label"),
    }


def _parse_timestamp(text: str, fmt: str | None, tick_seconds: int = 1) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    if fmt is None:
        raise ValueError(f"timestamp {text!r} is not an integer tick count")
    dt = datetime.strptime(text, fmt).replace(tzinfo=timezone.utc)
    return int(dt.timestamp()) // max(tick_seconds, 1)


_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no", ""}


def parse_transactions(
    source: str | os.PathLike | IO[str] | Iterable[str],
    mapping: ColumnMapping | None = None,
) -> list[TransactionRecord]:
    """Parse a delimited transaction log into dense-id records.

    Node ids are dense integers assigned in first-seen order over
    (bank, account) pairs; edge ids follow row order. Raises
    :class:`ParseError` with the offending line number on malformed rows and
    :class:`MappingError` when the mapping names unknown columns.
    """
    mapping = mapping or ColumnMapping()
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", newline="", encoding="utf-8") as fh:
            return parse_transactions(fh, mapping)

    reader = csv.reader(source, delimiter=mapping.delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input: missing header row", line=1) from None
    cols = _resolve_columns(header, mapping)
    needed = max(i for i in cols.values() if i is not None)

    node_ids: dict[tuple[str, str] | str, int] = {}

    def node_of(bank_idx: int | None, account_idx: int, row: list[str]) -> int:
        key = (row[bank_idx].strip(), row[account_idx].strip()) if bank_idx is not None else row[account_idx].strip()
        nid = node_ids.get(key)
        if nid is None:
            nid = len(node_ids)
            node_ids[key] = nid
        return nid

    records: list[TransactionRecord] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) <= needed:
            raise ParseError(f"expected at least {needed + 1} columns, got {len(row)}", line=lineno)
        try:
            ts = _parse_timestamp(row[cols["timestamp"]], mapping.timestamp_format,
                                  mapping.tick_seconds)
            if ts < 0:
                raise ValueError(f"negative timestamp {ts}")
            amount = float(row[cols["amount"]]) if cols["amount"] is not None else 0.0
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        currency = row[cols["currency"]].strip() if cols["currency"] is not None else ""
        label: bool | None = None
        if cols["label"] is not None:
            raw = row[cols["label"]].strip().lower()
            if raw in _TRUE:
                label = True
            elif raw in _FALSE:
                label = False
            else:
                raise ParseError(f"unrecognized label value {raw!r}", line=lineno)
        src = node_of(cols["src_bank"], cols["src_account"], row)
        dst = node_of(cols["dst_bank"], cols["dst_account"], row)
        records.append(TransactionRecord(len(records), src, dst, ts, amount, currency, label))
    return records


def build_graph(records: Sequence[TransactionRecord]) -> TemporalGraph:
    """Assemble the dual-CSR graph from parsed records.

    Equal timestamps are ordered by edge_id ascending, making every
    downstream iteration order (and therefore every mined count)
    deterministic.
    """
    if not records:
        raise GraphConstructionError("no records: cannot build an empty graph")
    n_edges = len(records)
    src = np.empty(n_edges, dtype=np.int64)
    dst = np.empty(n_edges, dtype=np.int64)
    time = np.empty(n_edges, dtype=np.int64)
    amount = np.empty(n_edges, dtype=np.float64)
    label = np.empty(n_edges, dtype=np.int8)
    currency = np.empty(n_edges, dtype=np.int32)
    vocab: dict[str, int] = {}

    for i, rec in enumerate(records):
        if rec.edge_id != i:
            raise GraphConstructionError(f"edge_id {rec.edge_id} at position {i}: ids must be contiguous from 0")
        if rec.src < 0 or rec.dst < 0:
            raise GraphConstructionError(f"edge {i}: negative node id")
        if rec.timestamp < 0:
            raise GraphConstructionError(f"edge {i}: negative timestamp")
        src[i] = rec.src
        dst[i] = rec.dst
        time[i] = rec.timestamp
        amount[i] = rec.amount
        label[i] = -1 if rec.label is None else int(rec.label)
        code = vocab.get(rec.currency)
        if code is None:
            code = len(vocab)
            vocab[rec.currency] = code
        currency[i] = code

    node_count = int(max(src.max(), dst.max())) + 1
    return TemporalGraph(node_count, src, dst, time, amount, currency, label, tuple(vocab))


def find_start(adj: AdjacencySlice | np.ndarray, t_min: int) -> int:
    """Smallest index whose timestamp is >= t_min (len(adj) if none)."""
    times = adj.time if isinstance(adj, AdjacencySlice) else adj
    return int(np.searchsorted(times, t_min, side="left"))


def window_neighbors(
    graph: TemporalGraph,
    node: int,
    direction: str,
    window: tuple[int, int],
) -> AdjacencySlice:
    """Adjacency entries of `node` with t_lo <= timestamp <= t_hi.

    Bounds are closed on both ends. Unknown nodes yield an empty slice. The
    slice is a raw CSR view: self-loop entries are present here and skipped
    by fan/degree/pattern counting at iteration time.
    """
    t_lo, t_hi = window
    if t_lo > t_hi:
        raise ValueError(f"window lower bound {t_lo} exceeds upper bound {t_hi}")
    full = graph.out_slice(node) if direction == "out" else graph.in_slice(node)
    lo = find_start(full, t_lo)
    hi = int(np.searchsorted(full.time, t_hi, side="right"))
    return AdjacencySlice(full.nbr[lo:hi], full.time[lo:hi], full.eid[lo:hi])


def check_invariants(graph: TemporalGraph) -> None:
    """Assert the dual-CSR invariants; raises GraphConstructionError.

    Covers: per-node non-decreasing timestamps, adjacency sizes summing to
    edge_count, every edge appearing exactly once per direction, and the
    mirror property (out entries agree with in entries via the edge table).
    """
    n_edges = graph.edge_count
    all_eids = np.arange(n_edges, dtype=np.int64)
    sides = (
        ("out", graph.out_indptr, graph.out_nbr, graph.out_time, graph.out_eid,
         graph.edge_src, graph.edge_dst),
        ("in", graph.in_indptr, graph.in_nbr, graph.in_time, graph.in_eid,
         graph.edge_dst, graph.edge_src),
    )
    for name, indptr, nbr, time, eid, owner_arr, other_arr in sides:
        if indptr[-1] != n_edges:
            raise GraphConstructionError(f"{name} adjacency does not sum to edge_count")
        if not np.array_equal(np.sort(eid), all_eids):
            raise GraphConstructionError(f"{name} adjacency does not cover every edge exactly once")
        if not (np.array_equal(nbr, other_arr[eid]) and np.array_equal(time, graph.edge_time[eid])):
            raise GraphConstructionError(f"{name} adjacency entries disagree with the edge table")
        owner = np.repeat(np.arange(graph.node_count, dtype=np.int64), np.diff(indptr))
        if not np.array_equal(owner, owner_arr[eid]):
            raise GraphConstructionError(f"{name} adjacency entry filed under the wrong node")
        if n_edges > 1:
            interior = np.ones(n_edges, dtype=bool)
            interior[0] = False
            starts = indptr[1:-1]
            interior[starts[starts < n_edges]] = False
            idx = np.flatnonzero(interior)
            if not np.all(time[idx] >= time[idx - 1]):
                raise GraphConstructionError(f"{name} adjacency timestamps decrease within a node run")
