"""Specialized counting kernels for the builtin pattern family.

Single-edge ops (count_fan, count_degree, count_cycles, count_scatter_gather,
count_stack) define each builtin's semantics on one trigger edge; the _batch_*
functions compute whole trigger ranges for the engine's hinted fast path and
must match the generic plan interpreter exactly (asserted by the test suite
and the brute-force oracle).

Conventions shared by every kernel: the window is [t - delta, t] anchored at
the trigger timestamp (closed on both ends; the ordered stack variant draws
its forward layer from [t, t + delta]); self-loop edges never appear in any
adjacency iteration; equal timestamps order by edge_id.
"""

from __future__ import annotations

import numpy as np

from .txgraph import TemporalGraph


def intersect_sorted(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Intersection of two sorted, deduplicated int64 node arrays.

    Merge-walk when the size ratio is below 32, binary probe of the larger
    side otherwise.
    """
    if len(a) > len(b):
        a, b = b, a
    if len(a) == 0:
        return a[:0]
    if len(b) >= 32 * len(a):
        pos = np.searchsorted(b, a)
        pos[pos == len(b)] = len(b) - 1
        return a[b[pos] == a]
    return np.intersect1d(a, b, assume_unique=True)


def window_bounds(times: np.ndarray, t_lo: int, t_hi: int) -> tuple[int, int]:
    lo = int(np.searchsorted(times, t_lo, side="left"))
    hi = int(np.searchsorted(times, t_hi, side="right"))
    return lo, hi


def windowed_nodes(graph: TemporalGraph, node: int, direction: str,
                   t_lo: int, t_hi: int) -> np.ndarray:
    """Sorted unique neighbor ids within the window, self-loops dropped."""
    if not 0 <= node < graph.node_count:
        return np.empty(0, dtype=np.int64)
    if direction == "out":
        p0, p1 = graph.out_indptr[node], graph.out_indptr[node + 1]
        nbr, times = graph.out_nbr[p0:p1], graph.out_time[p0:p1]
    else:
        p0, p1 = graph.in_indptr[node], graph.in_indptr[node + 1]
        nbr, times = graph.in_nbr[p0:p1], graph.in_time[p0:p1]
    lo, hi = window_bounds(times, t_lo, t_hi)
    picked = nbr[lo:hi]
    picked = picked[picked != node]
    return np.unique(picked)


def _windowed_edge_count(graph: TemporalGraph, node: int, direction: str,
                         t_lo: int, t_hi: int) -> int:
    """Number of non-self-loop adjacency entries within the window."""
    if not 0 <= node < graph.node_count:
        return 0
    indptr = graph.out_indptr if direction == "out" else graph.in_indptr
    times = graph.out_time if direction == "out" else graph.in_time
    p0, p1 = indptr[node], indptr[node + 1]
    lo, hi = window_bounds(times[p0:p1], t_lo, t_hi)
    total = hi - lo
    s0, s1 = graph.selfloop_indptr[node], graph.selfloop_indptr[node + 1]
    sl_lo, sl_hi = window_bounds(graph.selfloop_time[s0:s1], t_lo, t_hi)
    return int(total - (sl_hi - sl_lo))


# ---------------------------------------------------------------------------
# Single-edge ops


def count_fan(graph: TemporalGraph, edge_id: int, direction: str, delta: int) -> int:
    """Fan-in/out of the trigger: windowed edges at the burst endpoint, the
    trigger itself excluded (parallel edges still count)."""
    u, v, t = int(graph.edge_src[edge_id]), int(graph.edge_dst[edge_id]), int(graph.edge_time[edge_id])
    node = v if direction == "in" else u
    n = _windowed_edge_count(graph, node, direction, t - delta, t)
    if u != v:
        n -= 1  # the trigger edge sits inside its own window
    return n


def count_degree(graph: TemporalGraph, edge_id: int, delta: int) -> tuple[int, int, int, int]:
    """(deg_in_src, deg_out_src, deg_in_dst, deg_out_dst) over the window."""
    u, v, t = int(graph.edge_src[edge_id]), int(graph.edge_dst[edge_id]), int(graph.edge_time[edge_id])
    lo, hi = t - delta, t
    return (
        _windowed_edge_count(graph, u, "in", lo, hi),
        _windowed_edge_count(graph, u, "out", lo, hi),
        _windowed_edge_count(graph, v, "in", lo, hi),
        _windowed_edge_count(graph, v, "out", lo, hi),
    )


def _edge_times_between(graph: TemporalGraph, a: int, b: int, t_lo: int, t_hi: int) -> list[int]:
    """Sorted timestamps of a->b edges within the window (a != b expected)."""
    p0, p1 = graph.out_indptr[a], graph.out_indptr[a + 1]
    nbr, times = graph.out_nbr[p0:p1], graph.out_time[p0:p1]
    lo, hi = window_bounds(times, t_lo, t_hi)
    sel = nbr[lo:hi] == b
    return times[lo:hi][sel].tolist()


def _chain_satisfiable(time_lists: list[list[int]], final_max: int) -> bool:
    """Greedy check for t1 <= t2 <= ... <= tK <= final_max, one pick per list."""
    prev = None
    for lst in time_lists:
        nxt = None
        for tt in lst:  # lists are sorted ascending
            if prev is None or tt >= prev:
                nxt = tt
                break
        if nxt is None:
            return False
        prev = nxt
    return prev is not None and prev <= final_max


def count_cycles(graph: TemporalGraph, edge_id: int, delta: int, length: int,
                 ordered: bool = False, edge_tuples: bool = False) -> int:
    """Directed cycles of the given length through the trigger edge.

    Counts distinct node tuples by default (edge_tuples=True multiplies by
    parallel-edge choices per leg). All member edges lie in [t - delta, t]
    and all cycle nodes are pairwise distinct. ordered=True additionally
    requires non-decreasing timestamps along the legs following the trigger,
    ending at or before the trigger time.
    """
    if length not in (2, 3, 4):
        raise ValueError(f"cycle length must be 2, 3 or 4, got {length}")
    u, v, t = int(graph.edge_src[edge_id]), int(graph.edge_dst[edge_id]), int(graph.edge_time[edge_id])
    if u == v:
        return 0
    t_lo = t - delta

    def leg(a: int, b: int) -> list[int]:
        return _edge_times_between(graph, a, b, t_lo, t) if a != b else []

    total = 0
    if length == 2:
        times = leg(v, u)
        if not times:
            return 0
        return len(times) if edge_tuples else 1

    if length == 3:
        mids = windowed_nodes(graph, v, "out", t_lo, t)
        for m in mids.tolist():
            if m == u:
                continue
            l1, l2 = leg(v, m), leg(m, u)
            if not l1 or not l2:
                continue
            if ordered and not _chain_satisfiable([l1, l2], t):
                continue
            total += len(l1) * len(l2) if edge_tuples else 1
        return total

    mids = windowed_nodes(graph, v, "out", t_lo, t)
    closers = windowed_nodes(graph, u, "in", t_lo, t)
    closer_set = set(closers.tolist())
    for m in mids.tolist():
        if m == u:
            continue
        l1 = leg(v, m)
        if not l1:
            continue
        for w in windowed_nodes(graph, m, "out", t_lo, t).tolist():
            if w == v or w == u or w == m or w not in closer_set:
                continue
            l2, l3 = leg(m, w), leg(w, u)
            if not l2 or not l3:
                continue
            if ordered and not _chain_satisfiable([l1, l2, l3], t):
                continue
            total += len(l1) * len(l2) * len(l3) if edge_tuples else 1
    return total


def count_scatter_gather(graph: TemporalGraph, edge_id: int, delta: int, k: int,
                         ordered: bool = False) -> int:
    """Qualifying scatter sources for a trigger taken as a gather edge.

    The trigger is mid -> destination. A source s (s != destination, reaching
    mid inside the window) qualifies when at least k intermediate accounts m
    carry both a scatter edge s->m and a gather edge m->destination inside
    the window. ordered=True demands a scatter-before-gather pair per
    intermediate.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    u, v, t = int(graph.edge_src[edge_id]), int(graph.edge_dst[edge_id]), int(graph.edge_time[edge_id])
    t_lo = t - delta
    sources = windowed_nodes(graph, u, "in", t_lo, t)
    if len(sources) == 0:
        return 0
    gather_nodes = set(windowed_nodes(graph, v, "in", t_lo, t).tolist())
    count = 0
    for s in sources.tolist():
        if s == v:
            continue
        mids = windowed_nodes(graph, s, "out", t_lo, t)
        hits = 0
        for m in mids.tolist():
            if m not in gather_nodes:
                continue
            if ordered:
                scat = _edge_times_between(graph, s, m, t_lo, t)
                gath = _edge_times_between(graph, m, v, t_lo, t)
                if not scat or not gath or scat[0] > gath[-1]:
                    continue
            hits += 1
        if hits >= k:
            count += 1
    return count


def count_stack(graph: TemporalGraph, edge_id: int, delta: int, ordered: bool = False) -> int:
    """Two-layer stacked flow a -> src -> dst -> c through the trigger.

    Product of distinct upstream senders (a != dst) and distinct downstream
    receivers (c != src). Unordered draws both layers from [t - delta, t];
    ordered draws the forward layer from [t, t + delta] instead.
    """
    u, v, t = int(graph.edge_src[edge_id]), int(graph.edge_dst[edge_id]), int(graph.edge_time[edge_id])
    upstream = windowed_nodes(graph, u, "in", t - delta, t)
    n_up = len(upstream) - (1 if v in upstream else 0)
    if n_up <= 0:
        return 0
    if ordered:
        downstream = windowed_nodes(graph, v, "out", t, t + delta)
    else:
        downstream = windowed_nodes(graph, v, "out", t - delta, t)
    n_down = len(downstream) - (1 if u in downstream else 0)
    return int(n_up * max(n_down, 0))


# ---------------------------------------------------------------------------
# Batch kernels (trigger attribution over a contiguous edge-id range)


def _seg_searchsorted(times: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                      target: np.ndarray, side: str) -> np.ndarray:
    """Per-row searchsorted inside [lo[i], hi[i]) segments of `times`."""
    lo = lo.astype(np.int64, copy=True)
    hi = hi.astype(np.int64, copy=True)
    active = lo < hi
    while active.any():
        mid = (lo + hi) >> 1
        vals = times[np.where(active, mid, 0)]
        go_right = (vals < target) if side == "left" else (vals <= target)
        go_right &= active
        lo = np.where(go_right, mid + 1, lo)
        hi = np.where(active & ~go_right, mid, hi)
        active = lo < hi
    return lo


def _batch_window_bounds(graph: TemporalGraph, nodes: np.ndarray, direction: str,
                         t_lo: np.ndarray, t_hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    indptr = graph.out_indptr if direction == "out" else graph.in_indptr
    times = graph.out_time if direction == "out" else graph.in_time
    seg_lo = indptr[nodes]
    seg_hi = indptr[nodes + 1]
    lo = _seg_searchsorted(times, seg_lo, seg_hi, t_lo, "left")
    hi = _seg_searchsorted(times, seg_lo, seg_hi, t_hi, "right")
    return lo, hi


def _batch_selfloop_counts(graph: TemporalGraph, nodes: np.ndarray,
                           t_lo: np.ndarray, t_hi: np.ndarray) -> np.ndarray:
    seg_lo = graph.selfloop_indptr[nodes]
    seg_hi = graph.selfloop_indptr[nodes + 1]
    if graph.selfloop_time.size == 0:
        return np.zeros(len(nodes), dtype=np.int64)
    lo = _seg_searchsorted(graph.selfloop_time, seg_lo, seg_hi, t_lo, "left")
    hi = _seg_searchsorted(graph.selfloop_time, seg_lo, seg_hi, t_hi, "right")
    return hi - lo


def batch_fan_degree(graph: TemporalGraph, delta: int, endpoint: str, direction: str,
                     exclude_trigger: bool, min_size: int, lo: int, hi: int) -> np.ndarray:
    """Windowed edge counts at one trigger endpoint for triggers [lo, hi)."""
    nodes = (graph.edge_src if endpoint == "N0" else graph.edge_dst)[lo:hi]
    t = graph.edge_time[lo:hi]
    t_lo, t_hi = t - delta, t
    blo, bhi = _batch_window_bounds(graph, nodes, direction, t_lo, t_hi)
    counts = bhi - blo
    counts = counts - _batch_selfloop_counts(graph, nodes, t_lo, t_hi)
    if exclude_trigger:
        counts = counts - (graph.edge_src[lo:hi] != graph.edge_dst[lo:hi]).astype(np.int64)
    if min_size > 1:
        counts = np.where(counts >= min_size, counts, 0)
    return counts.astype(np.int64)


def batch_cycle(graph: TemporalGraph, delta: int, length: int, min_size: int,
                lo: int, hi: int) -> np.ndarray:
    out = np.zeros(hi - lo, dtype=np.int64)
    src = graph.edge_src
    dst = graph.edge_dst
    tarr = graph.edge_time
    v_nodes = dst[lo:hi]
    t = tarr[lo:hi]
    blo, bhi = _batch_window_bounds(graph, v_nodes, "out", t - delta, t)
    active = np.flatnonzero((bhi > blo) & (src[lo:hi] != dst[lo:hi]))
    for i in active.tolist():
        eid = lo + i
        u, v, te = int(src[eid]), int(dst[eid]), int(t[i])
        t_lo = te - delta
        if length == 2:
            sel = graph.out_nbr[blo[i]:bhi[i]]
            raw = 1 if np.any(sel == u) else 0
        elif length == 3:
            mids = windowed_nodes(graph, v, "out", t_lo, te)
            closers = windowed_nodes(graph, u, "in", t_lo, te)
            mids = mids[mids != u]
            raw = len(intersect_sorted(mids, closers))
        else:
            raw = 0
            closers = set(windowed_nodes(graph, u, "in", t_lo, te).tolist())
            closers.discard(v)
            if closers:
                for m in windowed_nodes(graph, v, "out", t_lo, te).tolist():
                    if m == u:
                        continue
                    inner = 0
                    for w in windowed_nodes(graph, m, "out", t_lo, te).tolist():
                        if w != v and w in closers:
                            inner += 1
                    if inner >= min_size:
                        raw += inner
                out[i] = raw
                continue
        out[i] = raw if raw >= min_size else 0
    return out


def batch_scatter_gather(graph: TemporalGraph, delta: int, k: int,
                         lo: int, hi: int) -> np.ndarray:
    out = np.zeros(hi - lo, dtype=np.int64)
    src = graph.edge_src
    dst = graph.edge_dst
    u_nodes = src[lo:hi]
    t = graph.edge_time[lo:hi]
    blo, bhi = _batch_window_bounds(graph, u_nodes, "in", t - delta, t)
    active = np.flatnonzero(bhi > blo)
    in_nbr = graph.in_nbr
    for i in active.tolist():
        eid = lo + i
        u, v, te = int(src[eid]), int(dst[eid]), int(t[i])
        t_lo = te - delta
        sources = np.unique(in_nbr[blo[i]:bhi[i]])
        gather = None
        count = 0
        for s in sources.tolist():
            if s == v or s == u:
                continue
            mids = windowed_nodes(graph, s, "out", t_lo, te)
            if len(mids) < k:
                continue
            if gather is None:
                gather = windowed_nodes(graph, v, "in", t_lo, te)
            if len(intersect_sorted(mids, gather)) >= k:
                count += 1
        out[i] = count
    return out


def batch_stack(graph: TemporalGraph, delta: int, min_size: int,
                lo: int, hi: int) -> np.ndarray:
    out = np.zeros(hi - lo, dtype=np.int64)
    src = graph.edge_src
    dst = graph.edge_dst
    t = graph.edge_time[lo:hi]
    blo_u, bhi_u = _batch_window_bounds(graph, src[lo:hi], "in", t - delta, t)
    blo_v, bhi_v = _batch_window_bounds(graph, dst[lo:hi], "out", t - delta, t)
    in_nbr = graph.in_nbr
    out_nbr = graph.out_nbr
    active = np.flatnonzero((bhi_u > blo_u) & (bhi_v > blo_v))
    for i in active.tolist():
        eid = lo + i
        u, v = int(src[eid]), int(dst[eid])
        ups = in_nbr[blo_u[i]:bhi_u[i]]
        ups = np.unique(ups[(ups != u) & (ups != v)])
        if len(ups) < min_size:
            continue
        downs = out_nbr[blo_v[i]:bhi_v[i]]
        downs = np.unique(downs[(downs != v) & (downs != u)])
        if len(downs) < min_size:
            continue
        out[i] = len(ups) * len(downs)
    return out
