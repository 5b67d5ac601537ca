"""Versioned binary graph cache for fast reload.

Layout (all integers little-endian, arrays raw contiguous bytes), see
docs/cache_format.md for the normative description:

    magic      8 bytes  b"TMGCACHE"
    version    u32      currently 1
    reserved   u32      zero
    node_count u64
    edge_count u64
    n_currency u32
    reserved   u32      zero
    edge_src      int64[E]
    edge_dst      int64[E]
    edge_time     int64[E]
    edge_amount   float64[E]
    edge_currency int32[E]
    edge_label    int8[E]
    vocab         n_currency x (u32 byte-length, utf-8 bytes)

The CSR adjacency is rebuilt on load (a deterministic function of the edge
table); only within-version stability is promised.
"""

from __future__ import annotations

import struct

import numpy as np

from .txgraph import TemporalGraph

MAGIC = b"TMGCACHE"
VERSION = 1


class CacheFormatError(ValueError):
    pass


def save_graph(graph: TemporalGraph, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQQII", VERSION, 0, graph.node_count, graph.edge_count,
                             len(graph.currency_vocab), 0))
        for arr in (graph.edge_src, graph.edge_dst, graph.edge_time,
                    graph.edge_amount, graph.edge_currency, graph.edge_label):
            fh.write(np.ascontiguousarray(arr).tobytes())
        for code in graph.currency_vocab:
            raw = code.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def load_graph(path: str) -> TemporalGraph:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CacheFormatError(f"not a graph cache (bad magic {magic!r})")
        version, _, node_count, edge_count, n_currency, _ = struct.unpack("<IIQQII", fh.read(32))
        if version != VERSION:
            raise CacheFormatError(f"unsupported cache version {version} (expected {VERSION})")

        def read_array(dtype: str, count: int) -> np.ndarray:
            dt = np.dtype(dtype)
            raw = fh.read(dt.itemsize * count)
            if len(raw) != dt.itemsize * count:
                raise CacheFormatError("truncated cache file")
            return np.frombuffer(raw, dtype=dt).copy()

        src = read_array("<i8", edge_count)
        dst = read_array("<i8", edge_count)
        time = read_array("<i8", edge_count)
        amount = read_array("<f8", edge_count)
        currency = read_array("<i4", edge_count)
        label = read_array("i1", edge_count)
        vocab = []
        for _ in range(n_currency):
            (ln,) = struct.unpack("<I", fh.read(4))
            vocab.append(fh.read(ln).decode("utf-8"))
    return TemporalGraph(node_count, src, dst, time, amount, currency, label, tuple(vocab))
