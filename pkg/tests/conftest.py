"""Shared fixtures and graph builders for the test suite."""

from __future__ import annotations

import dataclasses
import random

import pytest

from tempmine import dsl, plan
from tempmine.txgraph import TemporalGraph, TransactionRecord, build_graph


def graph_from_edges(edges, currency="SYN", labels=None) -> TemporalGraph:
    """edges: iterable of (src, dst, timestamp[, amount]) tuples."""
    records = []
    for i, edge in enumerate(edges):
        amount = edge[3] if len(edge) > 3 else 100.0
        label = labels[i] if labels is not None else None
        records.append(TransactionRecord(i, edge[0], edge[1], edge[2],
                                         amount, currency, label))
    return build_graph(records)


def random_records(rng: random.Random, n_nodes: int, n_edges: int, horizon: int,
                   selfloops: bool = True) -> list[TransactionRecord]:
    records = []
    for i in range(n_edges):
        u = rng.randrange(n_nodes)
        v = rng.randrange(n_nodes)
        if not selfloops:
            while v == u:
                v = rng.randrange(n_nodes)
        records.append(TransactionRecord(i, u, v, rng.randrange(horizon), 100.0, "SYN"))
    return records


def random_graph(rng: random.Random, n_nodes: int, n_edges: int, horizon: int,
                 selfloops: bool = True) -> TemporalGraph:
    return build_graph(random_records(rng, n_nodes, n_edges, horizon, selfloops))


def builtin_with(name: str, delta: int, attribution: str = "trigger",
                 min_size: int | None = None, new_name: str | None = None) -> dsl.ValidatedPattern:
    """A shipped builtin re-parameterized for tests."""
    vp = plan.load_builtin(name)
    spec = dataclasses.replace(vp.spec, delta=delta, attribution=attribution)
    if min_size is not None:
        spec = dataclasses.replace(spec, emit=dataclasses.replace(spec.emit, min_size=min_size))
    if new_name is not None:
        spec = dataclasses.replace(spec, name=new_name)
    return dsl.must_validate(spec)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC0FFEE)
