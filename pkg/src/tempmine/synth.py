"""Synthetic transaction graphs with planted pattern instances.

Background traffic draws sources from a power-law weight profile (skewed
out-degree, exponent configurable) with uniform timestamps; plants insert
whole pattern instances whose member edges fit inside a per-instance time
span, so mining with delta >= span must rediscover them. Ground truth is
returned as InstanceRecords keyed by final edge ids (node ids are the
generator's; a CSV round-trip renumbers nodes by first-seen order but keeps
edge ids, which is what the recovery contract matches on).

Everything is driven by one seeded PCG64 stream: equal seeds give
byte-identical CSV and ground-truth files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .engine import InstanceRecord
from .txgraph import TransactionRecord


class SynthError(ValueError):
    pass


PLANT_KINDS = ("sg_count", "cycle_2", "cycle_3", "cycle_4", "stack_count")


@dataclass(frozen=True)
class PlantSpec:
    kind: str
    count: int
    fanout: tuple[int, int] = (3, 8)  # sg / stack intermediate range
    span: int = 3600  # max member-edge time spread per instance


@dataclass(frozen=True)
class SynthConfig:
    node_count: int
    background_edge_count: int
    time_horizon: int
    seed: int = 7
    plants: tuple[PlantSpec, ...] = ()
    label_planted: bool = True
    powerlaw_exponent: float = 2.1


def _check_plant(cfg: SynthConfig, i: int, plant: PlantSpec) -> None:
    name = f"plant {i} ({plant.kind} x{plant.count})"
    if plant.kind not in PLANT_KINDS:
        raise SynthError(f"{name}: unknown kind (legal: {', '.join(PLANT_KINDS)})")
    if plant.count < 0:
        raise SynthError(f"{name}: negative count")
    lo, hi = plant.fanout
    if lo < 1 or hi < lo:
        raise SynthError(f"{name}: bad fanout range {plant.fanout}")
    need_nodes = {"sg_count": hi + 2, "cycle_2": 2, "cycle_3": 3,
                  "cycle_4": 4, "stack_count": 2 * hi + 2}[plant.kind]
    if need_nodes > cfg.node_count:
        raise SynthError(f"{name}: needs {need_nodes} distinct nodes, graph has {cfg.node_count}")
    min_span = {"sg_count": 2 * hi, "cycle_2": 2, "cycle_3": 3,
                "cycle_4": 4, "stack_count": 2 * hi}[plant.kind]
    if plant.span < min_span:
        raise SynthError(f"{name}: span {plant.span} too small (needs >= {min_span})")
    if plant.span >= cfg.time_horizon:
        raise SynthError(f"{name}: span {plant.span} exceeds the time horizon")


def generate(config: SynthConfig) -> tuple[list[TransactionRecord], list[InstanceRecord]]:
    """Background edges plus planted instances; deterministic under seed."""
    if config.node_count <= 1:
        raise SynthError("node_count must be at least 2")
    if config.background_edge_count < 0 or config.time_horizon <= 1:
        raise SynthError("background_edge_count and time_horizon must be positive")
    for i, plant in enumerate(config.plants):
        _check_plant(config, i, plant)

    rng = np.random.Generator(np.random.PCG64(config.seed))
    n = config.node_count

    # Skewed out-degree profile over a shuffled node order so hubs are not
    # always the low ids.
    weights = (np.arange(1, n + 1, dtype=np.float64)) ** (-config.powerlaw_exponent)
    weights /= weights.sum()
    hub_order = rng.permutation(n)

    m = config.background_edge_count
    src = hub_order[rng.choice(n, size=m, p=weights)]
    dst = rng.integers(0, n, size=m)
    clash = src == dst
    while clash.any():
        dst[clash] = rng.integers(0, n, size=int(clash.sum()))
        clash = src == dst
    times = rng.integers(0, config.time_horizon, size=m)
    amounts = np.round(rng.uniform(10.0, 10000.0, size=m), 2)

    records: list[TransactionRecord] = []
    labeled = config.label_planted

    def add_edge(u: int, v: int, t: int, planted: bool) -> int:
        eid = len(records)
        amount = float(amounts[eid % max(m, 1)]) if m else round(10 + (eid % 9990) * 1.0, 2)
        records.append(TransactionRecord(
            edge_id=eid, src=int(u), dst=int(v), timestamp=int(t),
            amount=amount, currency="SYN",
            label=(planted if labeled else None)))
        return eid

    for u, v, t in zip(src.tolist(), dst.tolist(), times.tolist()):
        add_edge(u, v, t, False)

    instances: list[InstanceRecord] = []
    for plant in config.plants:
        lo, hi = plant.fanout
        for _ in range(plant.count):
            span = plant.span
            t0 = int(rng.integers(0, config.time_horizon - span))
            if plant.kind == "sg_count":
                f = int(rng.integers(lo, hi + 1))
                nodes = rng.choice(n, size=f + 2, replace=False)
                s, d = int(nodes[0]), int(nodes[1])
                mids = nodes[2:].tolist()
                edges = []
                for i, mid in enumerate(mids):
                    edges.append(add_edge(s, mid, t0 + i, True))
                for i, mid in enumerate(mids):
                    edges.append(add_edge(mid, d, t0 + span // 2 + i, True))
                member_nodes = sorted({s, d, *mids})
            elif plant.kind.startswith("cycle_"):
                length = int(plant.kind.split("_")[1])
                nodes = rng.choice(n, size=length, replace=False).tolist()
                step = max(1, span // length)
                edges = []
                for i in range(length):
                    u, v = nodes[i], nodes[(i + 1) % length]
                    edges.append(add_edge(u, v, t0 + i * step, True))
                member_nodes = sorted(nodes)
            else:  # stack_count
                f_in = int(rng.integers(lo, hi + 1))
                f_out = int(rng.integers(lo, hi + 1))
                nodes = rng.choice(n, size=f_in + f_out + 2, replace=False).tolist()
                u, v = nodes[0], nodes[1]
                ups = nodes[2:2 + f_in]
                downs = nodes[2 + f_in:]
                edges = []
                for i, a in enumerate(ups):
                    edges.append(add_edge(a, u, t0 + i, True))
                for j, c in enumerate(downs):
                    edges.append(add_edge(v, c, t0 + span // 2 + j, True))
                edges.append(add_edge(u, v, t0 + span, True))
                member_nodes = sorted({u, v, *ups, *downs})
            trigger = max(edges, key=lambda e: (records[e].timestamp, e))
            instances.append(InstanceRecord(
                pattern=plant.kind,
                trigger_edge=trigger,
                member_edges=tuple(sorted(edges)),
                member_nodes=tuple(member_nodes),
            ))
    return records, instances


CSV_HEADER = ("Timestamp,From Bank,Account,To Bank,Account,Amount Received,"
              "Receiving Currency,Amount Paid,Payment Currency,Payment Format,Is Laundering")


def write_csv(records: list[TransactionRecord], path: str) -> None:
    """IBM-layout CSV (integer tick timestamps) that the parser ingests."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            label = "" if rec.label is None else str(int(rec.label))
            fh.write(f"{rec.timestamp},0,{rec.src},0,{rec.dst},"
                     f"{rec.amount},{rec.currency},{rec.amount},{rec.currency},"
                     f"Wire,{label}\n")


def write_truth(instances: list[InstanceRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json_dict(), separators=(",", ":")) + "\n")


def read_truth(path: str) -> list[InstanceRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(InstanceRecord(
                pattern=obj["pattern"],
                trigger_edge=int(obj["trigger_edge"]),
                member_edges=tuple(obj["member_edges"]),
                member_nodes=tuple(obj["member_nodes"]),
            ))
    return out
