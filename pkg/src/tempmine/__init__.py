"""Temporal transaction-graph pattern mining.

Pipeline: parse transactions -> build the dual-CSR temporal graph -> parse
and validate multi-stage pattern files -> compile to execution plans ->
mine per-edge pattern-participation features in parallel -> export CSV for
a downstream classifier. A brute-force oracle provides ground truth for any
pattern on small graphs, and a synthetic generator plants known instances
for recovery tests.
"""

from .txgraph import (
    ColumnMapping,
    TemporalGraph,
    TransactionRecord,
    build_graph,
    find_start,
    parse_transactions,
    window_neighbors,
)
from .dsl import (
    PatternSpec,
    ValidatedPattern,
    format_pattern,
    load_pattern,
    must_validate,
    parse_pattern,
    validate,
)
from .plan import BUILTIN_COLUMNS, ExecutionPlan, compile_pattern, dump_plan, load_builtin
from .engine import FeatureMatrix, InstanceRecord, merge_features, mine
from .oracle import OracleReport, compare, enumerate_bruteforce
from .synth import SynthConfig, PlantSpec, generate

__all__ = [
    "BUILTIN_COLUMNS",
    "ColumnMapping",
    "ExecutionPlan",
    "FeatureMatrix",
    "InstanceRecord",
    "OracleReport",
    "PatternSpec",
    "PlantSpec",
    "SynthConfig",
    "TemporalGraph",
    "TransactionRecord",
    "ValidatedPattern",
    "build_graph",
    "compare",
    "compile_pattern",
    "dump_plan",
    "enumerate_bruteforce",
    "find_start",
    "format_pattern",
    "generate",
    "load_builtin",
    "load_pattern",
    "merge_features",
    "mine",
    "must_validate",
    "parse_pattern",
    "parse_transactions",
    "validate",
    "window_neighbors",
]

__version__ = "0.1.0"
