"""Classifier-side consumer of the miner's feature CSV export."""

from .ablation import (
    DEFAULT_MODEL_PARAMS,
    LADDER,
    EvalConfig,
    HarnessError,
    load_features,
    run_ablation,
    temporal_split,
)

__all__ = [
    "DEFAULT_MODEL_PARAMS",
    "LADDER",
    "EvalConfig",
    "HarnessError",
    "load_features",
    "run_ablation",
    "temporal_split",
]
