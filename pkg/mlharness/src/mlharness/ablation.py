"""Feature-ablation ladder over a mined feature CSV.

Reads the miner's per-edge feature export (edge_id,src,dst,timestamp,label,
<feature columns>), trains one gradient-boosted-tree classifier per feature
subset on the temporally first `split_fraction` of transactions, and reports
F1 on the laundering class plus a confusion matrix for the held-out tail.
The split is by timestamp, never random: no test row's timestamp precedes
any train row's.

Ladder (cumulative, mirroring the id-only -> +Fan -> +Degree -> +Cycle ->
+SG progression):

    id_only        src, dst
    fan            + fan_in, fan_out
    fan_degree     + deg_in_src, deg_out_src, deg_in_dst, deg_out_dst
    fan_degree_cycle      + cycle_2, cycle_3, cycle_4
    fan_degree_cycle_sg   + sg_count

Invoked standalone with a JSON config file:

    mlharness config.json

Config keys (defaults in parentheses): features_csv [required], metrics_csv
("metrics.csv"), metrics_json ("metrics.json"), split_fraction (0.8), seed
(0), model (hyperparameter overrides), ladder (subset-name -> column-list
override). Model hyperparameters are pinned in DEFAULT_MODEL_PARAMS for
reproducibility; results are seed-deterministic.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.ensemble import HistGradientBoostingClassifier
from sklearn.metrics import confusion_matrix, f1_score

ID_COLUMNS = ["src", "dst"]

LADDER: dict[str, list[str]] = {
    "id_only": [],
    "fan": ["fan_in", "fan_out"],
    "fan_degree": ["fan_in", "fan_out",
                   "deg_in_src", "deg_out_src", "deg_in_dst", "deg_out_dst"],
    "fan_degree_cycle": ["fan_in", "fan_out",
                         "deg_in_src", "deg_out_src", "deg_in_dst", "deg_out_dst",
                         "cycle_2", "cycle_3", "cycle_4"],
    "fan_degree_cycle_sg": ["fan_in", "fan_out",
                            "deg_in_src", "deg_out_src", "deg_in_dst", "deg_out_dst",
                            "cycle_2", "cycle_3", "cycle_4", "sg_count"],
}

DEFAULT_MODEL_PARAMS = {
    "max_iter": 200,
    "learning_rate": 0.1,
    "max_leaf_nodes": 31,
    "min_samples_leaf": 20,
    "l2_regularization": 0.0,
}


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    features_csv: str
    metrics_csv: str = "metrics.csv"
    metrics_json: str = "metrics.json"
    split_fraction: float = 0.8
    seed: int = 0
    model: dict = field(default_factory=dict)
    ladder: dict[str, list[str]] | None = None

    @staticmethod
    def from_file(path: str) -> "EvalConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if "features_csv" not in raw:
            raise HarnessError("config is missing 'features_csv'")
        known = {"features_csv", "metrics_csv", "metrics_json",
                 "split_fraction", "seed", "model", "ladder"}
        unknown = set(raw) - known
        if unknown:
            raise HarnessError(f"unknown config keys: {sorted(unknown)}")
        return EvalConfig(**raw)


def load_features(path: str) -> pd.DataFrame:
    frame = pd.read_csv(path)
    required = {"edge_id", "src", "dst", "timestamp", "label"}
    missing = required - set(frame.columns)
    if missing:
        raise HarnessError(f"feature CSV is missing columns: {sorted(missing)}")
    if frame["label"].isna().any():
        raise HarnessError("feature CSV has unlabeled rows; the harness needs ground truth")
    return frame


def temporal_split(frame: pd.DataFrame, fraction: float) -> tuple[pd.DataFrame, pd.DataFrame]:
    """First `fraction` of rows by timestamp (ties by edge_id) vs the rest."""
    if not 0.0 < fraction < 1.0:
        raise HarnessError(f"split_fraction must be in (0, 1), got {fraction}")
    ordered = frame.sort_values(["timestamp", "edge_id"], kind="stable")
    boundary = int(len(ordered) * fraction)
    if boundary == 0 or boundary == len(ordered):
        raise HarnessError("temporal split leaves one side empty")
    train = ordered.iloc[:boundary]
    test = ordered.iloc[boundary:]
    # the sort guarantees this; keep the explicit check as a tripwire
    if int(test["timestamp"].min()) < int(train["timestamp"].max()):
        raise AssertionError("temporal split violated: test precedes train")
    return train, test


def _evaluate_subset(train: pd.DataFrame, test: pd.DataFrame, columns: list[str],
                     seed: int, model_params: dict) -> dict:
    x_train = train[columns].to_numpy(dtype=np.float64)
    y_train = train["label"].to_numpy(dtype=np.int64)
    x_test = test[columns].to_numpy(dtype=np.float64)
    y_test = test["label"].to_numpy(dtype=np.int64)

    result: dict = {"columns": list(columns)}
    if len(np.unique(y_train)) < 2:
        result.update(f1=0.0, degenerate="single-class train split",
                      tp=0, fn=int((y_test == 1).sum()), fp=0,
                      tn=int((y_test == 0).sum()))
        return result

    params = dict(DEFAULT_MODEL_PARAMS)
    params.update(model_params)
    model = HistGradientBoostingClassifier(random_state=seed, **params)
    model.fit(x_train, y_train)
    pred = model.predict(x_test)

    if len(np.unique(y_test)) < 2:
        result["degenerate"] = "single-class test split"
    result["f1"] = float(f1_score(y_test, pred, pos_label=1, zero_division=0))
    cm = confusion_matrix(y_test, pred, labels=[1, 0])
    result.update(tp=int(cm[0, 0]), fn=int(cm[0, 1]),
                  fp=int(cm[1, 0]), tn=int(cm[1, 1]))
    return result


def run_ablation(config: EvalConfig) -> dict:
    """Train/evaluate every ladder rung; returns and writes the metrics."""
    frame = load_features(config.features_csv)
    train, test = temporal_split(frame, config.split_fraction)
    ladder = config.ladder if config.ladder is not None else LADDER

    results: dict[str, dict] = {}
    for subset_name, feature_cols in ladder.items():
        columns = ID_COLUMNS + [c for c in feature_cols if c != ""]
        absent = [c for c in columns if c not in frame.columns]
        if absent:
            raise HarnessError(f"subset {subset_name!r} needs missing columns {absent}")
        results[subset_name] = _evaluate_subset(train, test, columns,
                                                config.seed, config.model)

    payload = {
        "config": {
            "features_csv": config.features_csv,
            "split_fraction": config.split_fraction,
            "seed": config.seed,
            "model": {**DEFAULT_MODEL_PARAMS, **config.model},
        },
        "train_rows": len(train),
        "test_rows": len(test),
        "test_positives": int(test["label"].sum()),
        "subsets": results,
    }
    with open(config.metrics_json, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    with open(config.metrics_csv, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("subset,f1,tp,fn,fp,tn,degenerate\n")
        for name, res in results.items():
            fh.write(f"{name},{res['f1']:.4f},{res['tp']},{res['fn']},"
                     f"{res['fp']},{res['tn']},{res.get('degenerate', '')}\n")
    return payload


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: mlharness <config.json>", file=sys.stderr)
        return 2
    try:
        config = EvalConfig.from_file(argv[0])
        payload = run_ablation(config)
    except (HarnessError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{'subset':<22} {'F1':>7} {'TP':>7} {'FN':>7} {'FP':>7} {'TN':>9}")
    for name, res in payload["subsets"].items():
        flag = " *" + res["degenerate"] if "degenerate" in res else ""
        print(f"{name:<22} {res['f1']:>7.4f} {res['tp']:>7} {res['fn']:>7} "
              f"{res['fp']:>7} {res['tn']:>9}{flag}")
    print(f"metrics written to {config.metrics_csv} and {config.metrics_json}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
