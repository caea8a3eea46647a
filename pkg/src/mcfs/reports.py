"""Machine-readable run reports: schema, serialization, and file output.

Every report is validated against REPORT_SCHEMA before it touches disk.
Two runs with identical flags produce byte-identical JSON apart from the
wall-time fields.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema

SCHEMA_VERSION = 1

CURVE_COLUMNS = ("episode", "eval", "length", "loss", "wall_ms")

_METRICS_SCHEMA = {
    "type": "object",
    "properties": {
        "accuracy": {"type": "number"},
        "f1_macro": {"type": "number"},
        "f1_micro": {"type": "number"},
        "confusion": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer"}},
        },
        "n_samples": {"type": "integer", "minimum": 0},
    },
    "required": ["accuracy", "f1_macro", "f1_micro", "confusion",
                 "n_samples"],
    "additionalProperties": False,
}

_SUBSET_SCHEMA = {
    "type": "object",
    "properties": {
        "indices": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
        },
        "names": {"type": "array", "items": {"type": "string"}},
    },
    "required": ["indices", "names"],
    "additionalProperties": False,
}

_BASELINE_SCHEMA = {
    "type": "object",
    "properties": {
        "subset": _SUBSET_SCHEMA,
        "metrics": _METRICS_SCHEMA,
    },
    "required": ["subset", "metrics"],
    "additionalProperties": False,
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "config": {
            "type": "object",
            "properties": {
                "episodes": {"type": "integer", "minimum": 1},
                "gamma": {"type": "number"},
                "epsilon": {"type": "number"},
                "stop_threshold": {"type": "number"},
                "shaping_coeff": {"type": "number"},
                "advise_steps": {"type": "integer"},
                "max_global_steps": {"type": "integer"},
                "batch_size": {"type": "integer"},
                "memory_capacity": {"type": "integer"},
                "learning_rate": {"type": "number"},
                "updates_per_episode": {"type": "integer"},
                "return_mode": {"enum": ["forward", "reversed"]},
                "recalc_mode": {
                    "enum": ["rejection_control", "stop_ratio"]
                },
                "behavior_mode": {"enum": ["greedy", "random"]},
                "state_mode": {"enum": ["meta", "autoencoder"]},
                "utility_mode": {"enum": ["rv", "rd", "rvrd"]},
                "weights": {
                    "type": "object",
                    "properties": {
                        "w_acc": {"type": "number"},
                        "w_rv": {"type": "number"},
                        "w_rd": {"type": "number"},
                    },
                    "required": ["w_acc", "w_rv", "w_rd"],
                    "additionalProperties": False,
                },
                "eval_trees": {"type": "integer"},
                "seed": {"type": "integer"},
            },
            "required": ["episodes", "gamma", "epsilon", "stop_threshold",
                         "shaping_coeff", "advise_steps", "seed", "weights"],
            "additionalProperties": False,
        },
        "dataset": {
            "type": "object",
            "properties": {
                "source": {"type": "string"},
                "n_samples": {"type": "integer", "minimum": 1},
                "n_features": {"type": "integer", "minimum": 1},
                "n_classes": {"type": "integer", "minimum": 2},
                "train_ratio": {"type": "number"},
                "informative": {
                    "type": "array",
                    "items": {"type": "integer"},
                },
            },
            "required": ["source", "n_samples", "n_features", "n_classes"],
            "additionalProperties": True,
        },
        "best_subset": _SUBSET_SCHEMA,
        "greedy_subset": _SUBSET_SCHEMA,
        "best_eval": {"type": "number"},
        "test_metrics": {"anyOf": [_METRICS_SCHEMA, {"type": "null"}]},
        "baselines": {
            "anyOf": [
                {
                    "type": "object",
                    "additionalProperties": _BASELINE_SCHEMA,
                },
                {"type": "null"},
            ],
        },
        "curves": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "episode": {"type": "integer", "minimum": 1},
                    "eval": {"type": "number"},
                    "length": {"type": "integer", "minimum": 1},
                    "loss": {"type": "number"},
                    "wall_ms": {"type": "number"},
                },
                "required": list(CURVE_COLUMNS),
                "additionalProperties": False,
            },
        },
        "episodes_completed": {"type": "integer", "minimum": 0},
        "total_steps": {"type": "integer", "minimum": 0},
        "decision_counts": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
        },
        "seed": {"type": "integer"},
        "total_wall_ms": {"type": "number"},
    },
    "required": ["schema_version", "config", "best_subset", "greedy_subset",
                 "best_eval", "test_metrics", "baselines", "curves",
                 "episodes_completed", "total_steps", "decision_counts",
                 "seed", "total_wall_ms"],
    "additionalProperties": False,
}


def subset_payload(indices, feature_names) -> dict:
    idx = sorted(int(i) for i in indices)
    return {"indices": idx, "names": [feature_names[i] for i in idx]}


def config_to_dict(config) -> dict:
    w = config.weights
    return {
        "episodes": config.episodes,
        "gamma": config.gamma,
        "epsilon": config.epsilon,
        "stop_threshold": config.stop_threshold,
        "shaping_coeff": config.shaping_coeff,
        "advise_steps": config.advise_steps,
        "max_global_steps": config.max_global_steps,
        "batch_size": config.batch_size,
        "memory_capacity": config.memory_capacity,
        "learning_rate": config.learning_rate,
        "updates_per_episode": config.updates_per_episode,
        "return_mode": config.return_mode,
        "recalc_mode": config.recalc_mode,
        "behavior_mode": config.behavior_mode,
        "state_mode": config.state_mode,
        "utility_mode": config.utility_mode,
        "weights": {"w_acc": w.w_acc, "w_rv": w.w_rv, "w_rd": w.w_rd},
        "eval_trees": config.eval_trees,
        "seed": config.seed,
    }


def report_to_dict(run, feature_names, dataset=None, test_metrics=None,
                   baselines=None) -> dict:
    """Flatten an engine report plus harness additions into schema form."""
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(run.config),
        **({"dataset": dataset} if dataset is not None else {}),
        "best_subset": subset_payload(run.best_subset, feature_names),
        "greedy_subset": subset_payload(run.greedy_subset, feature_names),
        "best_eval": run.best_eval,
        "test_metrics": test_metrics,
        "baselines": baselines,
        "curves": [
            {
                "episode": c.episode,
                "eval": c.eval,
                "length": c.length,
                "loss": c.loss,
                "wall_ms": c.wall_ms,
            }
            for c in run.curves
        ],
        "episodes_completed": run.episodes_completed,
        "total_steps": run.total_steps,
        "decision_counts": list(run.decision_counts),
        "seed": run.config.seed,
        "total_wall_ms": run.total_wall_ms,
    }


def validate_report(payload: dict) -> None:
    jsonschema.validate(payload, REPORT_SCHEMA)


def write_report_files(payload: dict, out_dir) -> tuple[Path, Path]:
    """Validate, then write report.json and curves.csv under out_dir."""
    validate_report(payload)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    json_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    csv_path = out / "curves.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for row in payload["curves"]:
            writer.writerow([row[c] for c in CURVE_COLUMNS])
    return json_path, csv_path


def load_report(path) -> dict:
    payload = json.loads(Path(path).read_text())
    validate_report(payload)
    return payload
