"""
JSON Schemas for the files written by the puprior CLI.

The estimate result schema mirrors the documented result layout; the report
schema covers the experiment reports written by `synth` and `bench`.
"""

from typing import Dict

ESTIMATE_RESULT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "puprior estimate result",
    "type": "object",
    "required": [
        "method", "theta_hat", "curve", "hyperparams",
        "n", "n_prime", "b", "seed", "wall_ms", "warnings"
    ],
    "properties": {
        "method": {"type": "string"},
        "theta_hat": {"type": "number", "minimum": 0.0, "maximum": 1.0},
        "curve": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["theta", "value"],
                "properties": {
                    "theta": {"type": "number"},
                    "value": {"type": ["number", "null"]}
                }
            }
        },
        "hyperparams": {
            "type": "object",
            "required": ["sigma", "lambda"],
            "properties": {
                "sigma": {"type": ["number", "null"]},
                "lambda": {"type": ["number", "null"]}
            }
        },
        "n": {"type": "integer", "minimum": 1},
        "n_prime": {"type": "integer", "minimum": 1},
        "b": {"type": ["integer", "null"]},
        "seed": {"type": "integer"},
        "wall_ms": {"type": "number", "minimum": 0},
        "warnings": {"type": "array", "items": {"type": "string"}}
    }
}

TRIAL_RECORD_SCHEMA = {
    "type": "object",
    "required": ["seed", "status"],
    "properties": {
        "seed": {"type": "integer"},
        "status": {"enum": ["ok", "failed"]},
        "theta_hat": {"type": ["number", "null"]},
        "true_prior": {"type": ["number", "null"]},
        "misclassification": {"type": ["number", "null"]},
        "hyperparams": {"type": ["object", "null"]},
        "wall_ms": {"type": ["number", "null"]},
        "error": {"type": ["string", "null"]}
    }
}

EXPERIMENT_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "puprior experiment report",
    "type": "object",
    "required": ["method", "config", "records", "aggregates"],
    "properties": {
        "method": {"type": "string"},
        "config": {"type": "object"},
        "records": {"type": "array", "items": TRIAL_RECORD_SCHEMA},
        "aggregates": {
            "type": "object",
            "required": ["trials", "successful", "mean", "std", "mse"],
            "properties": {
                "trials": {"type": "integer"},
                "successful": {"type": "integer"},
                "mean": {"type": ["number", "null"]},
                "std": {"type": ["number", "null"]},
                "mse": {"type": ["number", "null"]}
            }
        }
    }
}


def get_schema(kind: str = "estimate") -> Dict:
    """
    Get the JSON Schema for a result file kind.

    Args:
        kind: "estimate" or "report"

    Returns:
        dict: JSON Schema
    """
    schemas = {
        "estimate": ESTIMATE_RESULT_SCHEMA,
        "report": EXPERIMENT_REPORT_SCHEMA
    }

    return schemas.get(kind, ESTIMATE_RESULT_SCHEMA)


SCHEMA_VERSION = "1.0.0"
