"""JSON Schemas for the ``--json`` output of ``check`` and ``bench``."""

STATS = {
    "type": "object",
    "required": ["nodes", "memo_hits", "solver_queries", "max_depth", "elapsed"],
    "properties": {
        "nodes": {"type": "integer", "minimum": 0},
        "opponent_nodes": {"type": "integer", "minimum": 0},
        "memo_hits": {"type": "integer", "minimum": 0},
        "solver_queries": {"type": "integer", "minimum": 0},
        "max_depth": {"type": "integer", "minimum": 0},
        "sep_splits": {"type": "integer", "minimum": 0},
        "sep_fallbacks": {"type": "integer", "minimum": 0},
        "reentry_skips": {"type": "integer", "minimum": 0},
        "reentry_violations": {"type": "integer", "minimum": 0},
        "inv_applied": {"type": "integer", "minimum": 0},
        "inv_failed": {"type": "integer", "minimum": 0},
        "dedups": {"type": "integer", "minimum": 0},
        "witness_candidates": {"type": "integer", "minimum": 0},
        "replay_rejects": {"type": "integer", "minimum": 0},
        "elapsed": {"type": "number", "minimum": 0},
    },
}

REASONS = ["BoundExhausted", "FuelExhausted", "SolverUnknown", "ReentryViolated",
           "InvariantFailed", "ReplayFailed"]

CHECK_REPORT = {
    "type": "object",
    "required": ["file", "verdict"],
    "properties": {
        "file": {"type": "string"},
        "verdict": {"enum": ["equivalent", "inequivalent", "inconclusive", "error"]},
        "expected": {"type": ["string", "null"]},
        "bound": {"type": "integer", "minimum": 0},
        "trace": {"type": "array", "items": {"type": "string"}},
        "sides": {"type": "array", "items": {"enum": ["both", "left", "right"]}},
        "survivor": {"enum": ["left", "right"]},
        "model": {"type": "object", "additionalProperties": {"type": ["integer", "boolean", "null"]}},
        "reasons": {"type": "array", "items": {"enum": REASONS}, "minItems": 1},
        "error": {"type": "string"},
        "stats": STATS,
    },
    "allOf": [
        {"if": {"properties": {"verdict": {"const": "inequivalent"}}},
         "then": {"required": ["trace", "sides", "survivor", "model", "stats"]}},
        {"if": {"properties": {"verdict": {"const": "inconclusive"}}},
         "then": {"required": ["reasons", "stats"]}},
        {"if": {"properties": {"verdict": {"const": "equivalent"}}},
         "then": {"required": ["stats"]}},
        {"if": {"properties": {"verdict": {"const": "error"}}},
         "then": {"required": ["error"]}},
    ],
}

BENCH_REPORT = {
    "type": "object",
    "required": ["corpus", "configs", "false_verdicts"],
    "properties": {
        "corpus": {"type": "string"},
        "configs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "eq_proved", "ineq_found", "inconclusive", "errors", "seconds", "files"],
                "properties": {
                    "name": {"type": "string"},
                    "eq_proved": {"type": "integer", "minimum": 0},
                    "ineq_found": {"type": "integer", "minimum": 0},
                    "inconclusive": {"type": "integer", "minimum": 0},
                    "errors": {"type": "integer", "minimum": 0},
                    "seconds": {"type": "number", "minimum": 0},
                    "files": {"type": "array", "items": CHECK_REPORT},
                },
            },
        },
        "false_verdicts": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["config", "file", "verdict"],
            },
        },
    },
}
