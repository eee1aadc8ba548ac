"""JSON schemas for every document the toolkit reads or writes."""

_NUMBER_LIST = {"type": "array", "items": {"type": "number"}}

PREDICTION_INDEX = {
    "type": "object",
    "required": ["images"],
    "properties": {
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["image_id", "width", "height", "items"],
                "properties": {
                    "image_id": {"type": "string"},
                    "width": {"type": "integer", "minimum": 1},
                    "height": {"type": "integer", "minimum": 1},
                    "items": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["confidence"],
                            "properties": {
                                "confidence": {"type": "number"},
                                "polygon": _NUMBER_LIST,
                                "rle": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                            },
                            "oneOf": [{"required": ["polygon"]}, {"required": ["rle"]}],
                        },
                    },
                },
            },
        }
    },
}

_PAIR = {
    "oneOf": [
        {"type": "array", "minItems": 2, "maxItems": 2,
         "prefixItems": [{"type": ["string", "null"]}, {"type": "string"}]},
        {"type": "object", "required": ["label"],
         "properties": {"image": {"type": ["string", "null"]}, "label": {"type": "string"}}},
    ]
}

MANIFEST = {
    "type": "object",
    "additionalProperties": {"type": "array", "items": _PAIR},
}

COMPUTE_PROFILE = {
    "type": "object",
    "required": ["model"],
    "properties": {
        "model": {"type": "string"},
        "params": {"type": "integer", "minimum": 0},
        "gflops": {"type": "number"},
        "times_ms": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "gpu_gb": {"type": "number"},
    },
}

_METRICS = {
    "type": "object",
    "required": ["tp", "fp", "fn", "precision", "recall", "f1", "mean_image_f1", "tau", "theta"],
    "properties": {
        "tp": {"type": "integer", "minimum": 0},
        "fp": {"type": "integer", "minimum": 0},
        "fn": {"type": "integer", "minimum": 0},
        "precision": {"type": "number", "minimum": 0, "maximum": 100},
        "recall": {"type": "number", "minimum": 0, "maximum": 100},
        "f1": {"type": "number", "minimum": 0, "maximum": 100},
        "mean_image_f1": {"type": "number", "minimum": 0, "maximum": 100},
        "ap50": {"type": ["number", "null"]},
        "tau": {"type": "number"},
        "theta": {"type": "number"},
    },
}

REPORT_BUNDLE = {
    "type": "object",
    "required": ["toolkit", "version", "command", "config", "digests"],
    "properties": {
        "toolkit": {"const": "denseval"},
        "version": {"type": "string"},
        "command": {"type": "string"},
        "config": {"type": "object"},
        "digests": {"type": "object", "additionalProperties": {"type": "string"}},
        "metrics": _METRICS,
        "dataset_stats": {"type": "array"},
        "efficiency": {"type": ["object", "null"]},
        "curve": {"type": "object"},
        "errors": {"type": "object"},
        "diagnostics": {"type": "object"},
    },
}

ERROR_DETAIL = {
    "type": "object",
    "required": ["precedence", "parameters", "records"],
    "properties": {
        "precedence": {"type": "array", "items": {"type": "string"}},
        "parameters": {"type": "object"},
        "records": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["image_id", "error_kind", "index", "category", "centroid"],
                "properties": {
                    "error_kind": {"enum": ["fp", "fn"]},
                    "category": {"enum": ["boundary", "low_contrast", "background_clutter",
                                          "occluded", "uncategorized"]},
                    "centroid": {"type": "array", "minItems": 2, "maxItems": 2},
                },
            },
        },
    },
}

# Column layouts of emitted CSV files.
SWEEP_COLUMNS = ["threshold", "tp", "fp", "fn", "precision", "recall", "f1", "mean_image_f1"]
BREAKDOWN_COLUMNS = ["error_kind", "category", "count"]
STATS_COLUMNS = ["split", "images", "total_instances", "mean_instances", "median_instances",
                 "min_instances", "max_instances", "coverage_pct", "error"]
