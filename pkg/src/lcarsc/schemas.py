"""JSON Schemas for the documents written by the command-line tool."""

SCHEMA_VERSION = 1

_number_or_null = {"type": ["number", "null"]}
_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_version = {"const": SCHEMA_VERSION}

FIT = {
    "type": "object",
    "required": ["schema_version", "kind", "labels", "theta_hat", "method", "tau", "k", "seed",
                 "n", "j", "m_levels"],
    "properties": {
        "schema_version": _version,
        "kind": {"const": "fit"},
        "labels": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "theta_hat": _matrix,
        "method": {"enum": ["rsc", "rscn", "rscors", "pca", "rmk", "rlmk"]},
        "tau": _number_or_null,
        "k": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "n": {"type": "integer"},
        "j": {"type": "integer"},
        "m_levels": {"type": "integer", "minimum": 1},
    },
}

SELECT_K = {
    "type": "object",
    "required": ["schema_version", "kind", "method", "q", "k_hat", "failures", "seed", "repeats"],
    "properties": {
        "schema_version": _version,
        "kind": {"const": "select_k"},
        "method": {"enum": ["rsc", "rscn", "rscors", "pca", "rmk", "rlmk"]},
        "q": {
            "type": "array",
            "items": {"type": "object", "required": ["k", "Q"],
                      "properties": {"k": {"type": "integer"}, "Q": _number_or_null}},
        },
        "k_hat": {"type": "integer", "minimum": 1},
        "failures": {
            "type": "array",
            "items": {"type": "object", "required": ["k", "error"],
                      "properties": {"k": {"type": "integer"}, "error": {"type": "string"}}},
        },
        "seed": {"type": "integer"},
        "repeats": {"type": "integer", "minimum": 1},
    },
}

EXPERIMENT = {
    "type": "object",
    "required": ["schema_version", "kind", "config", "rows"],
    "properties": {
        "schema_version": _version,
        "kind": {"const": "experiment_report"},
        "config": {"type": "object"},
        "rows": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["n", "j", "rho", "c0", "method", "repetitions", "n_ok", "failures",
                             "mean_clustering_error", "mean_hamming_error", "mean_nmi", "mean_ari",
                             "mean_rel_l1", "mean_rel_l2", "k_accuracy"],
                "properties": {
                    "repetitions": {"type": "integer", "minimum": 1},
                    "k_accuracy": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                },
            },
        },
    },
}

TOY = {
    "type": "object",
    "required": ["schema_version", "kind", "seed", "table"],
    "properties": {
        "schema_version": _version,
        "kind": {"const": "toy_example"},
        "table": {"type": "array", "items": {"type": "object", "required": ["method", "k_hat"]}},
    },
}

DIAGNOSE = {
    "type": "object",
    "required": ["schema_version", "kind", "model", "diagnostics", "curve"],
    "properties": {
        "schema_version": _version,
        "kind": {"const": "diagnose"},
        "diagnostics": {
            "type": "object",
            "required": ["delta_min", "delta_max", "sigma_k_b", "rho", "epsilon_tau", "varrho_tau",
                         "assumption_1_holds"],
        },
        "curve": {
            "type": "array",
            "items": {"type": "object", "required": ["tau", "ratio", "epsilon_tau"]},
        },
    },
}
