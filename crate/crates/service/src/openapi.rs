use serde_json::{json, Value};

fn error_response(description: &str) -> Value {
    json!({
        "description": description,
        "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } }
    })
}

fn ok(schema: &str) -> Value {
    json!({
        "description": "OK",
        "content": { "application/json": { "schema": { "$ref": format!("#/components/schemas/{schema}") } } }
    })
}

fn number_query(name: &str, description: &str) -> Value {
    json!({ "name": name, "in": "query", "required": true, "description": description, "schema": { "type": "number" } })
}

/// OpenAPI 3.0 description of the service, served at `GET /spec`.
pub(crate) fn document() -> Value {
    let pump_errors = error_response("Invalid input, no real root, or flow outside the admissible range");
    json!({
        "openapi": "3.0.3",
        "info": {
            "title": "podi-service",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Reduced-order field evaluation and LVAD pump-curve calculations. \
                Pressures in mmHg, speeds in rpm, flow rates in l/min."
        },
        "paths": {
            "/health": {
                "get": {
                    "summary": "Service status and number of loaded models",
                    "responses": { "200": ok("Health"), "406": error_response("Accept header excludes application/json") }
                }
            },
            "/spec": {
                "get": { "summary": "This document", "responses": { "200": { "description": "OpenAPI document" } } }
            },
            "/models": {
                "get": {
                    "summary": "List loaded models",
                    "responses": { "200": { "description": "OK" } }
                },
                "post": {
                    "summary": "Load a model from a path reference or an upload",
                    "requestBody": {
                        "required": true,
                        "content": {
                            "application/json": { "schema": { "$ref": "#/components/schemas/LoadRequest" } },
                            "multipart/form-data": {
                                "schema": {
                                    "type": "object",
                                    "required": ["model"],
                                    "properties": {
                                        "model": { "type": "string", "format": "binary" },
                                        "id": { "type": "string" }
                                    }
                                }
                            }
                        }
                    },
                    "responses": {
                        "201": ok("ModelEntry"),
                        "400": error_response("Corrupt model, unsupported version, or unreadable file"),
                        "409": error_response("Model id already loaded"),
                        "413": { "description": "Payload too large" },
                        "422": error_response("Invalid model id")
                    }
                }
            },
            "/models/{id}": {
                "get": {
                    "summary": "Model metadata",
                    "parameters": [{ "name": "id", "in": "path", "required": true, "schema": { "type": "string" } }],
                    "responses": { "200": ok("ModelEntry"), "404": error_response("Unknown model") }
                }
            },
            "/models/{id}/evaluate": {
                "post": {
                    "summary": "Reconstruct a field at a parameter",
                    "parameters": [
                        { "name": "id", "in": "path", "required": true, "schema": { "type": "string" } },
                        { "name": "stride", "in": "query", "required": false, "schema": { "type": "integer", "minimum": 1 } }
                    ],
                    "requestBody": {
                        "required": true,
                        "content": { "application/json": { "schema": { "$ref": "#/components/schemas/EvaluateRequest" } } }
                    },
                    "responses": {
                        "200": ok("FieldResponse"),
                        "404": error_response("Unknown model or field"),
                        "422": error_response("Dimension mismatch, invalid stride, or parameter outside the declared range")
                    }
                }
            },
            "/pump/forward": {
                "get": {
                    "summary": "Head from speed and flow",
                    "parameters": [number_query("omega", "rpm"), number_query("pf", "l/min")],
                    "responses": { "200": ok("PumpPoint"), "422": pump_errors }
                }
            },
            "/pump/inverse": {
                "get": {
                    "summary": "Flow from speed and head, checked against the admissible range",
                    "parameters": [number_query("omega", "rpm"), number_query("dp", "mmHg")],
                    "responses": { "200": ok("PumpPoint"), "422": pump_errors }
                }
            },
            "/pump/calibrate": {
                "get": {
                    "summary": "Head at a measured speed and flow",
                    "parameters": [number_query("omega", "rpm"), number_query("pf", "l/min")],
                    "responses": { "200": ok("PumpPoint"), "422": pump_errors }
                }
            },
            "/pump/curve": {
                "get": {
                    "summary": "Equispaced samples of the head curve over the admissible flow range",
                    "parameters": [
                        number_query("omega", "rpm"),
                        { "name": "n", "in": "query", "required": false, "schema": { "type": "integer", "minimum": 2, "maximum": 10000, "default": 50 } }
                    ],
                    "responses": { "200": { "description": "OK" }, "422": pump_errors }
                }
            }
        },
        "components": {
            "schemas": {
                "Error": {
                    "type": "object",
                    "properties": {
                        "error": {
                            "type": "object",
                            "required": ["code", "message"],
                            "properties": {
                                "code": {
                                    "type": "string",
                                    "example": "flow_out_of_range",
                                    "description": "Machine-readable reason code; further keys carry details such as pf, min, max"
                                },
                                "message": { "type": "string" }
                            }
                        }
                    }
                },
                "Health": {
                    "type": "object",
                    "properties": {
                        "status": { "type": "string" },
                        "version": { "type": "string" },
                        "models": { "type": "integer" }
                    }
                },
                "LoadRequest": {
                    "type": "object",
                    "required": ["path"],
                    "properties": { "path": { "type": "string" }, "id": { "type": "string" } }
                },
                "ModelEntry": {
                    "type": "object",
                    "properties": {
                        "id": { "type": "string" },
                        "metadata": {
                            "type": "object",
                            "properties": {
                                "format_version": { "type": "integer" },
                                "n_snapshots": { "type": "integer" },
                                "n_params": { "type": "integer" },
                                "energy_threshold": { "type": "number" },
                                "training_bounds": { "type": "array", "items": { "type": "array", "items": { "type": "number" } } },
                                "parameter_range": { "nullable": true, "type": "array", "items": { "type": "array", "items": { "type": "number" } } },
                                "fields": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "properties": {
                                            "label": { "type": "string" },
                                            "n_dof": { "type": "integer" },
                                            "rank": { "type": "integer" },
                                            "captured_energy": { "type": "number" }
                                        }
                                    }
                                }
                            }
                        }
                    }
                },
                "EvaluateRequest": {
                    "type": "object",
                    "required": ["field", "parameter"],
                    "properties": {
                        "field": { "type": "string" },
                        "parameter": {
                            "oneOf": [{ "type": "number" }, { "type": "array", "items": { "type": "number" } }]
                        },
                        "stride": { "type": "integer", "minimum": 1 }
                    }
                },
                "FieldResponse": {
                    "type": "object",
                    "properties": {
                        "field": { "type": "string" },
                        "parameter": { "type": "array", "items": { "type": "number" } },
                        "n_dof": { "type": "integer" },
                        "stats": {
                            "type": "object",
                            "properties": { "min": { "type": "number" }, "max": { "type": "number" }, "mean": { "type": "number" } }
                        },
                        "stride": { "type": "integer" },
                        "values": { "type": "array", "items": { "type": "number" } },
                        "extrapolated": { "type": "boolean" }
                    }
                },
                "PumpPoint": {
                    "type": "object",
                    "properties": { "omega": { "type": "number" }, "pf": { "type": "number" }, "dp": { "type": "number" } }
                }
            }
        }
    })
}
