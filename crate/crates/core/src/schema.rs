//! Parameter schemas for every transform, derived from their defaults.
//! These back the preview service's `GET /transforms`.

use serde_json::{json, Map, Value};

use crate::transforms::Transform;

/// Slider bounds for parameters that have a natural range.
fn known_range(param: &str) -> Option<(f64, f64)> {
    Some(match param {
        "p" => (0.0, 1.0),
        "order" => (0.0, 5.0),
        "restore" => (0.0, 0.5),
        "num_transforms" => (1.0, 10.0),
        "locked_borders" => (0.0, 2.0),
        "max_displacement" => (0.0, 20.0),
        "num_iterations" => (0.0, 1000.0),
        "scales" => (0.1, 3.0),
        "degrees" => (-180.0, 180.0),
        "translation" => (-50.0, 50.0),
        "downsampling" => (1.0, 10.0),
        "log_gamma" => (-2.0, 2.0),
        "std" => (0.0, 10.0),
        "intensity" => (0.0, 5.0),
        "num_ghosts" => (2.0, 20.0),
        "num_spikes" => (0.0, 10.0),
        "coefficients" => (-2.0, 2.0),
        "percentiles" => (0.0, 100.0),
        _ => return None,
    })
}

fn options(param: &str) -> Option<Value> {
    match param {
        "interpolation" => Some(json!(["nearest", "linear"])),
        "mode" => Some(json!(["constant", "edge"])),
        _ => None,
    }
}

fn value_type(v: &Value) -> &'static str {
    match v {
        Value::Bool(_) => "bool",
        Value::Number(n) if n.is_f64() => "float",
        Value::Number(_) => "int",
        Value::String(_) => "string",
        Value::Array(items) => match items.first() {
            Some(Value::Number(n)) if n.is_f64() => "float_array",
            Some(Value::Number(_)) => "int_array",
            Some(Value::Bool(_)) => "bool_array",
            _ => "array",
        },
        _ => "json",
    }
}

fn param_schema(name: &str, default: &Value) -> Value {
    let mut m = Map::new();
    m.insert("name".into(), json!(name));
    let ty = match options(name) {
        Some(opts) => {
            m.insert("options".into(), opts);
            "enum"
        }
        None => value_type(default),
    };
    m.insert("type".into(), json!(ty));
    m.insert("default".into(), default.clone());
    if let Some((lo, hi)) = known_range(name) {
        m.insert("min".into(), json!(lo));
        m.insert("max".into(), json!(hi));
    }
    Value::Object(m)
}

/// `{name, random, params: [{name, type, default, min?, max?, options?}]}`
/// for every transform.
pub fn transform_schemas() -> Value {
    let list: Vec<Value> = Transform::NAMES
        .iter()
        .filter_map(|name| Transform::default_for(name))
        .map(|t| {
            let params: Vec<Value> = match t.params() {
                Value::Object(m) => m.iter().map(|(k, v)| param_schema(k, v)).collect(),
                _ => Vec::new(),
            };
            json!({"name": t.name(), "random": t.is_random(), "params": params})
        })
        .collect();
    Value::Array(list)
}
