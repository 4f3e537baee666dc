//! Report serialization: schema 1, floats rounded to 12 significant digits
//! so reports are byte-stable across runs.

use serde_json::{Map, Number, Value};

pub const SCHEMA_VERSION: u64 = 1;

/// Round to 12 significant digits before serializing.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::String(format!("{x}"));
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap();
    Number::from_f64(rounded).map(Value::Number).unwrap_or(Value::Null)
}

pub fn obj(entries: Vec<(&str, Value)>) -> Value {
    let mut m = Map::new();
    for (k, v) in entries {
        m.insert(k.to_string(), v);
    }
    Value::Object(m)
}

/// Stable pretty printing (serde_json object keys are ordered).
pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}
