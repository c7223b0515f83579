//! JSON helpers that write doubles with 17 significant digits.

use serde::Serialize;
use serde_json::value::RawValue;

/// A double rendered as a JSON number with 17 significant digits.
pub fn sig17(v: f64) -> Box<RawValue> {
    let text = if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

pub fn sig17_vec(v: &[f64]) -> Vec<Box<RawValue>> {
    v.iter().map(|&x| sig17(x)).collect()
}

pub fn sig17_matrix(rows: &[Vec<f64>]) -> Vec<Vec<Box<RawValue>>> {
    rows.iter().map(|r| sig17_vec(r)).collect()
}

/// Pretty-prints any serializable document.
pub fn to_pretty<T: Serialize>(doc: &T) -> String {
    serde_json::to_string_pretty(doc).expect("in-memory serialization cannot fail")
}
