//! Canonical JSON: object keys sorted, compact, UTF-8.

use serde::Serialize;

/// Serialize `value` with sorted object keys.
///
/// `serde_json::Value` keeps objects in a `BTreeMap`, so a round trip
/// through `Value` orders every nested map.
pub fn to_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

pub fn to_string_pretty<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string_pretty(&v)
}
