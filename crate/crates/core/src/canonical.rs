//! Canonical JSON text: object keys sorted, floats in shortest round-trip form.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("value cannot be represented as JSON: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("non-finite number at {0}")]
    NonFinite(String),
}

/// Converts to a JSON value, refusing NaN and infinities (serde_json maps them to null).
pub fn to_canonical_value<T: Serialize + ?Sized>(value: &T) -> Result<Value, CanonicalError> {
    let v = serde_json::to_value(value)?;
    reject_nulls(&v, &mut String::from("$"))?;
    Ok(v)
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    // serde_json's default map is a BTreeMap, so keys come out sorted.
    Ok(serde_json::to_string(&to_canonical_value(value)?)?)
}

fn reject_nulls(v: &Value, path: &mut String) -> Result<(), CanonicalError> {
    match v {
        Value::Null => Err(CanonicalError::NonFinite(path.clone())),
        Value::Array(items) => items.iter().enumerate().try_for_each(|(i, item)| {
            let len = path.len();
            path.push_str(&format!("[{i}]"));
            let r = reject_nulls(item, path);
            path.truncate(len);
            r
        }),
        Value::Object(map) => map.iter().try_for_each(|(k, item)| {
            let len = path.len();
            path.push('.');
            path.push_str(k);
            let r = reject_nulls(item, path);
            path.truncate(len);
            r
        }),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn keys_sorted_and_floats_shortest() {
        let mut m = HashMap::new();
        m.insert("zeta", 0.1);
        m.insert("alpha", 1.0 / 3.0);
        m.insert("mid", 1e-7);
        let s = to_canonical_string(&m).unwrap();
        assert_eq!(s, r#"{"alpha":0.3333333333333333,"mid":1e-7,"zeta":0.1}"#);
    }

    #[test]
    fn nan_rejected_with_path() {
        let err = to_canonical_string(&vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, CanonicalError::NonFinite(p) if p == "$[1]"));
    }

    #[test]
    fn floats_round_trip_bit_exact() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 0.7311, -0.0, 5e-324, 0.30000000000000004] {
            let s = to_canonical_string(&x).unwrap();
            let back: f64 = serde_json::from_str(&s).unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }
}
