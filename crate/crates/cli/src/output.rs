//! Report files: 9-significant-digit numbers, CSV tables and atomic writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::CliError;

pub const SCHEMA: &str = "ss-yield/report";
pub const SCHEMA_VERSION: u32 = 1;

/// Rounds to 9 significant digits.
pub fn round9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

/// Text form of a number with at most 9 significant digits.
pub fn fmt9(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round9(v);
    let m = r.abs();
    if m == 0.0 || (1e-4..1e9).contains(&m) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// Rounds every float in a JSON tree to 9 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if !(n.is_i64() || n.is_u64()) => serde_json::Number::from_f64(round9(f))
                .map(Value::Number)
                .unwrap_or(Value::Null),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Serializes a result with rounded floats; non-finite floats become null.
pub fn to_json<T: serde::Serialize>(v: &T) -> Value {
    round_json(serde_json::to_value(v).expect("report serializes"))
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, then renames it into place.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::Config(format!("output directory {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(path)
}

/// CSV with a header row, '.' decimals and ',' separators.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Flattens a JSON tree into `key,value` rows with dotted keys.
pub fn flatten(v: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let key = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            Value::Object(o) => o.iter().for_each(|(k, v)| walk(&key(k), v, out)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| walk(&key(&i.to_string()), v, out)),
            Value::Number(n) => out.push((
                prefix.into(),
                n.as_f64().filter(|_| !(n.is_i64() || n.is_u64())).map(fmt9).unwrap_or(n.to_string()),
            )),
            Value::String(s) => out.push((prefix.into(), s.clone())),
            Value::Bool(b) => out.push((prefix.into(), b.to_string())),
            Value::Null => out.push((prefix.into(), String::new())),
        }
    }
    let mut out = Vec::new();
    walk("", v, &mut out);
    out
}

pub fn object(pairs: impl IntoIterator<Item = (&'static str, Value)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(round9(0.38497312345678), 0.384973123);
        assert_eq!(fmt9(1.330924441), "1.33092444");
        assert_eq!(fmt9(15.27790000001), "15.2779");
        assert_eq!(fmt9(1.234567891234e-7), "1.23456789e-7");
        assert_eq!(fmt9(-2.0), "-2");
        assert_eq!(fmt9(f64::INFINITY), "inf");
        let v = round_json(serde_json::json!({"a": [0.123456789123, 3], "b": {"c": 2.5}}));
        assert_eq!(v.to_string(), r#"{"a":[0.123456789,3],"b":{"c":2.5}}"#);
    }

    #[test]
    fn csv_has_header_and_flat_keys() {
        let bytes = csv_bytes(&["y", "z", "H0"], [vec!["0.1".into(), "0.2".into(), String::new()]]);
        assert_eq!(String::from_utf8(bytes).unwrap(), "y,z,H0\n0.1,0.2,\n");
        let rows = flatten(&serde_json::json!({"a": {"b": [1.5, true]}, "s": "x"}));
        assert_eq!(rows[0], ("a.b.0".to_string(), "1.5".to_string()));
        assert_eq!(rows[1], ("a.b.1".to_string(), "true".to_string()));
        assert_eq!(rows[2], ("s".to_string(), "x".to_string()));
    }

    #[test]
    fn atomic_write_replaces_in_place() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "r.json", b"one").unwrap();
        let p = write_atomic(dir.path(), "r.json", b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
