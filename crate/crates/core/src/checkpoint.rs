//! Portable text checkpoints for parameter stores.
//!
//! Format, one record per parameter, values in row-major order:
//!
//! ```text
//! amlkit-params v1
//! meta <key> <value>
//! param <name> <rows> <cols>
//! <row of space-separated values>
//! ...
//! ```
//!
//! Floats are written in Rust's shortest round-trip representation, so a
//! save/load cycle reproduces values bit-exactly.

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::optim::ParameterStore;
use crate::scalar::Scalar;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

const HEADER: &str = "amlkit-params v1";

pub fn to_string<T: Scalar>(
    store: &ParameterStore<T>,
    meta: &BTreeMap<String, String>,
) -> Result<String> {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for (k, v) in meta {
        if k.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("meta key {k:?} contains whitespace")));
        }
        writeln!(out, "meta {k} {v}").unwrap();
    }
    for (name, value) in store.iter_values() {
        if name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!(
                "parameter name {name:?} contains whitespace"
            )));
        }
        writeln!(out, "param {name} {} {}", value.rows(), value.cols()).unwrap();
        for i in 0..value.rows() {
            let mut first = true;
            for &v in value.row(i) {
                if !first {
                    out.push(' ');
                }
                write!(out, "{v}").unwrap();
                first = false;
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn from_str<T: Scalar>(text: &str) -> Result<(ParameterStore<T>, BTreeMap<String, String>)> {
    let bad = |line: usize, detail: String| Error::Checkpoint(format!("line {line}: {detail}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == HEADER => {}
        other => {
            return Err(Error::Checkpoint(format!(
                "bad header {:?}, expected {HEADER:?}",
                other.map(|(_, h)| h).unwrap_or("")
            )))
        }
    }
    let mut store = ParameterStore::new();
    let mut meta = BTreeMap::new();
    while let Some((ln, line)) = lines.next() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest
                .split_once(' ')
                .ok_or_else(|| bad(ln + 1, "meta line needs key and value".into()))?;
            meta.insert(k.to_string(), v.to_string());
            continue;
        }
        let rest = line
            .strip_prefix("param ")
            .ok_or_else(|| bad(ln + 1, format!("expected param record, got {line:?}")))?;
        let mut parts = rest.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| bad(ln + 1, "missing parameter name".into()))?;
        let rows: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(ln + 1, "missing or invalid row count".into()))?;
        let cols: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(ln + 1, "missing or invalid column count".into()))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rln, row) = lines
                .next()
                .ok_or_else(|| bad(ln + 1, format!("truncated values for {name:?}")))?;
            for tok in row.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| bad(rln + 1, format!("invalid value {tok:?}")))?;
                data.push(T::from_f64(v));
            }
        }
        if data.len() != rows * cols {
            return Err(bad(
                ln + 1,
                format!("{name:?} expected {} values, found {}", rows * cols, data.len()),
            ));
        }
        store.insert(name, Dense::from_vec(rows, cols, data))?;
    }
    Ok((store, meta))
}

pub fn save<T: Scalar>(
    store: &ParameterStore<T>,
    meta: &BTreeMap<String, String>,
    path: &Path,
) -> Result<()> {
    let text = to_string(store, meta)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<(ParameterStore<T>, BTreeMap<String, String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert(
            "layer.w",
            Dense::from_rows(&[vec![0.1, -2.5e-17], vec![std::f64::consts::PI, 4.0]]),
        )
        .unwrap();
        s.insert("layer.b", Dense::from_rows(&[vec![0.0, 1.0 / 3.0]])).unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let store = sample_store();
        let mut meta = BTreeMap::new();
        meta.insert("ranks".to_string(), "10,4".to_string());
        let text = to_string(&store, &meta).unwrap();
        let (loaded, loaded_meta) = from_str::<f64>(&text).unwrap();
        assert_eq!(loaded.value("layer.w").unwrap(), store.value("layer.w").unwrap());
        assert_eq!(loaded.value("layer.b").unwrap(), store.value("layer.b").unwrap());
        assert_eq!(loaded_meta.get("ranks").map(String::as_str), Some("10,4"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let store = sample_store();
        save(&store, &BTreeMap::new(), &path).unwrap();
        let (loaded, _) = load::<f64>(&path).unwrap();
        assert_eq!(loaded.value("layer.w").unwrap(), store.value("layer.w").unwrap());
    }

    #[test]
    fn bad_header_rejected() {
        assert!(from_str::<f64>("something else\n").is_err());
        assert!(from_str::<f64>("").is_err());
    }

    #[test]
    fn truncated_record_rejected() {
        let text = format!("{HEADER}\nparam w 2 2\n1 2\n");
        let err = from_str::<f64>(&text).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn invalid_value_reports_line() {
        let text = format!("{HEADER}\nparam w 1 2\n1 oops\n");
        let err = from_str::<f64>(&text).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
