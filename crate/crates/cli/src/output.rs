//! Output files: one directory, names fixed per command, never an input.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::commands::Failure;

pub struct Outputs {
    dir: PathBuf,
    inputs: Vec<PathBuf>,
}

impl Outputs {
    pub fn new<'a>(dir: &Path, inputs: impl IntoIterator<Item = &'a PathBuf>) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
        let inputs = inputs
            .into_iter()
            .filter_map(|p| std::fs::canonicalize(p).ok())
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            inputs,
        })
    }

    /// Fails when `name` would overwrite one of the inputs.
    pub fn path(&self, name: &str) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        if let Ok(canon) = std::fs::canonicalize(&path) {
            if self.inputs.contains(&canon) {
                return Err(Failure::config(format!("output {} would overwrite an input", path.display())));
            }
        }
        Ok(path)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.path(name)?;
        std::fs::write(&path, bytes).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes through a CSV-producing closure into memory, then to disk.
    pub fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> phasespace::Result<()>,
    ) -> Result<PathBuf, Failure> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| Failure::io(e.to_string()))?;
        self.write_bytes(name, &buf)
    }

    /// `key,value` rows of a structured report, keys as dotted JSON paths.
    pub fn write_flat_csv<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        let value = serde_json::to_value(value).map_err(|e| Failure::io(e.to_string()))?;
        let mut rows = Vec::new();
        flatten(&value, String::new(), &mut rows);
        self.write_with(name, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["key", "value"])?;
            for (k, v) in &rows {
                w.write_record([k, v])?;
            }
            w.flush().map_err(|e| phasespace::Error::Format(e.to_string()))?;
            Ok(())
        })
    }
}

fn flatten(value: &Value, prefix: String, rows: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(v, join(k), rows);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(v, join(&i.to_string()), rows);
            }
        }
        Value::Null => rows.push((prefix, String::new())),
        Value::String(s) => rows.push((prefix, s.clone())),
        other => rows.push((prefix, other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_uses_dotted_paths() {
        let v = serde_json::json!({"a": 1.5, "b": {"c": [true, null]}, "d": "x"});
        let mut rows = Vec::new();
        flatten(&v, String::new(), &mut rows);
        let want = [("a", "1.5"), ("b.c.0", "true"), ("b.c.1", ""), ("d", "x")];
        assert_eq!(rows.len(), want.len());
        for ((k, v), (wk, wv)) in rows.iter().zip(want) {
            assert_eq!((k.as_str(), v.as_str()), (wk, wv));
        }
    }

    #[test]
    fn refuses_to_overwrite_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("john.json");
        std::fs::write(&input, "{}").unwrap();
        let out = Outputs::new(dir.path(), [&input]).unwrap();
        assert_eq!(out.path("john.json").unwrap_err().code, 2);
        assert!(out.path("other.json").is_ok());
    }
}
