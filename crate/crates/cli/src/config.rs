//! Flag/config-file resolution, output headers and usage errors.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const FORMAT_VERSION: &str = "cmlab/1";

/// Invalid parameters; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn strip_unset(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(map) => map
            .into_iter()
            .filter(|(_, v)| !v.is_null() && v.as_array().is_none_or(|a| !a.is_empty()))
            .collect(),
        _ => Map::new(),
    }
}

/// Overlays the set flags in `args` on the JSON object in `config` (if any)
/// and returns the merged arguments with their JSON form.
pub fn resolve<T: Serialize + DeserializeOwned>(args: &T, config: Option<&Path>) -> Result<(T, Value)> {
    let mut merged = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
            if !value.is_object() {
                return Err(usage(format!("config {} must hold a JSON object", path.display())));
            }
            strip_unset(value)
        }
        None => Map::new(),
    };
    merged.extend(strip_unset(serde_json::to_value(args)?));
    let value = Value::Object(merged);
    let resolved: T = serde_json::from_value(value.clone()).map_err(|e| usage(format!("config: {e}")))?;
    Ok((resolved, value))
}

pub fn header(command: &str, config: &Value) -> Value {
    json!({ "format": FORMAT_VERSION, "command": command, "config": config })
}

/// `# {header}` line that opens every CSV output.
pub fn csv_header_line(command: &str, config: &Value) -> String {
    format!("# {}\n", header(command, config))
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&PathBuf>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("missing required --{flag}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    struct Args {
        n: Option<usize>,
        seed: Option<u64>,
        #[serde(default)]
        ns: Vec<usize>,
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("cmlab-config-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        fs::write(&path, r#"{"n": 3, "seed": 9, "ns": [1, 2]}"#).unwrap();
        let args = Args { n: Some(7), ..Default::default() };
        let (r, v) = resolve(&args, Some(&path)).unwrap();
        assert_eq!(r, Args { n: Some(7), seed: Some(9), ns: vec![1, 2] });
        assert_eq!(v["n"], 7);
        let (r, _) = resolve(&args, None).unwrap();
        assert_eq!(r.seed, None);
        fs::write(&path, "[1]").unwrap();
        assert!(resolve(&args, Some(&path)).unwrap_err().downcast_ref::<UsageError>().is_some());
        fs::remove_dir_all(dir).ok();
    }
}
