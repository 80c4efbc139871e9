//! Atomic artifact writing and CSV round trips.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::{json, Map, Value};

use crate::config::InputError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

/// Full-precision CSV with a header row.
pub fn csv_text(header: &[&str], columns: &[&[f64]]) -> String {
    let rows = columns.first().map_or(0, |c| c.len());
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| format!("{:.16e}", c[i])).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Reads a numeric CSV, returning its header and columns.
pub fn read_csv(path: &Path) -> anyhow::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| InputError(format!("cannot read profile {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| InputError(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(InputError(format!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                i + 2,
                fields.len(),
                header.len()
            ))
            .into());
        }
        for (c, f) in cols.iter_mut().zip(fields) {
            let v: f64 = f.trim().parse().map_err(|_| {
                InputError(format!("{}: line {}: `{}` is not a number", path.display(), i + 2, f.trim()))
            })?;
            c.push(v);
        }
    }
    Ok((header, cols))
}

/// Envelope shared by every JSON artifact. The timestamp is the only run-dependent key.
pub fn artifact(command: &str, config: &BTreeMap<String, Value>, report: Value) -> Value {
    let mut cfg = Map::new();
    for (k, v) in config {
        cfg.insert(k.clone(), v.clone());
    }
    json!({
        "command": command,
        "version": VERSION,
        "config": Value::Object(cfg),
        "report": report,
        "generated_at": chrono::Utc::now().to_rfc3339(),
    })
}

pub struct Sink {
    pub out: Option<PathBuf>,
}

impl Sink {
    /// Writes a JSON artifact into the output directory, or prints it when there is none.
    pub fn json(&self, name: &str, value: &Value) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        match &self.out {
            Some(dir) => {
                let path = dir.join(name);
                write_atomic(&path, text.as_bytes())?;
                println!("wrote {}", path.display());
            }
            None => print!("{text}"),
        }
        Ok(())
    }

    pub fn csv(&self, name: &str, text: &str) -> anyhow::Result<()> {
        if let Some(dir) = &self.out {
            let path = dir.join(name);
            write_atomic(&path, text.as_bytes())?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}
