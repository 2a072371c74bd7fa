//! Artifact files. Data files are a pure function of the inputs; run
//! metadata (timestamps, versions, cache status) goes to a
//! `<name>.meta.json` sidecar so reruns stay byte-identical.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

/// Seventeen significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            text: format!("{}\n", columns.join(",")),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub struct Writer {
    dir: PathBuf,
    command: String,
    meta: Value,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, command: &str, meta: Value) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            meta,
            written: Vec::new(),
        })
    }

    pub fn note(&mut self, key: &str, value: Value) {
        if let Value::Object(m) = &mut self.meta {
            m.insert(key.to_string(), value);
        }
    }

    pub fn text(&mut self, file: &str, contents: &str) -> std::io::Result<PathBuf> {
        let path = self.dir.join(file);
        // atomic replace so concurrent readers never see a partial file
        let tmp = self.dir.join(format!(".{file}.{}.tmp", std::process::id()));
        fs::write(&tmp, contents)?;
        fs::rename(&tmp, &path)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn json(&mut self, file: &str, value: &Value) -> std::io::Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
        s.push('\n');
        self.text(file, &s)
    }

    /// Write the sidecar and return the data files.
    pub fn finish(mut self) -> std::io::Result<Vec<PathBuf>> {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let files: Vec<String> = self
            .written
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect();
        let meta = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp_unix": now,
            "files": files,
            "details": self.meta,
        });
        let path = self.dir.join(format!("{}.meta.json", self.command));
        fs::write(&path, serde_json::to_string_pretty(&meta).expect("JSON values serialize") + "\n")?;
        Ok(std::mem::take(&mut self.written))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(317.0), "3.1700000000000000e2");
        let back: f64 = num(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }
}
