//! Output directory with a manifest of every file written.

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

pub struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Output {
    pub fn create(dir: &Path) -> io::Result<Output> {
        fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    /// Write `name` (relative, may contain subdirectories) and record it.
    pub fn write(&mut self, name: &str, contents: &str) -> io::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.files.push(FileEntry {
            path: name.to_string(),
            bytes: contents.len(),
            sha256: format!("{:x}", Sha256::digest(contents.as_bytes())),
        });
        Ok(())
    }

    pub fn write_manifest(&mut self, command: &str, seed: u64, config_hash: &str, verdict: &Value) -> io::Result<()> {
        let mut files = self.files.clone();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = json!({
            "schema": "floret.manifest.v1",
            "command": command,
            "seed": seed,
            "config_hash": config_hash,
            "versions": {
                "floret": floret_version(),
                "floret-cli": env!("CARGO_PKG_VERSION"),
            },
            "verdict": verdict,
            "files": files,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(self.dir.join("manifest.json"), text)
    }
}

fn floret_version() -> &'static str {
    floret::VERSION
}

/// One NDJSON line carrying a schema field.
pub fn ndjson_line<T: Serialize>(schema: &str, record: &T) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("schema".into(), Value::String(schema.into()));
    match serde_json::to_value(record).expect("record serializes") {
        Value::Object(m) => obj.extend(m),
        other => {
            obj.insert("value".into(), other);
        }
    }
    serde_json::to_string(&Value::Object(obj)).expect("record serializes") + "\n"
}
