use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// CSV column holding wall-clock time; excluded from [`numeric_digest`].
pub const TIMING_COLUMN: &str = "runtime_ms";

/// Manifest key holding wall-clock times; excluded from [`numeric_digest`].
pub const TIMING_KEY: &str = "timings_ms";

/// Hex SHA-256 of the command name and the canonical JSON of its config.
/// Object keys serialize sorted, so equal configs hash equally.
pub fn config_hash(command: &str, config: &impl Serialize) -> Result<String, CliError> {
    let canonical = json!({ "command": command, "config": config });
    let bytes = serde_json::to_vec(&canonical).map_err(CliError::Serialize)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `{:.16e}`: 17 significant digits, enough to round-trip every `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes every artifact of one run into `<out>/<command>-<hash prefix>/`.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    hash: String,
    seed: u64,
    files: Vec<String>,
    timings: BTreeMap<String, f64>,
}

impl RunWriter {
    pub fn create(out: &Path, command: &str, hash: String, seed: u64) -> Result<Self, CliError> {
        let dir = out.join(format!("{command}-{}", &hash[..16]));
        std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(RunWriter {
            dir,
            hash,
            seed,
            files: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn time(&mut self, op: impl Into<String>, ms: f64) {
        self.timings.insert(op.into(), ms);
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// `payload` must serialize to an object; hash, seed and version are added to it.
    pub fn json(&mut self, name: &str, payload: &impl Serialize) -> Result<(), CliError> {
        let mut value = serde_json::to_value(payload).map_err(CliError::Serialize)?;
        let Value::Object(map) = &mut value else {
            return Err(CliError::Invalid(format!("report '{name}' is not a JSON object")));
        };
        map.insert("config_hash".into(), json!(self.hash));
        map.insert("seed".into(), json!(self.seed));
        map.insert("artifact_version".into(), json!(ARTIFACT_VERSION));
        let mut text = serde_json::to_string_pretty(&value).map_err(CliError::Serialize)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// A CSV whose first line is a `#` comment carrying hash and seed.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut text = format!("# config_hash={} seed={}\n{}\n", self.hash, self.seed, header.join(","));
        for row in rows {
            let _ = writeln!(text, "{}", row.join(","));
        }
        self.write(name, &text)
    }

    /// Writes `manifest.json`, the only artifact holding timings.
    pub fn finish(mut self, command: &str) -> Result<RunSummary, CliError> {
        let manifest = json!({
            "command": command,
            TIMING_KEY: self.timings,
            "outputs": self.files,
        });
        self.json("manifest.json", &manifest)?;
        Ok(RunSummary {
            dir: self.dir,
            config_hash: self.hash,
            seed: self.seed,
            files: self.files,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub config_hash: String,
    pub seed: u64,
    /// File names inside `dir`, `manifest.json` last.
    pub files: Vec<String>,
}

fn strip_timing_column(text: &str) -> String {
    let mut lines = text.lines();
    let mut out = String::new();
    let mut drop = None;
    for line in lines.by_ref() {
        if line.starts_with('#') {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        drop = line.split(',').position(|h| h == TIMING_COLUMN);
        out.push_str(&keep_fields(line, drop));
        break;
    }
    for line in lines {
        out.push_str(&keep_fields(line, drop));
    }
    out
}

fn keep_fields(line: &str, drop: Option<usize>) -> String {
    let kept: Vec<&str> = line.split(',').enumerate().filter(|(i, _)| Some(*i) != drop).map(|(_, f)| f).collect();
    kept.join(",") + "\n"
}

/// SHA-256 over every artifact in `dir` (sorted by name) with timing columns
/// and the manifest timings removed. Equal digests mean byte-identical numbers.
pub fn numeric_digest(dir: &Path) -> Result<String, CliError> {
    let io = |source, path: &Path| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io(e, dir))?
        .map(|e| e.map(|e| e.path()).map_err(|e| io(e, dir)))
        .collect::<Result<_, _>>()?;
    names.sort();
    let mut hasher = Sha256::new();
    for path in names {
        let text = std::fs::read_to_string(&path).map_err(|e| io(e, &path))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let body = if name.ends_with(".csv") {
            strip_timing_column(&text)
        } else if name == "manifest.json" {
            let mut v: Value = serde_json::from_str(&text).map_err(CliError::Serialize)?;
            if let Value::Object(map) = &mut v {
                map.remove(TIMING_KEY);
            }
            v.to_string()
        } else {
            text
        };
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(body.as_bytes());
        hasher.update([0]);
    }
    Ok(hex::encode(hasher.finalize()))
}
