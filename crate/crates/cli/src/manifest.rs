//! Run manifests and the output files they reference.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slabgff_core::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub params: BTreeMap<String, String>,
    pub master_seed: u64,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub code_version: String,
    pub outputs: Vec<PathBuf>,
    /// Wall-clock seconds.
    pub timing: f64,
}

/// First 16 hex digits of `sha256(command | params | seed)`.
pub fn run_id(command: &str, params: &BTreeMap<String, String>, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    for (k, v) in params {
        h.update(b"|");
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
    }
    h.update(format!("|{seed}").as_bytes());
    hex::encode(&h.finalize()[..8])
}

impl RunManifest {
    pub fn begin(command: &str, params: BTreeMap<String, String>, master_seed: u64) -> Self {
        let now = Utc::now();
        Self {
            run_id: run_id(command, &params, master_seed),
            command: command.to_string(),
            params,
            master_seed,
            started: now,
            finished: now,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            timing: 0.0,
        }
    }

    pub fn finish(&mut self) {
        self.finished = Utc::now();
        self.timing = (self.finished - self.started).num_microseconds().unwrap_or(0) as f64 * 1e-6;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, self.to_json())?;
        Ok(path)
    }

    /// Every output exists and carries the run id in its header.
    pub fn verify_outputs(&self) -> Result<()> {
        for p in &self.outputs {
            let text = fs::read_to_string(p)?;
            if !text.contains(&self.run_id) {
                return Err(Error::Parse(format!("{} lacks run id {}", p.display(), self.run_id)));
            }
        }
        Ok(())
    }
}

/// Collects files for one run directory; all writes go through here.
pub struct OutputDir {
    pub dir: PathBuf,
    pub run_id: String,
    pub files: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: PathBuf, run_id: &str) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, run_id: run_id.to_string(), files: Vec::new() })
    }

    /// JSON object with a leading `run_id` field.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut v = serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        let body = match v.as_object_mut() {
            Some(obj) => {
                let mut out = serde_json::Map::new();
                out.insert("run_id".into(), self.run_id.clone().into());
                out.append(obj);
                serde_json::Value::Object(out)
            }
            None => serde_json::json!({ "run_id": self.run_id, "value": v }),
        };
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(&body).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&path, text + "\n")?;
        self.files.push(path.clone());
        Ok(path)
    }

    /// CSV with a `# run_id` line before the header row.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path)?;
        writeln!(f, "# run_id {}", self.run_id)?;
        write_rows(f, header, rows)?;
        self.files.push(path.clone());
        Ok(path)
    }

    /// Appends rows to a ledger CSV shared between runs, writing the header once.
    pub fn append_csv(&mut self, path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let fresh = !path.exists();
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(f, "# ledger")?;
            let mut w = csv::Writer::from_writer(&mut f);
            w.write_record(header).map_err(csv_err)?;
            w.flush()?;
        }
        writeln!(f, "# run_id {}", self.run_id)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn finish(self, manifest: &mut RunManifest) -> Result<PathBuf> {
        manifest.outputs = self.files;
        manifest.finish();
        manifest.write(&self.dir)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn write_rows<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip decimal form of a float.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_depends_on_seed() {
        let p = BTreeMap::from([("N".to_string(), "32".to_string())]);
        assert_ne!(run_id("green", &p, 1), run_id("green", &p, 2));
        assert_eq!(run_id("green", &p, 1).len(), 16);
    }
}
