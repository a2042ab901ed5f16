use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config_sha256: String,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

/// Collects the files of one command and publishes each by rename.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<FileHash>,
}

impl Outputs {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Outputs { dir, written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `name` through a temporary sibling and renames it into place.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
        {
            let mut w = BufWriter::new(fs::File::create(&tmp).map_err(io)?);
            fill(&mut w)?;
            w.flush().map_err(io)?;
            w.get_ref().sync_all().map_err(io)?;
        }
        fs::rename(&tmp, &path).map_err(io)?;
        self.written.push(FileHash {
            path: PathBuf::from(name),
            sha256: hash_file(&path)?,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(w).map_err(|e| CliError::Io(e.to_string()))
        })
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        self.write(name, |w| {
            let mut out = csv::Writer::from_writer(w);
            for r in rows {
                out.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
            }
            out.flush().map_err(|e| CliError::Io(e.to_string()))
        })
    }

    /// Writes the manifest last, so its presence marks a finished run.
    pub fn finish(mut self, command: &str, cfg: &RunConfig, inputs: &[&Path]) -> Result<PathBuf, CliError> {
        let inputs = inputs
            .iter()
            .map(|p| {
                let path = fs::canonicalize(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Ok(FileHash { sha256: hash_file(&path)?, path })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: toric_learn::VERSION.into(),
            command: command.into(),
            seed: cfg.seed,
            threads: cfg.threads,
            config_sha256: config_hash(cfg),
            config: cfg.clone(),
            inputs,
            outputs: std::mem::take(&mut self.written),
        };
        self.write_json(MANIFEST, &manifest)
    }
}

pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

/// Files whose current hash differs from the manifest, with the reason.
pub fn verify(manifest_path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", manifest_path.display())))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("{}: {e}", manifest_path.display())))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut drift = Vec::new();
    if config_hash(&m.config) != m.config_sha256 {
        drift.push("config: hash mismatch".to_string());
    }
    let files = m.inputs.iter().map(|f| (f, f.path.clone()))
        .chain(m.outputs.iter().map(|f| (f, dir.join(&f.path))));
    for (f, path) in files {
        match hash_file(&path) {
            Ok(h) if h == f.sha256 => {}
            Ok(_) => drift.push(format!("{}: content changed", path.display())),
            Err(_) => drift.push(format!("{}: missing", path.display())),
        }
    }
    Ok(drift)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_detects_drift() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "x").unwrap();
        let mut out = Outputs::create(dir.path().join("run")).unwrap();
        out.write_csv("a.csv", &[(1, 2.5)]).unwrap();
        assert!(!out.path(".a.csv.tmp").exists());
        let m = out.finish("test", &RunConfig::default(), &[&input]).unwrap();
        assert!(verify(&m).unwrap().is_empty());
        fs::write(&input, "y").unwrap();
        fs::remove_file(dir.path().join("run/a.csv")).unwrap();
        let drift = verify(&m).unwrap();
        assert_eq!(drift.len(), 2, "{drift:?}");
    }
}
