//! Run directories and their manifests.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    family: String,
    seed: u64,
    config: FileEntry,
    inputs: Vec<FileEntry>,
    artifacts: Vec<FileEntry>,
    status: &'a str,
}

pub fn sha256_file(p: &Path) -> Result<(String, u64), CliError> {
    let bytes = std::fs::read(p)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn entry(p: &Path, shown: String) -> Result<FileEntry, CliError> {
    let (sha256, bytes) = sha256_file(p)?;
    Ok(FileEntry {
        path: shown,
        sha256,
        bytes,
    })
}

/// Output directory of one command, collecting artifacts and inputs.
pub struct RunDir {
    pub dir: PathBuf,
    command: &'static str,
    inputs: Vec<PathBuf>,
}

impl RunDir {
    pub fn create(root: &Path, command: &'static str) -> Result<Self, CliError> {
        let dir = root.join(command);
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            command,
            inputs: vec![],
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn add_input(&mut self, p: PathBuf) {
        self.inputs.push(p);
    }

    /// Write `manifest.json` listing the config, inputs and every other
    /// file in the run directory, with SHA-256 digests.
    pub fn finish(&self, config: &Path, family: String, seed: u64, status: &str) -> Result<PathBuf, CliError> {
        let mut names: Vec<String> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != "manifest.json")
            .collect();
        names.sort();
        let artifacts = names
            .into_iter()
            .map(|n| entry(&self.dir.join(&n), n))
            .collect::<Result<Vec<_>, _>>()?;
        let inputs = self
            .inputs
            .iter()
            .map(|p| entry(p, p.display().to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let m = Manifest {
            command: self.command,
            family,
            seed,
            config: entry(config, config.display().to_string())?,
            inputs,
            artifacts,
            status,
        };
        let out = self.dir.join("manifest.json");
        valdesign::io::write_json(&out, &m)?;
        Ok(out)
    }
}
