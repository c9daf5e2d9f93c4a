//! Staged output directories and stage manifests.
//!
//! A stage writes into a hidden sibling of its output directory and renames
//! it into place only once everything succeeded, so a failed run leaves no
//! partial outputs behind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";

pub struct Staging {
    tmp: PathBuf,
    dest: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(dest: &Path) -> Result<Self> {
        let name = dest
            .file_name()
            .with_context(|| format!("output path {} has no final component", dest.display()))?;
        if dest.exists() && !is_replaceable(dest)? {
            bail!(
                "output directory {} exists and was not written by fspn; refusing to replace it",
                dest.display()
            );
        }
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent)
            .with_context(|| format!("creating {}", parent.display()))?;
        let tmp = parent.join(format!(
            ".{}.partial-{}",
            name.to_string_lossy(),
            std::process::id()
        ));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp)?;
        }
        std::fs::create_dir(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(Staging {
            tmp,
            dest: dest.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.tmp
    }

    /// Writes the manifest and moves the staged directory into place.
    pub fn commit(mut self, stage: &str, config: &RunConfig, warnings: &[String]) -> Result<()> {
        let manifest = StageManifest {
            stage: stage.to_string(),
            fspn_version: env!("CARGO_PKG_VERSION").to_string(),
            checkpoint_format: fspn_core::nn::CHECKPOINT_VERSION,
            seed: config.seed.unwrap_or(0),
            config_hash: fspn_core::eval::config_hash(config)?,
            config: config.clone(),
            outputs: digests(&self.tmp)?,
            warnings: warnings.to_vec(),
        };
        write_json(&self.tmp.join(MANIFEST), &manifest)?;
        if self.dest.exists() {
            std::fs::remove_dir_all(&self.dest)
                .with_context(|| format!("replacing {}", self.dest.display()))?;
        }
        std::fs::rename(&self.tmp, &self.dest)
            .with_context(|| format!("moving outputs to {}", self.dest.display()))?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.tmp);
        }
    }
}

/// An empty directory or an earlier stage output.
fn is_replaceable(dir: &Path) -> Result<bool> {
    if !dir.is_dir() {
        return Ok(false);
    }
    Ok(dir.join(MANIFEST).is_file() || std::fs::read_dir(dir)?.next().is_none())
}

/// Everything needed to replay the stage: the resolved configuration, its
/// hash, and a digest of each output file.
#[derive(Serialize)]
struct StageManifest {
    stage: String,
    fspn_version: String,
    checkpoint_format: u32,
    seed: u64,
    config_hash: String,
    config: RunConfig,
    outputs: BTreeMap<String, String>,
    warnings: Vec<String>,
}

fn digests(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root)?;
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            let bytes = std::fs::read(&path)?;
            out.insert(key, hex(&Sha256::digest(&bytes)));
        }
    }
    Ok(out)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&s).with_context(|| format!("parsing {}", path.display()))
}
