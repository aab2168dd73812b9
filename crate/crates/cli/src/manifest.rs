use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one invocation, written as `<output>.manifest.json` beside the
/// primary output. Contains nothing time- or host-dependent, so identical
/// runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: serde_json::Value,
    pub seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new<F: Serialize>(command: &str, flags: &F, seed: Option<u64>) -> Result<Self> {
        let mut versions = BTreeMap::new();
        versions.insert("ndpp".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("model_format".to_string(), ndpp::data::model_io::FORMAT_VERSION.to_string());
        Ok(RunManifest {
            command: command.to_string(),
            flags: serde_json::to_value(flags)?,
            seed,
            versions,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputDigest { path: path.to_path_buf(), sha256: hex::encode(Sha256::digest(&bytes)) });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes the manifest next to the first recorded output.
    pub fn write(&self) -> Result<PathBuf> {
        let primary = self.outputs.first().context("manifest has no outputs")?;
        let path = manifest_path(primary);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(Path::new("out/model.json")), PathBuf::from("out/model.json.manifest.json"));
    }

    #[test]
    fn digest_is_sha256_hex() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        fs::write(&path, "abc").unwrap();
        let mut m = RunManifest::new("test", &serde_json::json!({}), None).unwrap();
        m.input(&path).unwrap();
        assert_eq!(m.inputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
