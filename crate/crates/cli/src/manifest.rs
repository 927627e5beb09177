use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use swingid::io::{read_text, save_toml, EstimationConfig, GenerationConfig, SweepConfig};
use swingid::Result;

/// Everything needed to rerun a command and get byte-identical outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub model_path: String,
    pub model_sha256: String,
    /// Samples per simulated trajectory, at `dt_base`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_sha256: Option<String>,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl Manifest {
    pub fn new(command: &'static str, model_path: Option<&Path>) -> Result<Self> {
        let (model_path, model_sha256) = match model_path {
            Some(p) => (p.display().to_string(), sha256_file(p)?),
            None => (String::new(), String::new()),
        };
        Ok(Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            model_path,
            model_sha256,
            n_samples: None,
            trajectory_path: None,
            trajectory_sha256: None,
            files: Vec::new(),
            generation: None,
            estimation: None,
            sweep: None,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_toml(&dir.join("manifest.toml"), self)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let digest = Sha256::digest(read_text(path)?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
