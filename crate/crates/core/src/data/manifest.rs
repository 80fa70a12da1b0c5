use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sample of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path of the canonical event file, relative to the manifest.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    /// Target raster for association tasks, also a canonical event file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,
}

/// JSON listing of dataset samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub num_channels: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(num_channels: u32) -> Self {
        Self {
            num_channels,
            split: None,
            samples: Vec::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Resolves an entry path against the directory holding the manifest.
    pub fn resolve(manifest_path: &Path, entry: &Path) -> PathBuf {
        if entry.is_absolute() {
            entry.to_path_buf()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(entry)
        }
    }

    pub fn num_classes(&self) -> Result<usize> {
        self.samples
            .iter()
            .map(|s| s.label)
            .try_fold(0usize, |m, l| match l {
                Some(l) => Ok(m.max(l + 1)),
                None => Err(Error::arg("manifest sample has no label")),
            })
    }
}
