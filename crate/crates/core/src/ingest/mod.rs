//! Source-dataset adapters producing canonical images.

mod fixtures;
mod json_adapter;
mod kitti;

pub use fixtures::{generate_fixture_dataset, FixtureSpec, LabelWeights, SizeDistribution, GROUND_TRUTH_TAG};
pub use json_adapter::{ingest_json_dataset, BboxFormat, BboxSource, JsonAdapterConfig, Layout, UnmappedPolicy};
pub use kitti::{ingest_kitti, KittiOptions, KITTI_DEFAULT_RESOLUTION};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{CanonicalImage, ModelError, Split};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: unmapped class `{class}`")]
    UnmappedClass { path: PathBuf, class: String },
    #[error("adapter config: {0}")]
    Config(String),
    #[error("{path}: image `{image_id}`: {source}")]
    Invalid {
        path: PathBuf,
        image_id: String,
        source: ModelError,
    },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn row(path: &Path, line: usize, message: impl Into<String>) -> Self {
        IngestError::Row {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub images: u64,
    pub agents: u64,
}

/// Summary of one ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub dataset_id: String,
    pub images: u64,
    pub agents: u64,
    pub per_split: BTreeMap<Split, SplitCounts>,
    /// Emitted agents per source class.
    pub per_class: BTreeMap<String, u64>,
    /// Rows not emitted, per source class.
    pub dropped: BTreeMap<String, u64>,
    /// Image count per `WIDTHxHEIGHT`.
    pub resolutions: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
    /// SHA-256 over the input files (relative path and content, in path order).
    pub provenance_sha256: String,
}

impl IngestManifest {
    /// Counts taken from the emitted images, so they always agree with them.
    pub fn tally(dataset_id: &str, images: &[CanonicalImage]) -> Self {
        let mut m = IngestManifest {
            dataset_id: dataset_id.to_string(),
            ..Default::default()
        };
        for img in images {
            m.images += 1;
            let n = img.agents.len() as u64;
            m.agents += n;
            let s = m.per_split.entry(img.image_meta.split).or_default();
            s.images += 1;
            s.agents += n;
            for a in &img.agents {
                *m.per_class.entry(a.identity.clone()).or_default() += 1;
            }
            let r = img.image_meta.resolution;
            *m.resolutions.entry(format!("{}x{}", r.width, r.height)).or_default() += 1;
        }
        m
    }
}

/// Incremental SHA-256 over input files.
#[derive(Default)]
pub(crate) struct Provenance {
    files: BTreeMap<String, Vec<u8>>,
}

impl Provenance {
    pub(crate) fn add(&mut self, relative: &str, bytes: &[u8]) {
        self.files.insert(relative.to_string(), Sha256::digest(bytes).to_vec());
    }

    pub(crate) fn finish(self) -> String {
        let mut h = Sha256::new();
        for (path, digest) in self.files {
            h.update(path.as_bytes());
            h.update([0]);
            h.update(&digest);
        }
        hex::encode(h.finalize())
    }
}

/// Files under `dir` with the given extension, sorted by path.
pub(crate) fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, IngestError> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| IngestError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().and_then(|e| e.to_str()) == Some(ext))
        .collect();
    out.sort();
    Ok(out)
}

pub(crate) fn agent_uuid(dataset_id: &str, key: &str) -> String {
    uuid::Uuid::new_v5(&uuid::Uuid::NAMESPACE_URL, format!("attrlabel:{dataset_id}:{key}").as_bytes()).to_string()
}
