//! Reading and writing canonical datasets.
//!
//! A dataset is either a JSON-lines file (one canonical document per line) or
//! a directory of `*.json` files, one per image. Writers always emit images
//! sorted by image id.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::model::{parse_canonical, serialize_canonical, serialize_canonical_pretty, CanonicalImage, ModelError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        source: ModelError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl StoreError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Loads every canonical image found at `path` (JSON-lines file, single JSON
/// file, or directory of either), sorted by image id.
pub fn read_images(path: &Path) -> Result<Vec<CanonicalImage>, StoreError> {
    let mut out = Vec::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| StoreError::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "jsonl")))
            .collect();
        entries.sort();
        for p in entries {
            out.extend(read_file(&p)?);
        }
    } else {
        out = read_file(path)?;
    }
    out.sort_by(|a, b| a.image_id().cmp(b.image_id()));
    Ok(out)
}

fn read_file(path: &Path) -> Result<Vec<CanonicalImage>, StoreError> {
    if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        let f = fs::File::open(path).map_err(|e| StoreError::io(path, e))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| StoreError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(parse_canonical(line.as_bytes()).map_err(|source| StoreError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?);
        }
        Ok(out)
    } else {
        let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
        let img = parse_canonical(&bytes).map_err(|source| StoreError::Record {
            path: path.to_path_buf(),
            line: 1,
            source,
        })?;
        Ok(vec![img])
    }
}

/// Canonical JSON-lines bytes for `images`, sorted by image id.
pub fn to_jsonl(images: &[CanonicalImage]) -> Result<Vec<u8>, ModelError> {
    let mut sorted: Vec<&CanonicalImage> = images.iter().collect();
    sorted.sort_by(|a, b| a.image_id().cmp(b.image_id()));
    let mut buf = Vec::new();
    for img in sorted {
        buf.extend(serialize_canonical(img)?);
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn write_jsonl(path: &Path, images: &[CanonicalImage]) -> Result<(), StoreError> {
    let bytes = to_jsonl(images).map_err(|source| StoreError::Record {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    write_atomic(path, &bytes)
}

/// One pretty-printed `<image_id>.json` per image.
pub fn write_image_dir(dir: &Path, images: &[CanonicalImage]) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    for img in images {
        let path = dir.join(format!("{}.json", sanitize_file_stem(img.image_id())));
        let bytes = serialize_canonical_pretty(img).map_err(|source| StoreError::Record {
            path: path.clone(),
            line: 0,
            source,
        })?;
        write_atomic(&path, &bytes)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a sibling temp file and rename so readers never observe a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| StoreError::io(&tmp, e))?;
    f.sync_all().map_err(|e| StoreError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))
}

/// File-name-safe version of an identifier.
pub fn sanitize_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}
