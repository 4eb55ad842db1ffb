//! Annotation backend: sessions, task delivery, group proposals, an
//! append-only journal per dataset, and deterministic export.

pub mod groups;
pub mod http;
pub mod journal;
mod service;
pub mod simulate;
pub mod state;

use std::path::PathBuf;

use attrlabel_core::allocation::AllocationError;
use attrlabel_core::model::{ModelError, Violation};
use attrlabel_core::store::StoreError;
use thiserror::Error;

pub use groups::{propose_groups, GroupParams, GroupProposal};
pub use journal::{Event, Journal, JournalError, Record};
pub use service::{
    alphabets, install_dataset, replay_export_dir, write_bundle, Ack, ExportBundle, ExportFile, ExportManifest, Flag,
    GroupEdit, Progress, Service, ServiceConfig, SessionInfo, Submission, Task, TaskAgent, TaskImage, IMAGES_FILE,
    JOURNAL_FILE, PLAN_FILE,
};
pub use state::{DatasetState, StoredAnnotation};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("unknown or expired session")]
    StaleSession,
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("image `{image_id}` has no eligible agent `{uuid}`")]
    UnknownAgent { image_id: String, uuid: String },
    #[error("image `{0}` is not assigned to this annotator")]
    NotAssigned(String),
    #[error("{} validation error(s), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Validation(Vec<Violation>),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ServiceError {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::UnknownDataset(_) => "unknown_dataset",
            ServiceError::StaleSession => "stale_session",
            ServiceError::UnknownImage(_) => "unknown_image",
            ServiceError::UnknownAgent { .. } => "unknown_agent",
            ServiceError::NotAssigned(_) => "not_assigned",
            ServiceError::Validation(_) => "validation",
            ServiceError::Allocation(_) => "allocation",
            ServiceError::Journal(_) => "journal",
            ServiceError::Store(_) => "store",
            ServiceError::Model(_) => "model",
            ServiceError::Io { .. } => "io",
        }
    }
}
