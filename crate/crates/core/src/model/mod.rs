//! Canonical data records, attribute taxonomies and the on-disk format.

mod analysis;
mod attributes;
mod canonical;
mod validate;

pub use analysis::{AttributeId, GROUP, NO_GROUP, UNKNOWN, UNKNOWN_CLEAR, UNKNOWN_NOT_CLEAR};
pub use attributes::{
    Age, AgentKind, AnnotatedAttributes, AttributeField, AttributeValues, CarType, Colour, Label,
    MeansOfTransport, PersonAttributes, Provenance, Sex, Skin, UnknownConfidence,
    VehicleAttributes, VehicleType,
};
pub use canonical::{
    parse_canonical, serialize_canonical, serialize_canonical_pretty, BoundingBox, CanonicalAgent,
    CanonicalImage, Group, ImageMeta, Resolution, SequenceInfo, Split,
};
pub use validate::{image_violations, validate_attribute_set, validate_image, Rule, Violation};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated at `{path}`: {message}")]
    Invariant { path: String, message: String },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl ModelError {
    fn malformed(e: serde_json::Error) -> Self {
        ModelError::Malformed {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }

    /// Path of the offending field for schema and invariant errors.
    pub fn path(&self) -> Option<&str> {
        match self {
            ModelError::Schema { path, .. } | ModelError::Invariant { path, .. } => Some(path),
            _ => None,
        }
    }
}
