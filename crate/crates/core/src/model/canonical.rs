//! Canonical per-image record and its JSON interchange format.
//!
//! Layout of one document:
//!
//! ```text
//! {
//!   "image_meta": { image_id, source_dataset, split, file_path, resolution, ... },
//!   "agents": [ { agent_image_id, uuid, identity, bbox, error_in_labelling,
//!                 annotated_attributes, sandbox_tags, sub_entities }, ... ],
//!   "groups": [ { group_id, members }, ... ]
//! }
//! ```
//!
//! Keys are emitted in declaration order and maps are sorted, so serialization
//! is byte-deterministic.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::attributes::{AgentKind, AnnotatedAttributes};
use super::validate::validate_image;
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Corner form from `(x, y, width, height)`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center_y(&self) -> f64 {
        (self.y_min + self.y_max) / 2.0
    }

    pub fn is_proper(&self) -> bool {
        self.x_max > self.x_min && self.y_max > self.y_min
    }

    pub fn fits(&self, resolution: Resolution) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= f64::from(resolution.width)
            && self.y_max <= f64::from(resolution.height)
    }

    /// Intersection with the image frame.
    pub fn clipped(&self, resolution: Resolution) -> Self {
        Self::new(
            self.x_min.max(0.0),
            self.y_min.max(0.0),
            self.x_max.min(f64::from(resolution.width)),
            self.y_max.min(f64::from(resolution.height)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" | "training" | "tr" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" | "ts" | "testing" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Position of an image inside a recorded sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceInfo {
    pub sequence_id: String,
    pub frame_index: u32,
    #[serde(default)]
    pub key_frame: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub image_id: String,
    pub source_dataset: String,
    pub split: Split,
    pub file_path: String,
    pub resolution: Resolution,
    #[serde(default)]
    pub annotator_id: Option<String>,
    /// Error in the original labelling; the image is excluded downstream.
    #[serde(default)]
    pub discard_flag: bool,
    /// Set by ingestion when the referenced image file was not found.
    #[serde(default, skip_serializing_if = "is_false")]
    pub unresolved_path: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub group_id: String,
    /// `agent_image_id`s of the members.
    pub members: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "AgentWire")]
pub struct CanonicalAgent {
    pub agent_image_id: u32,
    pub uuid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_kind: Option<AgentKind>,
    /// Main label of the source dataset.
    pub identity: String,
    pub bbox: BoundingBox,
    #[serde(default)]
    pub error_in_labelling: bool,
    #[serde(default)]
    pub annotated_attributes: Option<AnnotatedAttributes>,
    #[serde(default)]
    pub sandbox_tags: BTreeMap<String, Value>,
    #[serde(default)]
    pub sub_entities: Vec<CanonicalAgent>,
}

/// Deserialization mirror of [`CanonicalAgent`] collecting unknown keys.
#[derive(Deserialize)]
struct AgentWire {
    agent_image_id: u32,
    uuid: String,
    #[serde(default)]
    agent_kind: Option<AgentKind>,
    identity: String,
    bbox: BoundingBox,
    #[serde(default)]
    error_in_labelling: bool,
    #[serde(default)]
    annotated_attributes: Option<AnnotatedAttributes>,
    #[serde(default)]
    sandbox_tags: BTreeMap<String, Value>,
    #[serde(default)]
    sub_entities: Vec<CanonicalAgent>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

impl From<AgentWire> for CanonicalAgent {
    fn from(w: AgentWire) -> Self {
        let mut sandbox_tags = w.sandbox_tags;
        for (k, v) in w.extra {
            sandbox_tags.entry(k).or_insert(v);
        }
        Self {
            agent_image_id: w.agent_image_id,
            uuid: w.uuid,
            agent_kind: w.agent_kind,
            identity: w.identity,
            bbox: w.bbox,
            error_in_labelling: w.error_in_labelling,
            annotated_attributes: w.annotated_attributes,
            sandbox_tags,
            sub_entities: w.sub_entities,
        }
    }
}

impl CanonicalAgent {
    pub fn new(agent_image_id: u32, uuid: impl Into<String>, identity: impl Into<String>, bbox: BoundingBox) -> Self {
        Self {
            agent_image_id,
            uuid: uuid.into(),
            agent_kind: None,
            identity: identity.into(),
            bbox,
            error_in_labelling: false,
            annotated_attributes: None,
            sandbox_tags: BTreeMap::new(),
            sub_entities: Vec::new(),
        }
    }

    pub fn with_kind(mut self, kind: AgentKind) -> Self {
        self.agent_kind = Some(kind);
        self
    }

    /// Declared kind, falling back to the kind of the attribute block.
    pub fn kind(&self) -> Option<AgentKind> {
        self.agent_kind
            .or_else(|| self.annotated_attributes.as_ref().map(|a| a.kind()))
    }

    pub fn group_id(&self) -> Option<&str> {
        self.annotated_attributes
            .as_ref()
            .and_then(|a| a.values.as_person())
            .and_then(|p| p.group_id.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalImage {
    pub image_meta: ImageMeta,
    #[serde(default)]
    pub agents: Vec<CanonicalAgent>,
    #[serde(default)]
    pub groups: Vec<Group>,
}

impl CanonicalImage {
    pub fn new(meta: ImageMeta) -> Self {
        Self {
            image_meta: meta,
            agents: Vec::new(),
            groups: Vec::new(),
        }
    }

    pub fn image_id(&self) -> &str {
        &self.image_meta.image_id
    }

    pub fn agent(&self, agent_image_id: u32) -> Option<&CanonicalAgent> {
        self.agents.iter().find(|a| a.agent_image_id == agent_image_id)
    }

    pub fn agent_by_uuid(&self, uuid: &str) -> Option<&CanonicalAgent> {
        self.agents.iter().find(|a| a.uuid == uuid)
    }

    pub fn agent_by_uuid_mut(&mut self, uuid: &str) -> Option<&mut CanonicalAgent> {
        self.agents.iter_mut().find(|a| a.uuid == uuid)
    }
}

/// Validates `image` and renders it as a canonical JSON document.
pub fn serialize_canonical(image: &CanonicalImage) -> Result<Vec<u8>, ModelError> {
    validate_image(image)?;
    Ok(serde_json::to_vec(image)?)
}

/// Same as [`serialize_canonical`] but pretty-printed (one file per image).
pub fn serialize_canonical_pretty(image: &CanonicalImage) -> Result<Vec<u8>, ModelError> {
    validate_image(image)?;
    Ok(serde_json::to_vec_pretty(image)?)
}

/// Parses and validates one canonical document.
pub fn parse_canonical(bytes: &[u8]) -> Result<CanonicalImage, ModelError> {
    // Syntax is checked first so malformed input is never reported as a schema error.
    let value: Value = serde_json::from_slice(bytes).map_err(ModelError::malformed)?;
    let image: CanonicalImage = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ModelError::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    validate_image(&image)?;
    Ok(image)
}
