//! Config-driven adapter for JSON label files.
//!
//! Field locations are JSON pointers (RFC 6901) relative to the image or
//! agent object. Two layouts are understood: agents nested inside each image
//! object, and COCO-style top-level `images` / `annotations` arrays joined on
//! an image key.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{agent_uuid, list_files, IngestError, IngestManifest, Provenance};
use crate::model::{
    validate_image, AgentKind, BoundingBox, CanonicalAgent, CanonicalImage, ImageMeta, Resolution, SequenceInfo,
    Split,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BboxFormat {
    /// Corners `x_min, y_min, x_max, y_max`.
    Xyxy,
    /// Top-left corner plus size `x, y, w, h`.
    Xywh,
}

/// Where the four box numbers live: one pointer to an array, or one pointer per number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BboxSource {
    Array(String),
    Fields([String; 4]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmappedPolicy {
    #[default]
    Drop,
    /// Emit the agent without a kind, identity set to the source class.
    KeepAsIdentity,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Layout {
    /// Each image object holds its agents at `agents`.
    Nested { agents: String },
    /// Top-level arrays joined on image id.
    Coco {
        annotations: String,
        /// Pointer to the image id inside an annotation object.
        image_key: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageFields {
    /// Defaults to the file stem when absent (one image per file).
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub file_path: Option<String>,
    #[serde(default)]
    pub width: Option<String>,
    #[serde(default)]
    pub height: Option<String>,
    #[serde(default)]
    pub split: Option<String>,
    #[serde(default)]
    pub sequence_id: Option<String>,
    #[serde(default)]
    pub frame_index: Option<String>,
    #[serde(default)]
    pub key_frame: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFields {
    pub class: String,
    pub bbox: BboxSource,
    /// Instance token stable across frames; becomes the uuid seed.
    #[serde(default)]
    pub instance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonAdapterConfig {
    pub dataset_id: String,
    /// Pointer to the array of image objects (`""` for a top-level array);
    /// absent for one image object per file.
    #[serde(default)]
    pub images: Option<String>,
    pub layout: Layout,
    pub image: ImageFields,
    pub agent: AgentFields,
    pub bbox_format: BboxFormat,
    /// Source class → agent kind.
    pub class_map: BTreeMap<String, AgentKind>,
    #[serde(default)]
    pub unmapped: UnmappedPolicy,
    #[serde(default = "default_split")]
    pub default_split: Split,
    #[serde(default)]
    pub default_resolution: Option<Resolution>,
    /// Clip boxes to the image instead of rejecting them.
    #[serde(default = "yes")]
    pub clip: bool,
    /// Agent keys copied into `sandbox_tags` (pointer → tag name).
    #[serde(default)]
    pub sandbox: BTreeMap<String, String>,
    #[serde(default = "default_ext")]
    pub extension: String,
}

fn default_split() -> Split {
    Split::Train
}

fn yes() -> bool {
    true
}

fn default_ext() -> String {
    "json".into()
}

fn as_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn get<'a>(obj: &'a Value, pointer: &str) -> Option<&'a Value> {
    obj.pointer(pointer).filter(|v| !v.is_null())
}

struct Ctx<'a> {
    cfg: &'a JsonAdapterConfig,
    path: &'a Path,
    dropped: BTreeMap<String, u64>,
    warnings: Vec<String>,
}

impl Ctx<'_> {
    fn err(&self, index: usize, message: impl Into<String>) -> IngestError {
        IngestError::row(self.path, index + 1, message)
    }

    fn bbox(&self, obj: &Value, index: usize) -> Result<BoundingBox, IngestError> {
        let nums: Vec<f64> = match &self.cfg.agent.bbox {
            BboxSource::Array(p) => get(obj, p)
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_f64).collect())
                .unwrap_or_default(),
            BboxSource::Fields(ps) => ps.iter().filter_map(|p| get(obj, p).and_then(Value::as_f64)).collect(),
        };
        if nums.len() != 4 || nums.iter().any(|v| !v.is_finite()) {
            return Err(self.err(index, "bbox: expected four finite numbers"));
        }
        Ok(match self.cfg.bbox_format {
            BboxFormat::Xyxy => BoundingBox::new(nums[0], nums[1], nums[2], nums[3]),
            BboxFormat::Xywh => BoundingBox::from_xywh(nums[0], nums[1], nums[2], nums[3]),
        })
    }

    fn image(&mut self, obj: &Value, agents: &[&Value], fallback_id: &str) -> Result<CanonicalImage, IngestError> {
        let cfg = self.cfg;
        let f = &cfg.image;
        let id = match &f.id {
            Some(p) => get(obj, p)
                .and_then(as_text)
                .ok_or_else(|| self.err(0, format!("image id missing at `{p}`")))?,
            None => fallback_id.to_string(),
        };
        let dim = |p: &Option<String>| p.as_ref().and_then(|p| get(obj, p)).and_then(Value::as_u64);
        let resolution = match (dim(&f.width), dim(&f.height), cfg.default_resolution) {
            (Some(w), Some(h), _) => Resolution::new(w as u32, h as u32),
            (_, _, Some(r)) => r,
            _ => return Err(self.err(0, format!("image `{id}`: resolution missing and no default configured"))),
        };
        let split = match f.split.as_ref().and_then(|p| get(obj, p)).and_then(as_text) {
            Some(s) => s.parse().map_err(|e: String| self.err(0, e))?,
            None => cfg.default_split,
        };
        let sequence = f.sequence_id.as_ref().and_then(|p| get(obj, p)).and_then(as_text).map(|sequence_id| {
            SequenceInfo {
                sequence_id,
                frame_index: f
                    .frame_index
                    .as_ref()
                    .and_then(|p| get(obj, p))
                    .and_then(Value::as_u64)
                    .unwrap_or(0) as u32,
                key_frame: f
                    .key_frame
                    .as_ref()
                    .and_then(|p| get(obj, p))
                    .and_then(Value::as_bool)
                    .unwrap_or(false),
            }
        });
        let file_path = f
            .file_path
            .as_ref()
            .and_then(|p| get(obj, p))
            .and_then(as_text)
            .unwrap_or_else(|| id.clone());
        let mut img = CanonicalImage::new(ImageMeta {
            image_id: id.clone(),
            source_dataset: cfg.dataset_id.clone(),
            split,
            file_path,
            resolution,
            annotator_id: None,
            discard_flag: false,
            unresolved_path: false,
            sequence,
        });
        for (i, a) in agents.iter().enumerate() {
            let class = get(a, &cfg.agent.class)
                .and_then(as_text)
                .ok_or_else(|| self.err(i, format!("image `{id}` agent {i}: class missing")))?;
            let kind = match cfg.class_map.get(&class) {
                Some(k) => Some(*k),
                None => match cfg.unmapped {
                    UnmappedPolicy::Drop => {
                        *self.dropped.entry(class).or_default() += 1;
                        continue;
                    }
                    UnmappedPolicy::KeepAsIdentity => None,
                    UnmappedPolicy::Fail => {
                        return Err(IngestError::UnmappedClass {
                            path: self.path.to_path_buf(),
                            class,
                        })
                    }
                },
            };
            let raw = self.bbox(a, i)?;
            let bbox = if cfg.clip { raw.clipped(resolution) } else { raw };
            if !bbox.is_proper() {
                *self.dropped.entry(class).or_default() += 1;
                self.warnings.push(format!("image `{id}` agent {i}: empty box, dropped"));
                continue;
            }
            let key = match cfg.agent.instance.as_ref().and_then(|p| get(a, p)).and_then(as_text) {
                Some(token) => format!("instance/{token}"),
                None => format!("{id}/{i}"),
            };
            let mut agent = CanonicalAgent::new(img.agents.len() as u32, agent_uuid(&cfg.dataset_id, &key), class, bbox);
            agent.agent_kind = kind;
            for (pointer, tag) in &cfg.sandbox {
                if let Some(v) = get(a, pointer) {
                    agent.sandbox_tags.insert(tag.clone(), v.clone());
                }
            }
            if bbox != raw {
                agent.sandbox_tags.insert("clipped".into(), Value::Bool(true));
            }
            img.agents.push(agent);
        }
        validate_image(&img).map_err(|source| IngestError::Invalid {
            path: self.path.to_path_buf(),
            image_id: id,
            source,
        })?;
        Ok(img)
    }
}

/// Converts every file with the configured extension under `dir`.
pub fn ingest_json_dataset(
    cfg: &JsonAdapterConfig,
    dir: &Path,
) -> Result<(Vec<CanonicalImage>, IngestManifest), IngestError> {
    let files = if dir.is_file() {
        vec![dir.to_path_buf()]
    } else {
        list_files(dir, &cfg.extension)?
    };
    let mut provenance = Provenance::default();
    let mut images = Vec::new();
    let mut dropped = BTreeMap::new();
    let mut warnings = Vec::new();
    for path in &files {
        let bytes = std::fs::read(path).map_err(|e| IngestError::io(path, e))?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        provenance.add(&name, &bytes);
        let doc: Value = serde_json::from_slice(&bytes).map_err(|source| IngestError::Json {
            path: path.clone(),
            source,
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mut ctx = Ctx {
            cfg,
            path,
            dropped: BTreeMap::new(),
            warnings: Vec::new(),
        };
        let image_objs: Vec<&Value> = match &cfg.images {
            None => vec![&doc],
            Some(p) => get(&doc, p)
                .and_then(Value::as_array)
                .ok_or_else(|| ctx.err(0, format!("no image array at `{p}`")))?
                .iter()
                .collect(),
        };
        match &cfg.layout {
            Layout::Nested { agents } => {
                for (k, obj) in image_objs.iter().enumerate() {
                    let list: Vec<&Value> = get(obj, agents)
                        .and_then(Value::as_array)
                        .map(|a| a.iter().collect())
                        .unwrap_or_default();
                    let fallback = if image_objs.len() == 1 { stem.clone() } else { format!("{stem}_{k}") };
                    images.push(ctx.image(obj, &list, &fallback)?);
                }
            }
            Layout::Coco { annotations, image_key } => {
                let mut by_image: BTreeMap<String, Vec<&Value>> = BTreeMap::new();
                for a in get(&doc, annotations).and_then(Value::as_array).into_iter().flatten() {
                    let key = get(a, image_key)
                        .and_then(as_text)
                        .ok_or_else(|| ctx.err(0, format!("annotation without `{image_key}`")))?;
                    by_image.entry(key).or_default().push(a);
                }
                let id_ptr = cfg
                    .image
                    .id
                    .as_ref()
                    .ok_or_else(|| IngestError::Config("coco layout needs image.id".into()))?;
                for obj in &image_objs {
                    let key = get(obj, id_ptr).and_then(as_text).unwrap_or_default();
                    let list = by_image.remove(&key).unwrap_or_default();
                    images.push(ctx.image(obj, &list, &key)?);
                }
                for (key, orphans) in by_image {
                    ctx.warnings.push(format!("{} annotations reference unknown image `{key}`", orphans.len()));
                }
            }
        }
        for (k, v) in ctx.dropped {
            *dropped.entry(k).or_insert(0) += v;
        }
        warnings.extend(ctx.warnings);
    }
    images.sort_by(|a, b| a.image_id().cmp(b.image_id()));
    let mut manifest = IngestManifest::tally(&cfg.dataset_id, &images);
    manifest.dropped = dropped;
    manifest.warnings = warnings;
    manifest.provenance_sha256 = provenance.finish();
    Ok((images, manifest))
}
