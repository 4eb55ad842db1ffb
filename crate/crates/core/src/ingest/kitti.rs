//! KITTI object label files: one whitespace-separated row per object.
//!
//! Columns: type, truncated, occluded, alpha, bbox (left top right bottom),
//! dimensions (h w l), location (x y z), rotation_y and an optional score.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{agent_uuid, list_files, IngestError, IngestManifest, Provenance};
use crate::model::{
    validate_image, AgentKind, BoundingBox, CanonicalAgent, CanonicalImage, ImageMeta, Resolution, Split,
};

pub const KITTI_DEFAULT_RESOLUTION: Resolution = Resolution {
    width: 1242,
    height: 375,
};

const PERSON_CLASSES: [&str; 3] = ["Pedestrian", "Person_sitting", "Cyclist"];
const VEHICLE_CLASSES: [&str; 4] = ["Car", "Van", "Truck", "Tram"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KittiOptions {
    pub dataset_id: String,
    pub split: Split,
    /// Agent kinds to emit; rows of other kinds are dropped and counted.
    pub kinds: Vec<AgentKind>,
    pub image_ext: String,
}

impl Default for KittiOptions {
    fn default() -> Self {
        Self {
            dataset_id: "kitti".into(),
            split: Split::Train,
            kinds: vec![AgentKind::Person, AgentKind::Vehicle],
            image_ext: "png".into(),
        }
    }
}

fn class_kind(class: &str) -> Option<AgentKind> {
    if PERSON_CLASSES.contains(&class) {
        Some(AgentKind::Person)
    } else if VEHICLE_CLASSES.contains(&class) {
        Some(AgentKind::Vehicle)
    } else {
        None
    }
}

fn number(path: &Path, line: usize, field: &str, raw: &str) -> Result<f64, IngestError> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| IngestError::row(path, line, format!("{field}: expected a number, got `{raw}`")))
}

/// Parses every `*.txt` file of `label_dir`. Image files are looked up in
/// `image_dir` by stem; a missing image keeps the record with
/// `unresolved_path` set and the default KITTI resolution.
pub fn ingest_kitti(
    label_dir: &Path,
    image_dir: &Path,
    options: &KittiOptions,
) -> Result<(Vec<CanonicalImage>, IngestManifest), IngestError> {
    let mut provenance = Provenance::default();
    let mut dropped: BTreeMap<String, u64> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut images = Vec::new();
    for path in list_files(label_dir, "txt")? {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| IngestError::row(&path, 0, "file name is not UTF-8"))?
            .to_string();
        let text = std::fs::read_to_string(&path).map_err(|e| IngestError::io(&path, e))?;
        provenance.add(&format!("label/{stem}.txt"), text.as_bytes());

        let image_path: PathBuf = image_dir.join(format!("{stem}.{}", options.image_ext));
        let (resolution, unresolved) = match imagesize::size(&image_path) {
            Ok(size) => (Resolution::new(size.width as u32, size.height as u32), false),
            Err(_) => {
                warnings.push(format!("{}: image not found, using default resolution", image_path.display()));
                (KITTI_DEFAULT_RESOLUTION, true)
            }
        };
        let mut img = CanonicalImage::new(ImageMeta {
            image_id: stem.clone(),
            source_dataset: options.dataset_id.clone(),
            split: options.split,
            file_path: image_path.to_string_lossy().into_owned(),
            resolution,
            annotator_id: None,
            discard_flag: false,
            unresolved_path: unresolved,
            sequence: None,
        });
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let fields: Vec<&str> = raw.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 15 && fields.len() != 16 {
                return Err(IngestError::row(&path, line, format!("expected 15 or 16 fields, got {}", fields.len())));
            }
            let class = fields[0];
            let nums: Vec<f64> = fields[1..]
                .iter()
                .enumerate()
                .map(|(k, f)| number(&path, line, &format!("field {}", k + 2), f))
                .collect::<Result<_, _>>()?;
            let Some(kind) = class_kind(class).filter(|k| options.kinds.contains(k)) else {
                *dropped.entry(class.to_string()).or_default() += 1;
                continue;
            };
            let raw_box = BoundingBox::new(nums[3], nums[4], nums[5], nums[6]);
            if !raw_box.is_proper() {
                return Err(IngestError::row(&path, line, "bounding box has non-positive area"));
            }
            let bbox = raw_box.clipped(resolution);
            if !bbox.is_proper() {
                *dropped.entry(class.to_string()).or_default() += 1;
                warnings.push(format!("{}:{line}: box outside image, dropped", path.display()));
                continue;
            }
            let id = img.agents.len() as u32;
            let mut agent = CanonicalAgent::new(id, agent_uuid(&options.dataset_id, &format!("{stem}/{}", i)), class, bbox)
                .with_kind(kind);
            let tags = &mut agent.sandbox_tags;
            tags.insert("truncated".into(), json!(nums[0]));
            tags.insert("occluded".into(), json!(nums[1]));
            tags.insert("alpha".into(), json!(nums[2]));
            tags.insert("dimensions".into(), json!([nums[7], nums[8], nums[9]]));
            tags.insert("location".into(), json!([nums[10], nums[11], nums[12]]));
            tags.insert("rotation_y".into(), json!(nums[13]));
            if let Some(score) = nums.get(14) {
                tags.insert("score".into(), json!(score));
            }
            if bbox != raw_box {
                tags.insert("clipped".into(), json!(true));
            }
            img.agents.push(agent);
        }
        validate_image(&img).map_err(|source| IngestError::Invalid {
            path: path.clone(),
            image_id: stem.clone(),
            source,
        })?;
        images.push(img);
    }
    images.sort_by(|a, b| a.image_id().cmp(b.image_id()));
    let mut manifest = IngestManifest::tally(&options.dataset_id, &images);
    manifest.dropped = dropped;
    manifest.warnings = warnings;
    manifest.provenance_sha256 = provenance.finish();
    Ok((images, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const ROW: &str = "Pedestrian 0.00 0 -0.20 100.00 100.00 200.00 300.00 1.89 0.48 1.20 1.84 1.47 8.41 0.01";

    fn setup(rows: &[&str]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("label_2")).unwrap();
        fs::create_dir(dir.path().join("image_2")).unwrap();
        fs::write(dir.path().join("label_2/000000.txt"), rows.join("\n")).unwrap();
        dir
    }

    #[test]
    fn single_pedestrian() {
        let dir = setup(&[ROW]);
        let (imgs, m) = ingest_kitti(&dir.path().join("label_2"), &dir.path().join("image_2"), &KittiOptions::default()).unwrap();
        assert_eq!(imgs.len(), 1);
        let a = &imgs[0].agents[0];
        assert_eq!(a.identity, "Pedestrian");
        assert_eq!(a.bbox.area(), 20000.0);
        assert_eq!(a.kind(), Some(AgentKind::Person));
        assert!(imgs[0].image_meta.unresolved_path);
        assert_eq!(m.agents, 1);
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn dont_care_and_misc_dropped_and_counted() {
        let dir = setup(&[
            ROW,
            "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10",
            "Misc 0.00 0 -1.0 10 10 50 50 1 1 1 1 1 1 0.0",
        ]);
        let (imgs, m) = ingest_kitti(&dir.path().join("label_2"), &dir.path().join("image_2"), &KittiOptions::default()).unwrap();
        assert_eq!(imgs[0].agents.len(), 1);
        assert_eq!(m.dropped["DontCare"], 1);
        assert_eq!(m.dropped["Misc"], 1);
    }

    #[test]
    fn malformed_row_names_file_and_line() {
        let dir = setup(&[ROW, "Car 0.0 0 x 1 2 3 4 1 1 1 1 1 1 0"]);
        let err = ingest_kitti(&dir.path().join("label_2"), &dir.path().join("image_2"), &KittiOptions::default()).unwrap_err();
        match err {
            IngestError::Row { line, path, .. } => {
                assert_eq!(line, 2);
                assert!(path.ends_with("000000.txt"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rerun_is_identical() {
        let dir = setup(&[ROW, "Car 0.0 0 0 300 100 500 250 1 1 1 1 1 1 0"]);
        let run = || ingest_kitti(&dir.path().join("label_2"), &dir.path().join("image_2"), &KittiOptions::default()).unwrap();
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(crate::store::to_jsonl(&a).unwrap(), crate::store::to_jsonl(&b).unwrap());
        assert_eq!(ma, mb);
    }
}
