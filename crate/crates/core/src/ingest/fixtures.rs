//! Deterministic synthetic datasets for tests and simulations.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{agent_uuid, IngestManifest};
use crate::model::{
    AgentKind, AttributeId, BoundingBox, CanonicalAgent, CanonicalImage, ImageMeta, Resolution, SequenceInfo, Split,
    UNKNOWN,
};

/// Sandbox tag holding the generator's true labels, attribute name → label.
pub const GROUND_TRUTH_TAG: &str = "ground_truth";

/// Box areas drawn log-uniformly from `[min_area, max_area]` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    pub min_area: f64,
    pub max_area: f64,
}

impl Default for SizeDistribution {
    fn default() -> Self {
        Self {
            min_area: 2000.0,
            max_area: 60000.0,
        }
    }
}

/// Attribute name → label → relative weight for ground-truth sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelWeights(pub BTreeMap<String, BTreeMap<String, f64>>);

impl Default for LabelWeights {
    fn default() -> Self {
        let table: &[(&str, &[(&str, f64)])] = &[
            ("age", &[("adult", 0.93), ("kid", 0.04), ("unknown", 0.03)]),
            ("sex", &[("male", 0.55), ("female", 0.35), ("unknown", 0.10)]),
            ("skin", &[("light", 0.70), ("dark", 0.15), ("unknown", 0.15)]),
            (
                "means_of_transport",
                &[("pedestrian", 0.85), ("bicycle", 0.10), ("pmd", 0.02), ("wheelchair", 0.01), ("unknown", 0.02)],
            ),
            (
                "vehicle_type",
                &[("car", 0.70), ("motorcycle", 0.05), ("van", 0.10), ("truck", 0.07), ("bus", 0.04), ("other", 0.02), ("unknown", 0.02)],
            ),
            (
                "colour",
                &[
                    ("black", 0.20), ("white", 0.22), ("grey", 0.25), ("blue", 0.10), ("red", 0.10),
                    ("yellow", 0.03), ("green", 0.03), ("other", 0.04), ("unknown", 0.03),
                ],
            ),
            (
                "car_type",
                &[("small", 0.25), ("medium", 0.35), ("large", 0.25), ("pickup", 0.05), ("convertible", 0.02), ("other", 0.05), ("unknown", 0.03)],
            ),
        ];
        LabelWeights(
            table
                .iter()
                .map(|(a, ls)| (a.to_string(), ls.iter().map(|(l, w)| (l.to_string(), *w)).collect()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub dataset_id: String,
    pub seed: u64,
    pub kind: AgentKind,
    /// Number of images; ignored when `agents` is set.
    pub images: usize,
    /// Exact agent total. Images are generated until it is reached.
    pub agents: Option<u64>,
    /// Mean agents per image (uniform on `1..=2·mean − 1`).
    pub mean_agents: u32,
    pub size: SizeDistribution,
    pub resolution: Resolution,
    /// Relative weights of train / val / test.
    pub split_weights: [f64; 3],
    /// Consecutive images form sequences of this length sharing agent uuids.
    pub sequence_length: Option<u32>,
    /// Probability that a person is placed right next to the previous one.
    pub group_rate: f64,
    pub labels: LabelWeights,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            dataset_id: "fixture".into(),
            seed: 0,
            kind: AgentKind::Person,
            images: 100,
            agents: None,
            mean_agents: 3,
            size: SizeDistribution::default(),
            resolution: Resolution::new(1920, 1080),
            split_weights: [0.7, 0.3, 0.0],
            sequence_length: None,
            group_rate: 0.2,
            labels: LabelWeights::default(),
        }
    }
}

struct Sampler {
    attrs: Vec<(AttributeId, Vec<String>, WeightedIndex<f64>)>,
}

impl Sampler {
    fn new(kind: AgentKind, weights: &LabelWeights) -> Self {
        let attrs = AttributeId::for_kind(kind)
            .iter()
            .filter(|a| **a != AttributeId::Group)
            .map(|&a| {
                let alphabet = a.alphabet(false);
                let table = weights.0.get(a.as_str());
                let w: Vec<f64> = alphabet
                    .iter()
                    .map(|l| table.and_then(|t| t.get(l)).copied().unwrap_or(if table.is_some() { 0.0 } else { 1.0 }))
                    .collect();
                let dist = WeightedIndex::new(&w)
                    .unwrap_or_else(|_| WeightedIndex::new(vec![1.0; alphabet.len()]).expect("uniform weights"));
                (a, alphabet, dist)
            })
            .collect();
        Self { attrs }
    }

    fn truth(&self, rng: &mut ChaCha8Rng) -> Value {
        let mut out = serde_json::Map::new();
        for (a, alphabet, dist) in &self.attrs {
            out.insert(a.as_str().to_string(), json!(alphabet[dist.sample(rng)]));
        }
        if out.get("vehicle_type").is_some_and(|v| v != "car") {
            out.insert("car_type".into(), json!(UNKNOWN));
        }
        Value::Object(out)
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn place(rng: &mut ChaCha8Rng, spec: &FixtureSpec, prev: Option<&BoundingBox>) -> BoundingBox {
    let (lo, hi) = (spec.size.min_area.max(1.0), spec.size.max_area.max(spec.size.min_area.max(1.0)));
    let area = if hi > lo { (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp() } else { lo };
    let res = spec.resolution;
    let (mut w, mut h) = match spec.kind {
        AgentKind::Person => {
            let h = (2.0 * area).sqrt();
            (area / h, h)
        }
        AgentKind::Vehicle => {
            let w = (1.5 * area).sqrt();
            (w, area / w)
        }
    };
    let scale = (f64::from(res.width) / w).min(f64::from(res.height) / h).min(1.0);
    w *= scale;
    h *= scale;
    let x = match prev {
        Some(p) if p.x_max + w <= f64::from(res.width) => p.x_max + 1.0_f64.min(f64::from(res.width) - p.x_max - w),
        _ => rng.random::<f64>() * (f64::from(res.width) - w),
    };
    let y = match prev {
        Some(p) if p.y_max - h >= 0.0 => p.y_max - h,
        _ => rng.random::<f64>() * (f64::from(res.height) - h),
    };
    let b = BoundingBox::new(round2(x), round2(y), round2(x + w), round2(y + h));
    b.clipped(res)
}

/// Generates images and the matching manifest; same spec, same bytes.
pub fn generate_fixture_dataset(spec: &FixtureSpec) -> (Vec<CanonicalImage>, IngestManifest) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sampler = Sampler::new(spec.kind, &spec.labels);
    let splits = WeightedIndex::new(spec.split_weights).unwrap_or_else(|_| WeightedIndex::new([1.0, 0.0, 0.0]).expect("weights"));
    let mut images = Vec::new();
    let mut total = 0u64;
    let identity = match spec.kind {
        AgentKind::Person => "pedestrian",
        AgentKind::Vehicle => "car",
    };
    // Agents of the running sequence: (uuid, box, truth).
    let mut sequence: Vec<(String, BoundingBox, Value)> = Vec::new();
    let mut seq_id = String::new();
    let mut seq_split = Split::Train;
    let mut i = 0usize;
    loop {
        let stop = match spec.agents {
            Some(goal) => total >= goal,
            None => i >= spec.images,
        };
        if stop {
            break;
        }
        let image_id = format!("{}_{i:06}", spec.dataset_id);
        let frame = spec.sequence_length.map(|len| (i as u32) % len.max(1));
        let seq_info = frame.map(|f| {
            if f == 0 {
                seq_id = format!("{}_seq{:05}", spec.dataset_id, i / spec.sequence_length.unwrap_or(1).max(1) as usize);
                seq_split = Split::ALL[splits.sample(&mut rng)];
                sequence.clear();
            }
            SequenceInfo {
                sequence_id: seq_id.clone(),
                frame_index: f,
                key_frame: f == 0,
            }
        });
        let split = if seq_info.is_some() { seq_split } else { Split::ALL[splits.sample(&mut rng)] };
        let mut img = CanonicalImage::new(ImageMeta {
            image_id: image_id.clone(),
            source_dataset: spec.dataset_id.clone(),
            split,
            file_path: format!("images/{image_id}.png"),
            resolution: spec.resolution,
            annotator_id: None,
            discard_flag: false,
            unresolved_path: false,
            sequence: seq_info.clone(),
        });
        let mut n = rng.random_range(1..=(2 * spec.mean_agents.max(1) - 1)) as u64;
        if let Some(goal) = spec.agents {
            n = n.min(goal - total);
        }
        let continuing = seq_info.as_ref().is_some_and(|s| s.frame_index > 0);
        if continuing {
            let budget = spec.agents.map_or(usize::MAX, |goal| (goal - total) as usize);
            for (k, (uuid, bbox, truth)) in sequence.iter_mut().enumerate().take(budget) {
                let dx = rng.random_range(-3.0..3.0_f64);
                let moved = BoundingBox::new(bbox.x_min + dx, bbox.y_min, bbox.x_max + dx, bbox.y_max).clipped(spec.resolution);
                if moved.is_proper() {
                    *bbox = BoundingBox::new(round2(moved.x_min), moved.y_min, round2(moved.x_max), moved.y_max);
                }
                let mut a = CanonicalAgent::new(k as u32, uuid.clone(), identity, *bbox).with_kind(spec.kind);
                a.sandbox_tags.insert(GROUND_TRUTH_TAG.into(), truth.clone());
                img.agents.push(a);
            }
        } else {
            let mut prev: Option<BoundingBox> = None;
            for k in 0..n {
                let adjacent = spec.kind == AgentKind::Person && rng.random::<f64>() < spec.group_rate;
                let bbox = place(&mut rng, spec, if adjacent { prev.as_ref() } else { None });
                prev = Some(bbox);
                let truth = sampler.truth(&mut rng);
                let uuid = agent_uuid(&spec.dataset_id, &format!("{image_id}/{k}"));
                if seq_info.is_some() {
                    sequence.push((uuid.clone(), bbox, truth.clone()));
                }
                let mut a = CanonicalAgent::new(k as u32, uuid, identity, bbox).with_kind(spec.kind);
                a.sandbox_tags.insert(GROUND_TRUTH_TAG.into(), truth);
                img.agents.push(a);
            }
        }
        total += img.agents.len() as u64;
        images.push(img);
        i += 1;
    }
    let mut manifest = IngestManifest::tally(&spec.dataset_id, &images);
    manifest.provenance_sha256 = hex::encode(Sha256::digest(serde_json::to_vec(spec).expect("spec serializes")));
    (images, manifest)
}
