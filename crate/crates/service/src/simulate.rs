//! Virtual annotators driving the service end to end.
//!
//! Every annotator answers with the fixture's true labels, except that on a
//! fraction `disagree` of (agent, attribute) pairs one annotator picked by
//! hash gives a different label. Choices depend only on the seed and the
//! agent, never on thread timing, so runs are reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use attrlabel_core::allocation::{build_plan, filter_by_area, FilterConfig, Fraction, PlanRequest};
use attrlabel_core::ingest::{generate_fixture_dataset, FixtureSpec, SizeDistribution, GROUND_TRUTH_TAG};
use attrlabel_core::model::{
    Age, AgentKind, AnnotatedAttributes, AttributeId, AttributeValues, CanonicalAgent, CarType, Colour, Label,
    MeansOfTransport, PersonAttributes, Sex, Skin, VehicleAttributes, VehicleType, UNKNOWN,
};
use attrlabel_core::store;

use crate::service::{install_dataset, replay_export_dir, write_bundle, ExportManifest, Service, ServiceConfig, Submission};
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub dataset_id: String,
    pub annotators: usize,
    /// Inter-agreement agents, i.e. items every annotator labels.
    pub items: u64,
    /// Agents beyond the inter pool, shared out exclusively. Defaults to a
    /// quarter of `items`.
    pub exclusive_agents: Option<u64>,
    pub kind: AgentKind,
    /// Per-attribute probability that an item is not unanimous.
    pub disagree: f64,
    /// Per-item probability that one annotator answers `unknown`.
    pub soft_rate: f64,
    /// Per-item probability that the source box is mislabelled.
    pub error_rate: f64,
    pub sequence_length: Option<u32>,
    pub seed: u64,
    /// One thread per annotator when true, round-robin otherwise.
    pub concurrent: bool,
    pub sync_journal: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dataset_id: "sim".into(),
            annotators: 5,
            items: 200,
            exclusive_agents: None,
            kind: AgentKind::Person,
            disagree: 0.1,
            soft_rate: 0.0,
            error_rate: 0.0,
            sequence_length: None,
            seed: 0,
            concurrent: true,
            sync_journal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub items: u64,
    pub deviated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub dataset_id: String,
    pub data_dir: PathBuf,
    pub export_dir: PathBuf,
    pub annotators: Vec<String>,
    pub goal: u64,
    pub quota: u64,
    pub inter_images: usize,
    pub inter_items: u64,
    pub exclusive_images: BTreeMap<String, usize>,
    /// Exclusive images exported by more than one annotator.
    pub exclusive_overlap: usize,
    /// Inter items per attribute and how many received a deviating label.
    pub injected: BTreeMap<String, Injection>,
    pub journal_records: u64,
    pub replay_identical: bool,
    pub manifest: ExportManifest,
}

fn hash64(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn unit(seed: u64, parts: &[&str]) -> f64 {
    (hash64(seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}

fn pick(seed: u64, parts: &[&str], n: usize) -> usize {
    (hash64(seed, parts) % n as u64) as usize
}

/// Deterministic virtual annotator behaviour for one configuration.
#[derive(Debug, Clone)]
pub struct Oracle {
    seed: u64,
    raters: usize,
    disagree: f64,
    soft_rate: f64,
    error_rate: f64,
}

impl Oracle {
    pub fn new(cfg: &SimulationConfig) -> Self {
        Self {
            seed: cfg.seed,
            raters: cfg.annotators,
            disagree: cfg.disagree,
            soft_rate: cfg.soft_rate,
            error_rate: cfg.error_rate,
        }
    }

    fn truth(agent: &CanonicalAgent, attr: AttributeId) -> String {
        agent
            .sandbox_tags
            .get(GROUND_TRUTH_TAG)
            .and_then(|t| t.get(attr.as_str()))
            .and_then(|v| v.as_str())
            .unwrap_or(UNKNOWN)
            .to_string()
    }

    pub fn is_error(&self, image_id: &str, agent: &CanonicalAgent) -> bool {
        unit(self.seed, &[image_id, &agent.uuid, "error"]) < self.error_rate
    }

    /// `Some(rater)` when this (item, attribute) gets a deviating rater.
    pub fn deviating_rater(&self, image_id: &str, agent: &CanonicalAgent, attr: AttributeId) -> Option<usize> {
        let a = attr.as_str();
        (unit(self.seed, &[image_id, &agent.uuid, a, "deviate"]) < self.disagree)
            .then(|| pick(self.seed, &[image_id, &agent.uuid, a, "rater"], self.raters))
    }

    fn label(&self, rater: usize, image_id: &str, agent: &CanonicalAgent, attr: AttributeId) -> String {
        let truth = Self::truth(agent, attr);
        let a = attr.as_str();
        if self.deviating_rater(image_id, agent, attr) == Some(rater) {
            let others: Vec<String> = attr.alphabet(false).into_iter().filter(|l| *l != truth).collect();
            return others[pick(self.seed, &[image_id, &agent.uuid, a, "label"], others.len())].clone();
        }
        truth
    }

    /// The attribute block and error flag rater `rater` submits.
    pub fn answer(&self, rater: usize, image_id: &str, agent: &CanonicalAgent, kind: AgentKind) -> (AnnotatedAttributes, bool) {
        if self.is_error(image_id, agent) {
            return (AnnotatedAttributes::manual(AttributeValues::all_unknown(kind)), true);
        }
        let soft_rater = (unit(self.seed, &[image_id, &agent.uuid, "soft"]) < self.soft_rate)
            .then(|| pick(self.seed, &[image_id, &agent.uuid, "soft_rater"], self.raters));
        let get = |attr: AttributeId| {
            if soft_rater == Some(rater) {
                UNKNOWN.to_string()
            } else {
                self.label(rater, image_id, agent, attr)
            }
        };
        fn parse<L: Label>(s: &str) -> L {
            L::parse(s).unwrap_or(L::UNKNOWN)
        }
        let values = match kind {
            AgentKind::Person => {
                let mut p = PersonAttributes::all_unknown();
                p.age = parse::<Age>(&get(AttributeId::Age));
                p.sex = parse::<Sex>(&get(AttributeId::Sex));
                p.skin = parse::<Skin>(&get(AttributeId::Skin));
                p.means_of_transport = parse::<MeansOfTransport>(&get(AttributeId::MeansOfTransport));
                AttributeValues::Person(p)
            }
            AgentKind::Vehicle => {
                let mut v = VehicleAttributes::all_unknown();
                v.vehicle_type = parse::<VehicleType>(&get(AttributeId::VehicleType));
                v.colour = parse::<Colour>(&get(AttributeId::Colour));
                if v.vehicle_type == VehicleType::Car {
                    v.car_type = parse::<CarType>(&get(AttributeId::CarType));
                }
                AttributeValues::Vehicle(v)
            }
        };
        (AnnotatedAttributes::manual(values), false)
    }
}

fn run_annotator(svc: &Service, oracle: &Oracle, rater: usize, annotator: &str, dataset: &str) -> Result<(), ServiceError> {
    let session = svc.start_session(annotator, dataset)?.session;
    loop {
        let task = svc.get_task(&session)?;
        let Some(image) = task.image else {
            return Ok(());
        };
        let id = image.image_meta.image_id.clone();
        let source = svc.source_image(dataset, &id)?;
        for a in &image.agents {
            let agent = source
                .agent_by_uuid(&a.uuid)
                .ok_or_else(|| ServiceError::UnknownAgent {
                    image_id: id.clone(),
                    uuid: a.uuid.clone(),
                })?;
            let kind = a.agent_kind.unwrap_or(AgentKind::Person);
            let (attributes, error_in_labelling) = oracle.answer(rater, &id, agent, kind);
            svc.submit_annotation(
                &session,
                Submission {
                    image_id: id.clone(),
                    uuid: a.uuid.clone(),
                    attributes,
                    error_in_labelling,
                },
            )?;
        }
    }
}

/// Generates a fixture, plans it, runs the annotators through the service
/// and writes exports under `work_dir`.
pub fn run_simulation(cfg: &SimulationConfig, work_dir: &Path) -> Result<SimulationReport, ServiceError> {
    let filter = FilterConfig::default();
    let extra = cfg.exclusive_agents.unwrap_or((cfg.items / 4).max(1));
    let min_area = filter.threshold(cfg.kind) * 1.5;
    let spec = FixtureSpec {
        dataset_id: cfg.dataset_id.clone(),
        seed: cfg.seed,
        kind: cfg.kind,
        agents: Some(cfg.items + extra),
        size: SizeDistribution {
            min_area,
            max_area: min_area.max(60000.0),
        },
        sequence_length: cfg.sequence_length,
        ..FixtureSpec::default()
    };
    let (images, _) = generate_fixture_dataset(&spec);
    let index = filter_by_area(&cfg.dataset_id, &images, &filter);
    let goal = index.total_agents();
    let request = PlanRequest::numbered(goal, cfg.annotators, Fraction::new(cfg.items.min(goal.saturating_sub(1)).max(1), goal.max(2)), cfg.seed);
    let plan = build_plan(&index, filter, &request)?;

    let data_root = work_dir.join("data");
    let dir = install_dataset(&data_root, &plan, &images)?;
    // Start from an empty journal so reruns are idempotent.
    let journal = dir.join(crate::JOURNAL_FILE);
    if journal.exists() {
        std::fs::remove_file(&journal).map_err(|e| ServiceError::Io {
            path: journal.clone(),
            source: e,
        })?;
    }
    let svc = Service::open(ServiceConfig {
        data_root: data_root.clone(),
        sync_journal: cfg.sync_journal,
        ..ServiceConfig::default()
    })?;
    let oracle = Oracle::new(cfg);
    let annotators = plan.annotators.clone();
    if cfg.concurrent {
        std::thread::scope(|s| {
            let handles: Vec<_> = annotators
                .iter()
                .enumerate()
                .map(|(r, a)| {
                    let (svc, oracle, ds) = (&svc, &oracle, cfg.dataset_id.as_str());
                    s.spawn(move || run_annotator(svc, oracle, r, a, ds))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("annotator thread panicked"))
                .collect::<Result<Vec<_>, _>>()
        })?;
    } else {
        for (r, a) in annotators.iter().enumerate() {
            run_annotator(&svc, &oracle, r, a, &cfg.dataset_id)?;
        }
    }

    let bundle = svc.export(&cfg.dataset_id)?;
    let export_dir = work_dir.join("export");
    let manifest = write_bundle(&bundle, &export_dir)?;
    let replay = replay_export_dir(&dir, ServiceConfig::default().group_params)?;
    let replay_identical = replay.files()? == bundle.files()? && replay.manifest == bundle.manifest;

    let done = svc.plan_snapshot(&cfg.dataset_id)?;
    let mut owners: BTreeMap<String, usize> = BTreeMap::new();
    for imgs in bundle.exports.values() {
        for img in imgs.iter().filter(|i| !done.is_inter(i.image_id())) {
            *owners.entry(img.image_id().to_string()).or_default() += 1;
        }
    }
    let exclusive_images = done
        .progress
        .annotators
        .iter()
        .map(|(a, s)| (a.clone(), s.exclusive_completed.len()))
        .collect();
    let inter: BTreeSet<&str> = done.inter_pool.iter().map(|e| e.image_id.as_str()).collect();
    let mut injected: BTreeMap<String, Injection> = BTreeMap::new();
    for img in images.iter().filter(|i| inter.contains(i.image_id())) {
        for agent in done.filter.eligible_agents(img) {
            for attr in AttributeId::for_kind(cfg.kind).iter().filter(|a| **a != AttributeId::Group) {
                let e = injected.entry(attr.as_str().to_string()).or_insert(Injection { items: 0, deviated: 0 });
                e.items += 1;
                if oracle.deviating_rater(img.image_id(), agent, *attr).is_some() {
                    e.deviated += 1;
                }
            }
        }
    }
    Ok(SimulationReport {
        dataset_id: cfg.dataset_id.clone(),
        data_dir: dir,
        export_dir: export_dir.join(store::sanitize_file_stem(&cfg.dataset_id)),
        annotators,
        goal,
        quota: plan.quota,
        inter_images: plan.inter_pool.len(),
        inter_items: plan.inter_pool_agents(),
        exclusive_images,
        exclusive_overlap: owners.values().filter(|&&n| n > 1).count(),
        injected,
        journal_records: bundle.manifest.last_seq,
        replay_identical,
        manifest,
    })
}
