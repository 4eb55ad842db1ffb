//! Session handling and the write path: validate, journal, apply.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use attrlabel_core::allocation::{AllocationPlan, NextImage};
use attrlabel_core::model::{
    image_violations, validate_attribute_set, AgentKind, AnnotatedAttributes, AttributeId, AttributeValues,
    BoundingBox, CanonicalImage, Group, ImageMeta, Provenance, UnknownConfidence,
};
use attrlabel_core::store;

use crate::groups::GroupParams;
use crate::journal::{Event, Journal, Record};
use crate::state::DatasetState;
use crate::ServiceError;

pub const IMAGES_FILE: &str = "images.jsonl";
pub const PLAN_FILE: &str = "plan.json";
pub const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// Directory holding one sub-directory per dataset.
    pub data_root: PathBuf,
    pub group_params: GroupParams,
    /// fsync after every journal append.
    pub sync_journal: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            group_params: GroupParams::default(),
            sync_journal: true,
        }
    }
}

/// Writes a dataset directory the service can open: source images and the
/// pristine plan. An existing journal is left alone.
pub fn install_dataset(root: &Path, plan: &AllocationPlan, images: &[CanonicalImage]) -> Result<PathBuf, ServiceError> {
    let dir = root.join(store::sanitize_file_stem(&plan.dataset_id));
    store::write_jsonl(&dir.join(IMAGES_FILE), images)?;
    store::write_json(&dir.join(PLAN_FILE), &plan.pristine())?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub dataset_id: String,
    pub annotator_id: String,
    pub inter_agents: u64,
    pub quota: u64,
    pub inter_images: usize,
    pub exclusive_agents: u64,
    pub exclusive_images: usize,
    pub covered_agents: u64,
    pub goal: u64,
    pub done: bool,
    pub current_image: Option<String>,
    /// Annotated / eligible agents on the current image.
    pub current_annotated: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session: String,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAgent {
    pub agent_image_id: u32,
    pub uuid: String,
    pub identity: String,
    pub agent_kind: Option<AgentKind>,
    pub bbox: BoundingBox,
    pub prefilled: Option<AnnotatedAttributes>,
    pub error_in_labelling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskImage {
    pub image_meta: ImageMeta,
    pub image_url: String,
    /// Eligible agents only.
    pub agents: Vec<TaskAgent>,
    pub groups: Vec<Group>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub dataset_id: String,
    pub done: bool,
    pub image: Option<TaskImage>,
    /// Attribute name → labels the client may send.
    pub alphabets: BTreeMap<String, Vec<String>>,
    pub unknown_confidence: Vec<UnknownConfidence>,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub image_id: String,
    pub uuid: String,
    pub attributes: AnnotatedAttributes,
    #[serde(default)]
    pub error_in_labelling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEdit {
    pub image_id: String,
    pub groups: Vec<Group>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub image_id: String,
    pub discard: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub image_complete: bool,
    pub propagated_frames: usize,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFile {
    pub file: String,
    pub images: usize,
    pub annotated_agents: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub dataset_id: String,
    pub last_seq: u64,
    pub files: BTreeMap<String, ExportFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub manifest: ExportManifest,
    pub exports: BTreeMap<String, Vec<CanonicalImage>>,
}

impl ExportBundle {
    /// File bytes per annotator, as written by [`Service::write_export`].
    pub fn files(&self) -> Result<BTreeMap<String, Vec<u8>>, ServiceError> {
        self.exports
            .iter()
            .map(|(a, imgs)| Ok((a.clone(), store::to_jsonl(imgs)?)))
            .collect()
    }
}

fn bundle(state: &DatasetState) -> Result<ExportBundle, ServiceError> {
    let exports = state.export()?;
    let mut files = BTreeMap::new();
    for (a, imgs) in &exports {
        let bytes = store::to_jsonl(imgs)?;
        files.insert(
            a.clone(),
            ExportFile {
                file: format!("{}.jsonl", store::sanitize_file_stem(a)),
                images: imgs.len(),
                annotated_agents: imgs
                    .iter()
                    .flat_map(|i| &i.agents)
                    .filter(|x| x.annotated_attributes.is_some())
                    .count(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        );
    }
    Ok(ExportBundle {
        manifest: ExportManifest {
            dataset_id: state.dataset_id.clone(),
            last_seq: state.last_seq,
            files,
        },
        exports,
    })
}

pub fn alphabets() -> BTreeMap<String, Vec<String>> {
    AttributeId::PERSON
        .iter()
        .chain(AttributeId::VEHICLE.iter())
        .filter(|a| **a != AttributeId::Group)
        .map(|a| (a.as_str().to_string(), a.alphabet(false)))
        .collect()
}

struct Live {
    state: DatasetState,
    journal: Journal,
}

impl Live {
    fn record(&mut self, event: Event) -> Result<Record, ServiceError> {
        let rec = self.journal.append(event)?;
        self.state.apply(&rec)?;
        Ok(rec)
    }
}

#[derive(Debug, Clone)]
struct Session {
    annotator: String,
    dataset: String,
}

/// The annotation backend. Each dataset has one writer lock; journal
/// appends and state updates happen under it, in that order.
pub struct Service {
    config: ServiceConfig,
    datasets: BTreeMap<String, Mutex<Live>>,
    dirs: BTreeMap<String, PathBuf>,
    sessions: RwLock<HashMap<String, Session>>,
}

fn load_dataset(dir: &Path, config: &ServiceConfig) -> Result<(DatasetState, Journal), ServiceError> {
    let plan: AllocationPlan = store::read_json(&dir.join(PLAN_FILE))?;
    let images = store::read_images(&dir.join(IMAGES_FILE))?;
    let (journal, records) = Journal::open(&dir.join(JOURNAL_FILE), &plan.dataset_id, config.sync_journal)?;
    let state = DatasetState::replay(&plan.dataset_id.clone(), images, plan, config.group_params, &records)?;
    Ok((state, journal))
}

impl Service {
    /// Opens every dataset directory under the data root, replaying its journal.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        let mut datasets = BTreeMap::new();
        let mut dirs = BTreeMap::new();
        let entries = std::fs::read_dir(&config.data_root).map_err(|e| ServiceError::Io {
            path: config.data_root.clone(),
            source: e,
        })?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for dir in paths.into_iter().filter(|p| p.join(PLAN_FILE).is_file()) {
            let (state, journal) = load_dataset(&dir, &config)?;
            dirs.insert(state.dataset_id.clone(), dir);
            datasets.insert(state.dataset_id.clone(), Mutex::new(Live { state, journal }));
        }
        Ok(Self {
            config,
            datasets,
            dirs,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    pub fn dataset_ids(&self) -> Vec<String> {
        self.datasets.keys().cloned().collect()
    }

    fn live(&self, dataset: &str) -> Result<&Mutex<Live>, ServiceError> {
        self.datasets
            .get(dataset)
            .ok_or_else(|| ServiceError::UnknownDataset(dataset.to_string()))
    }

    fn session(&self, token: &str) -> Result<Session, ServiceError> {
        self.sessions
            .read()
            .get(token)
            .cloned()
            .ok_or(ServiceError::StaleSession)
    }

    fn progress_of(state: &DatasetState, annotator: &str) -> Result<Progress, ServiceError> {
        let plan = &state.plan;
        let a = plan.annotator(annotator)?;
        let current = a.current.as_ref().map(|c| c.image_id.clone());
        let current_annotated = match &current {
            Some(id) => Some(state.annotated_count(annotator, id)?),
            None => None,
        };
        Ok(Progress {
            dataset_id: state.dataset_id.clone(),
            annotator_id: annotator.to_string(),
            inter_agents: a.inter_agents,
            quota: plan.quota,
            inter_images: a.inter_completed.len(),
            exclusive_agents: a.exclusive_agents,
            exclusive_images: a.exclusive_completed.len(),
            covered_agents: plan.covered_agents(),
            goal: plan.goal,
            done: plan.is_done_for(annotator)?,
            current_image: current,
            current_annotated,
        })
    }

    pub fn start_session(&self, annotator: &str, dataset: &str) -> Result<SessionInfo, ServiceError> {
        let live = self.live(dataset)?.lock();
        let progress = Self::progress_of(&live.state, annotator)?;
        drop(live);
        let token = uuid::Uuid::new_v4().to_string();
        self.sessions.write().insert(
            token.clone(),
            Session {
                annotator: annotator.to_string(),
                dataset: dataset.to_string(),
            },
        );
        Ok(SessionInfo { session: token, progress })
    }

    pub fn progress(&self, token: &str) -> Result<Progress, ServiceError> {
        let s = self.session(token)?;
        let live = self.live(&s.dataset)?.lock();
        Self::progress_of(&live.state, &s.annotator)
    }

    /// The annotator's current image, handing out a new one when needed.
    pub fn get_task(&self, token: &str) -> Result<Task, ServiceError> {
        let s = self.session(token)?;
        let mut live = self.live(&s.dataset)?.lock();
        let image_id = loop {
            match live.state.plan.peek_next(&s.annotator)? {
                NextImage::Done => break None,
                NextImage::Image(a) => {
                    let is_current = live.state.plan.annotator(&s.annotator)?.current.is_some();
                    if !is_current {
                        live.record(Event::Assigned {
                            annotator: s.annotator.clone(),
                            image_id: a.image_id.clone(),
                            pool: a.pool,
                        })?;
                    }
                    // Nothing to annotate: finish it and move on.
                    if live.state.eligible(&a.image_id)?.is_empty() {
                        live.record(Event::Completed {
                            annotator: s.annotator.clone(),
                            image_id: a.image_id.clone(),
                        })?;
                        continue;
                    }
                    break Some(a.image_id);
                }
            }
        };
        let state = &live.state;
        let image = match image_id {
            None => None,
            Some(id) => {
                let img = state.image(&id)?;
                let agents = state
                    .eligible(&id)?
                    .into_iter()
                    .map(|a| {
                        let pre = state.prefill(&s.annotator, &id, &a.uuid);
                        TaskAgent {
                            agent_image_id: a.agent_image_id,
                            uuid: a.uuid.clone(),
                            identity: a.identity.clone(),
                            agent_kind: a.kind(),
                            bbox: a.bbox,
                            prefilled: pre.map(|p| p.attributes.clone()),
                            error_in_labelling: pre.is_some_and(|p| p.error_in_labelling),
                        }
                    })
                    .collect();
                Some(TaskImage {
                    image_meta: img.image_meta.clone(),
                    image_url: format!("/images/{id}?dataset={}", s.dataset),
                    agents,
                    groups: state.groups_for(&s.annotator, &id)?,
                })
            }
        };
        Ok(Task {
            dataset_id: s.dataset.clone(),
            done: image.is_none(),
            image,
            alphabets: alphabets(),
            unknown_confidence: vec![UnknownConfidence::Clear, UnknownConfidence::NotClear],
            progress: Self::progress_of(state, &s.annotator)?,
        })
    }

    fn check_assigned(state: &DatasetState, annotator: &str, image_id: &str) -> Result<bool, ServiceError> {
        let a = state.plan.annotator(annotator)?;
        let current = a.current.as_ref().is_some_and(|c| c.image_id == image_id);
        if current || a.inter_completed.contains(image_id) || a.exclusive_completed.contains(image_id) {
            Ok(current)
        } else {
            Err(ServiceError::NotAssigned(image_id.to_string()))
        }
    }

    fn maybe_complete(live: &mut Live, annotator: &str, image_id: &str, current: bool) -> Result<bool, ServiceError> {
        if !current {
            return Ok(false);
        }
        let (done, total) = live.state.annotated_count(annotator, image_id)?;
        if done < total {
            return Ok(false);
        }
        live.record(Event::Completed {
            annotator: annotator.to_string(),
            image_id: image_id.to_string(),
        })?;
        Ok(true)
    }

    pub fn submit_annotation(&self, token: &str, sub: Submission) -> Result<Ack, ServiceError> {
        let s = self.session(token)?;
        let mut live = self.live(&s.dataset)?.lock();
        let current = Self::check_assigned(&live.state, &s.annotator, &sub.image_id)?;
        let source = live
            .state
            .eligible(&sub.image_id)?
            .into_iter()
            .find(|a| a.uuid == sub.uuid)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownAgent {
                image_id: sub.image_id.clone(),
                uuid: sub.uuid.clone(),
            })?;
        let mut attributes = sub.attributes.clone();
        attributes.provenance = Provenance::Manual;
        if let AttributeValues::Person(p) = &mut attributes.values {
            p.group_id = None;
        }
        let kind = source.kind().unwrap_or(attributes.values.kind());
        let mut candidate = source.clone();
        candidate.annotated_attributes = Some(attributes.clone());
        candidate.error_in_labelling = sub.error_in_labelling;
        let violations = validate_attribute_set(&candidate, kind);
        if !violations.is_empty() {
            return Err(ServiceError::Validation(violations));
        }
        let rec = live.record(Event::Annotated {
            annotator: s.annotator.clone(),
            image_id: sub.image_id.clone(),
            uuid: sub.uuid.clone(),
            attributes: attributes.clone(),
            error_in_labelling: sub.error_in_labelling,
        })?;
        let mut seq = rec.seq;
        let key_frame = live
            .state
            .image(&sub.image_id)?
            .image_meta
            .sequence
            .as_ref()
            .is_some_and(|q| q.key_frame);
        let mut propagated_frames = 0;
        if key_frame {
            let targets = live.state.propagation_targets(&sub.image_id, &sub.uuid);
            if !targets.is_empty() {
                propagated_frames = targets.len();
                seq = live
                    .record(Event::Propagated {
                        annotator: s.annotator.clone(),
                        source_image: sub.image_id.clone(),
                        uuid: sub.uuid.clone(),
                        targets,
                        attributes,
                        error_in_labelling: sub.error_in_labelling,
                    })?
                    .seq;
            }
        }
        let image_complete = Self::maybe_complete(&mut live, &s.annotator, &sub.image_id, current)?;
        Ok(Ack {
            seq: live.state.last_seq.max(seq),
            image_complete,
            propagated_frames,
            progress: Self::progress_of(&live.state, &s.annotator)?,
        })
    }

    /// Number of frames a key-frame annotation was copied to; 0 when the
    /// agent has no value on the image or appears nowhere else.
    pub fn propagate_sequence(&self, token: &str, image_id: &str, uuid: &str) -> Result<usize, ServiceError> {
        let s = self.session(token)?;
        let mut live = self.live(&s.dataset)?.lock();
        let Some(stored) = live.state.annotation(&s.annotator, image_id, uuid).cloned() else {
            return Ok(0);
        };
        let targets = live.state.propagation_targets(image_id, uuid);
        if targets.is_empty() {
            return Ok(0);
        }
        let n = targets.len();
        let mut attributes = stored.attributes;
        attributes.provenance = Provenance::Manual;
        live.record(Event::Propagated {
            annotator: s.annotator.clone(),
            source_image: image_id.to_string(),
            uuid: uuid.to_string(),
            targets,
            attributes,
            error_in_labelling: stored.error_in_labelling,
        })?;
        Ok(n)
    }

    pub fn edit_groups(&self, token: &str, edit: GroupEdit) -> Result<Ack, ServiceError> {
        let s = self.session(token)?;
        let mut live = self.live(&s.dataset)?.lock();
        Self::check_assigned(&live.state, &s.annotator, &edit.image_id)?;
        let eligible: Vec<u32> = live
            .state
            .eligible(&edit.image_id)?
            .iter()
            .map(|a| a.agent_image_id)
            .collect();
        let mut probe = live.state.image(&edit.image_id)?.clone();
        for a in &mut probe.agents {
            a.annotated_attributes = None;
            a.error_in_labelling = false;
        }
        probe.groups = edit.groups.clone();
        let mut violations: Vec<_> = image_violations(&probe)
            .into_iter()
            .filter(|v| v.path.starts_with("groups"))
            .collect();
        for (gi, g) in edit.groups.iter().enumerate() {
            for (mi, m) in g.members.iter().enumerate() {
                if !eligible.contains(m) {
                    violations.push(attrlabel_core::model::Violation {
                        path: format!("groups[{gi}].members[{mi}]"),
                        rule: attrlabel_core::model::Rule::UnknownGroupMember {
                            group_id: g.group_id.clone(),
                            agent_image_id: *m,
                        },
                    });
                }
            }
        }
        if !violations.is_empty() {
            return Err(ServiceError::Validation(violations));
        }
        let rec = live.record(Event::GroupsEdited {
            annotator: s.annotator.clone(),
            image_id: edit.image_id,
            groups: edit.groups,
        })?;
        Ok(Ack {
            seq: rec.seq,
            image_complete: false,
            propagated_frames: 0,
            progress: Self::progress_of(&live.state, &s.annotator)?,
        })
    }

    /// Marks an image as wrongly labelled at the source. Flagging the
    /// current image also finishes it.
    pub fn flag_image(&self, token: &str, flag: Flag) -> Result<Ack, ServiceError> {
        let s = self.session(token)?;
        let mut live = self.live(&s.dataset)?.lock();
        let current = Self::check_assigned(&live.state, &s.annotator, &flag.image_id)?;
        let rec = live.record(Event::Flagged {
            annotator: s.annotator.clone(),
            image_id: flag.image_id.clone(),
            discard: flag.discard,
        })?;
        let mut seq = rec.seq;
        let image_complete = if current && flag.discard {
            seq = live
                .record(Event::Completed {
                    annotator: s.annotator.clone(),
                    image_id: flag.image_id,
                })?
                .seq;
            true
        } else {
            false
        };
        Ok(Ack {
            seq,
            image_complete,
            propagated_frames: 0,
            progress: Self::progress_of(&live.state, &s.annotator)?,
        })
    }

    /// Path of the image file behind `image_id`.
    pub fn image_path(&self, dataset: &str, image_id: &str) -> Result<PathBuf, ServiceError> {
        let live = self.live(dataset)?.lock();
        let img = live.state.image(image_id)?;
        let p = PathBuf::from(&img.image_meta.file_path);
        Ok(if p.is_absolute() { p } else { self.dirs[dataset].join(p) })
    }

    pub fn export(&self, dataset: &str) -> Result<ExportBundle, ServiceError> {
        let live = self.live(dataset)?.lock();
        bundle(&live.state)
    }

    /// Export rebuilt from the files on disk alone: source, plan and journal.
    pub fn replay_export(&self, dataset: &str) -> Result<ExportBundle, ServiceError> {
        let dir = self
            .dirs
            .get(dataset)
            .ok_or_else(|| ServiceError::UnknownDataset(dataset.to_string()))?;
        replay_export_dir(dir, self.config.group_params)
    }

    /// Writes `<out>/<dataset>/<annotator>.jsonl` plus `manifest.json`.
    pub fn write_export(&self, dataset: &str, out: &Path) -> Result<ExportManifest, ServiceError> {
        let b = self.export(dataset)?;
        write_bundle(&b, out)
    }

    /// The source record of an image, without any annotation.
    pub fn source_image(&self, dataset: &str, image_id: &str) -> Result<CanonicalImage, ServiceError> {
        Ok(self.live(dataset)?.lock().state.image(image_id)?.clone())
    }

    pub fn plan_snapshot(&self, dataset: &str) -> Result<AllocationPlan, ServiceError> {
        Ok(self.live(dataset)?.lock().state.plan.clone())
    }
}

/// Export of a dataset directory from its journal, without a running service.
pub fn replay_export_dir(dir: &Path, group_params: GroupParams) -> Result<ExportBundle, ServiceError> {
    let plan: AllocationPlan = store::read_json(&dir.join(PLAN_FILE))?;
    let images = store::read_images(&dir.join(IMAGES_FILE))?;
    let (records, _) = crate::journal::read_records(&dir.join(JOURNAL_FILE))?;
    let state = DatasetState::replay(&plan.dataset_id.clone(), images, plan, group_params, &records)?;
    bundle(&state)
}

pub fn write_bundle(b: &ExportBundle, out: &Path) -> Result<ExportManifest, ServiceError> {
    let dir = out.join(store::sanitize_file_stem(&b.manifest.dataset_id));
    for (a, bytes) in b.files()? {
        store::write_atomic(&dir.join(&b.manifest.files[&a].file), &bytes)?;
    }
    store::write_json(&dir.join("manifest.json"), &b.manifest)?;
    Ok(b.manifest.clone())
}
