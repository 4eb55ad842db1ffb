//! Dataset state as a fold over journal events.

use std::collections::{BTreeMap, BTreeSet};

use attrlabel_core::allocation::{AllocationPlan, PoolKind};
use attrlabel_core::model::{
    AgentKind, AnnotatedAttributes, AttributeValues, CanonicalAgent, CanonicalImage, Group, Provenance,
};

use crate::groups::{propose_groups, GroupParams};
use crate::journal::{Event, Record};
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredAnnotation {
    pub attributes: AnnotatedAttributes,
    pub error_in_labelling: bool,
    pub seq: u64,
}

/// Everything the service knows about one dataset.
#[derive(Debug, Clone)]
pub struct DatasetState {
    pub dataset_id: String,
    pub images: BTreeMap<String, CanonicalImage>,
    pub plan: AllocationPlan,
    pub group_params: GroupParams,
    /// (annotator, image, uuid) → latest value.
    pub annotations: BTreeMap<(String, String, String), StoredAnnotation>,
    /// (annotator, image) → group partition chosen by that annotator.
    pub groups: BTreeMap<(String, String), Vec<Group>>,
    pub flags: BTreeMap<(String, String), bool>,
    /// (image, uuid) → latest propagated value from any annotator.
    pub propagated: BTreeMap<(String, String), StoredAnnotation>,
    /// sequence id → image ids in frame order.
    pub sequences: BTreeMap<String, Vec<String>>,
    pub last_seq: u64,
}

impl DatasetState {
    pub fn new(dataset_id: &str, images: Vec<CanonicalImage>, plan: AllocationPlan, group_params: GroupParams) -> Self {
        let mut sequences: BTreeMap<String, Vec<(u32, String)>> = BTreeMap::new();
        for img in &images {
            if let Some(s) = &img.image_meta.sequence {
                sequences
                    .entry(s.sequence_id.clone())
                    .or_default()
                    .push((s.frame_index, img.image_id().to_string()));
            }
        }
        let sequences = sequences
            .into_iter()
            .map(|(k, mut v)| {
                v.sort();
                (k, v.into_iter().map(|(_, id)| id).collect())
            })
            .collect();
        Self {
            dataset_id: dataset_id.to_string(),
            images: images.into_iter().map(|i| (i.image_id().to_string(), i)).collect(),
            plan: plan.pristine(),
            group_params,
            annotations: BTreeMap::new(),
            groups: BTreeMap::new(),
            flags: BTreeMap::new(),
            propagated: BTreeMap::new(),
            sequences,
            last_seq: 0,
        }
    }

    /// Fresh state with every record applied in order.
    pub fn replay(
        dataset_id: &str,
        images: Vec<CanonicalImage>,
        plan: AllocationPlan,
        group_params: GroupParams,
        records: &[Record],
    ) -> Result<Self, ServiceError> {
        let mut s = Self::new(dataset_id, images, plan, group_params);
        for r in records {
            s.apply(r)?;
        }
        Ok(s)
    }

    pub fn image(&self, image_id: &str) -> Result<&CanonicalImage, ServiceError> {
        self.images
            .get(image_id)
            .ok_or_else(|| ServiceError::UnknownImage(image_id.to_string()))
    }

    /// Agents of `image_id` that pass the plan's size filter.
    pub fn eligible(&self, image_id: &str) -> Result<Vec<&CanonicalAgent>, ServiceError> {
        Ok(self.plan.filter.eligible_agents(self.image(image_id)?))
    }

    /// The annotator's group partition for an image: their last edit, or the
    /// automatic proposal over the eligible person agents.
    pub fn groups_for(&self, annotator: &str, image_id: &str) -> Result<Vec<Group>, ServiceError> {
        if let Some(g) = self.groups.get(&(annotator.to_string(), image_id.to_string())) {
            return Ok(g.clone());
        }
        let persons: Vec<&CanonicalAgent> = self
            .eligible(image_id)?
            .into_iter()
            .filter(|a| a.kind() == Some(AgentKind::Person))
            .collect();
        Ok(propose_groups(image_id, &persons, self.group_params).groups)
    }

    pub fn annotation(&self, annotator: &str, image_id: &str, uuid: &str) -> Option<&StoredAnnotation> {
        self.annotations
            .get(&(annotator.to_string(), image_id.to_string(), uuid.to_string()))
    }

    /// Value to show before the annotator touches an agent: their own last
    /// value, else a propagated one on exclusive images. Inter images never
    /// see other annotators' work.
    pub fn prefill(&self, annotator: &str, image_id: &str, uuid: &str) -> Option<&StoredAnnotation> {
        self.annotation(annotator, image_id, uuid).or_else(|| {
            if self.plan.is_inter(image_id) {
                None
            } else {
                self.propagated.get(&(image_id.to_string(), uuid.to_string()))
            }
        })
    }

    /// Number of eligible agents the annotator has a value for.
    pub fn annotated_count(&self, annotator: &str, image_id: &str) -> Result<(usize, usize), ServiceError> {
        let eligible = self.eligible(image_id)?;
        let done = eligible
            .iter()
            .filter(|a| self.annotation(annotator, image_id, &a.uuid).is_some())
            .count();
        Ok((done, eligible.len()))
    }

    /// Other frames of the image's sequence holding an agent with `uuid`.
    pub fn propagation_targets(&self, image_id: &str, uuid: &str) -> Vec<String> {
        let Some(seq) = self.images.get(image_id).and_then(|i| i.image_meta.sequence.as_ref()) else {
            return Vec::new();
        };
        self.sequences
            .get(&seq.sequence_id)
            .into_iter()
            .flatten()
            .filter(|id| id.as_str() != image_id)
            .filter(|id| self.images[id.as_str()].agent_by_uuid(uuid).is_some())
            .cloned()
            .collect()
    }

    /// Applies one record. Live operations validate before journaling, so a
    /// failure here means the journal does not belong to this plan.
    pub fn apply(&mut self, record: &Record) -> Result<(), ServiceError> {
        let seq = record.seq;
        match &record.event {
            Event::Assigned {
                annotator,
                image_id,
                pool,
            } => {
                let a = attrlabel_core::allocation::Assignment {
                    image_id: image_id.clone(),
                    pool: *pool,
                };
                self.plan.assign(annotator, &a)?;
            }
            Event::Annotated {
                annotator,
                image_id,
                uuid,
                attributes,
                error_in_labelling,
            } => {
                self.annotations.insert(
                    (annotator.clone(), image_id.clone(), uuid.clone()),
                    StoredAnnotation {
                        attributes: attributes.clone(),
                        error_in_labelling: *error_in_labelling,
                        seq,
                    },
                );
            }
            Event::GroupsEdited {
                annotator,
                image_id,
                groups,
            } => {
                self.groups.insert((annotator.clone(), image_id.clone()), groups.clone());
            }
            Event::Propagated {
                annotator,
                uuid,
                targets,
                attributes,
                error_in_labelling,
                ..
            } => {
                let mut copy = attributes.clone();
                copy.provenance = Provenance::Propagated;
                let stored = StoredAnnotation {
                    attributes: copy,
                    error_in_labelling: *error_in_labelling,
                    seq,
                };
                for t in targets {
                    self.annotations
                        .insert((annotator.clone(), t.clone(), uuid.clone()), stored.clone());
                    self.propagated.insert((t.clone(), uuid.clone()), stored.clone());
                }
            }
            Event::Flagged {
                annotator,
                image_id,
                discard,
            } => {
                self.flags.insert((annotator.clone(), image_id.clone()), *discard);
            }
            Event::Completed { annotator, image_id } => {
                self.plan.complete_image(annotator, image_id)?;
            }
        }
        self.last_seq = seq;
        Ok(())
    }

    /// The annotator's view of one image as a canonical record.
    pub fn materialize(&self, annotator: &str, image_id: &str) -> Result<CanonicalImage, ServiceError> {
        let mut img = self.image(image_id)?.clone();
        img.image_meta.annotator_id = Some(annotator.to_string());
        img.image_meta.discard_flag = self
            .flags
            .get(&(annotator.to_string(), image_id.to_string()))
            .copied()
            .unwrap_or(false);
        let mut flagged: BTreeSet<u32> = BTreeSet::new();
        for agent in &mut img.agents {
            if let Some(s) = self.annotation(annotator, image_id, &agent.uuid) {
                let mut attrs = s.attributes.clone();
                if let AttributeValues::Person(p) = &mut attrs.values {
                    p.group_id = None;
                }
                agent.annotated_attributes = Some(attrs);
                agent.error_in_labelling = s.error_in_labelling;
                if s.error_in_labelling {
                    flagged.insert(agent.agent_image_id);
                }
            }
        }
        let annotated_persons = img.agents.iter().any(|a| {
            a.annotated_attributes
                .as_ref()
                .is_some_and(|x| x.values.kind() == AgentKind::Person)
        });
        let groups: Vec<Group> = if annotated_persons {
            self.groups_for(annotator, image_id)?
                .into_iter()
                .map(|g| Group {
                    members: g.members.into_iter().filter(|m| !flagged.contains(m)).collect(),
                    ..g
                })
                .filter(|g| g.members.len() >= 2)
                .collect()
        } else {
            Vec::new()
        };
        for g in &groups {
            for m in &g.members {
                if let Some(a) = img.agents.iter_mut().find(|a| a.agent_image_id == *m) {
                    if let Some(AttributeValues::Person(p)) = a.annotated_attributes.as_mut().map(|x| &mut x.values) {
                        p.group_id = Some(g.group_id.clone());
                    }
                }
            }
        }
        img.groups = groups;
        Ok(img)
    }

    /// Images handed to the annotator: completed ones plus the current one.
    /// Values propagated onto frames they were never given stay out.
    pub fn touched_images(&self, annotator: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Ok(state) = self.plan.annotator(annotator) {
            out.extend(state.inter_completed.iter().cloned());
            out.extend(state.exclusive_completed.iter().cloned());
            out.extend(state.current.iter().map(|c| c.image_id.clone()));
        }
        out
    }

    /// Deterministic per-annotator export.
    pub fn export(&self) -> Result<BTreeMap<String, Vec<CanonicalImage>>, ServiceError> {
        let mut out = BTreeMap::new();
        for annotator in &self.plan.annotators {
            let images = self
                .touched_images(annotator)
                .iter()
                .map(|id| self.materialize(annotator, id))
                .collect::<Result<Vec<_>, _>>()?;
            out.insert(annotator.clone(), images);
        }
        Ok(out)
    }

    pub fn pool_of(&self, image_id: &str) -> Option<PoolKind> {
        self.plan.pool_entry(image_id).map(|(k, _)| k)
    }
}
