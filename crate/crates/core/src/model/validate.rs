//! Machine-checkable annotation guidelines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::attributes::{AgentKind, AttributeField, AttributeValues, CarType, VehicleType};
use super::canonical::{CanonicalAgent, CanonicalImage};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    MissingAttributes,
    KindMismatch { expected: AgentKind, found: AgentKind },
    /// `car_type` carries a value while `vehicle_type` is not `car`.
    CarTypeRequiresCar,
    /// Confidence qualifier on a field whose value is not `unknown`.
    ConfidenceOnKnownValue { field: AttributeField },
    /// Confidence qualifier on a field the attribute block does not have.
    ConfidenceOnForeignField { field: AttributeField },
    /// Agent flagged as mislabelled but a field is not `unknown`.
    ErrorFlagRequiresUnknown { field: AttributeField },
    ErrorFlagWithGroup,
    EmptyGroupId,
    NonPositiveArea,
    BoxOutsideImage,
    DuplicateAgentImageId { agent_image_id: u32 },
    DuplicateUuid { uuid: String },
    DuplicateGroupId { group_id: String },
    GroupTooSmall { group_id: String },
    UnknownGroupMember { group_id: String, agent_image_id: u32 },
    GroupMemberNotPerson { group_id: String, agent_image_id: u32 },
    AgentInTwoGroups { agent_image_id: u32 },
    UndeclaredGroup { group_id: String },
    GroupBackReferenceMismatch { agent_image_id: u32 },
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::MissingAttributes => write!(f, "attribute block missing"),
            Rule::KindMismatch { expected, found } => {
                write!(f, "expected {expected} attributes, found {found}")
            }
            Rule::CarTypeRequiresCar => write!(f, "car_type requires car"),
            Rule::ConfidenceOnKnownValue { field } => {
                write!(f, "unknown_confidence on {field} which is not unknown")
            }
            Rule::ConfidenceOnForeignField { field } => {
                write!(f, "unknown_confidence names {field} which this kind does not have")
            }
            Rule::ErrorFlagRequiresUnknown { field } => {
                write!(f, "error_in_labelling requires {field} = unknown")
            }
            Rule::ErrorFlagWithGroup => write!(f, "error_in_labelling agent cannot be grouped"),
            Rule::EmptyGroupId => write!(f, "group_id must not be empty"),
            Rule::NonPositiveArea => write!(f, "bounding box must have positive area"),
            Rule::BoxOutsideImage => write!(f, "bounding box exceeds image resolution"),
            Rule::DuplicateAgentImageId { agent_image_id } => {
                write!(f, "agent_image_id {agent_image_id} used twice")
            }
            Rule::DuplicateUuid { uuid } => write!(f, "uuid {uuid} used twice"),
            Rule::DuplicateGroupId { group_id } => write!(f, "group {group_id} declared twice"),
            Rule::GroupTooSmall { group_id } => {
                write!(f, "group {group_id} needs at least 2 members")
            }
            Rule::UnknownGroupMember {
                group_id,
                agent_image_id,
            } => write!(f, "group {group_id} lists missing agent {agent_image_id}"),
            Rule::GroupMemberNotPerson {
                group_id,
                agent_image_id,
            } => write!(f, "group {group_id} lists non-person agent {agent_image_id}"),
            Rule::AgentInTwoGroups { agent_image_id } => {
                write!(f, "agent {agent_image_id} belongs to more than one group")
            }
            Rule::UndeclaredGroup { group_id } => {
                write!(f, "group_id {group_id} not declared on the image")
            }
            Rule::GroupBackReferenceMismatch { agent_image_id } => write!(
                f,
                "agent {agent_image_id} group_id disagrees with the image group table"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Dotted path of the offending field, relative to the checked value.
    pub path: String,
    #[serde(flatten)]
    pub rule: Rule,
}

impl Violation {
    fn new(path: impl Into<String>, rule: Rule) -> Self {
        Self {
            path: path.into(),
            rule,
        }
    }

    fn prefixed(mut self, prefix: &str) -> Self {
        self.path = if self.path.is_empty() {
            prefix.to_string()
        } else {
            format!("{prefix}.{}", self.path)
        };
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.rule)
    }
}

const ATTR: &str = "annotated_attributes";

/// Checks one agent's attribute block against the guideline rules.
///
/// Returns every violated rule; an empty list means the agent is valid.
pub fn validate_attribute_set(agent: &CanonicalAgent, kind: AgentKind) -> Vec<Violation> {
    let Some(attrs) = agent.annotated_attributes.as_ref() else {
        return vec![Violation::new(ATTR, Rule::MissingAttributes)];
    };
    let mut out = Vec::new();
    if attrs.kind() != kind {
        out.push(Violation::new(
            ATTR,
            Rule::KindMismatch {
                expected: kind,
                found: attrs.kind(),
            },
        ));
        return out;
    }
    check_values(&attrs.values, agent.error_in_labelling, &mut out);
    out
}

fn check_values(values: &AttributeValues, error_flag: bool, out: &mut Vec<Violation>) {
    let fields: BTreeMap<AttributeField, bool> = values.fields().into_iter().collect();

    if let AttributeValues::Vehicle(v) = values {
        if v.vehicle_type != VehicleType::Car && v.car_type != CarType::Unknown {
            out.push(Violation::new(format!("{ATTR}.car_type"), Rule::CarTypeRequiresCar));
        }
    }
    if let AttributeValues::Person(p) = values {
        if let Some(g) = p.group_id.as_deref() {
            if g.is_empty() {
                out.push(Violation::new(format!("{ATTR}.group_id"), Rule::EmptyGroupId));
            }
            if error_flag {
                out.push(Violation::new(format!("{ATTR}.group_id"), Rule::ErrorFlagWithGroup));
            }
        }
    }
    for field in values.unknown_confidence().keys() {
        let path = format!("{ATTR}.unknown_confidence.{field}");
        match fields.get(field) {
            None => out.push(Violation::new(path, Rule::ConfidenceOnForeignField { field: *field })),
            Some(false) => out.push(Violation::new(path, Rule::ConfidenceOnKnownValue { field: *field })),
            Some(true) => {}
        }
    }
    if error_flag {
        for (field, unknown) in &fields {
            if !unknown {
                out.push(Violation::new(
                    format!("{ATTR}.{field}"),
                    Rule::ErrorFlagRequiresUnknown { field: *field },
                ));
            }
        }
    }
}

/// Collects every invariant violation of a canonical image, with paths
/// relative to the document root.
pub fn image_violations(image: &CanonicalImage) -> Vec<Violation> {
    let mut out = Vec::new();
    let res = image.image_meta.resolution;
    let mut ids = BTreeSet::new();
    let mut uuids = BTreeSet::new();

    fn walk(
        agent: &CanonicalAgent,
        path: String,
        res: super::canonical::Resolution,
        ids: &mut BTreeSet<u32>,
        uuids: &mut BTreeSet<String>,
        out: &mut Vec<Violation>,
    ) {
        if !agent.bbox.is_proper() {
            out.push(Violation::new(format!("{path}.bbox"), Rule::NonPositiveArea));
        } else if !agent.bbox.fits(res) {
            out.push(Violation::new(format!("{path}.bbox"), Rule::BoxOutsideImage));
        }
        if !ids.insert(agent.agent_image_id) {
            out.push(Violation::new(
                format!("{path}.agent_image_id"),
                Rule::DuplicateAgentImageId {
                    agent_image_id: agent.agent_image_id,
                },
            ));
        }
        if !uuids.insert(agent.uuid.clone()) {
            out.push(Violation::new(
                format!("{path}.uuid"),
                Rule::DuplicateUuid {
                    uuid: agent.uuid.clone(),
                },
            ));
        }
        if let Some(attrs) = agent.annotated_attributes.as_ref() {
            if let Some(kind) = agent.agent_kind {
                if kind != attrs.kind() {
                    out.push(Violation::new(
                        format!("{path}.{ATTR}"),
                        Rule::KindMismatch {
                            expected: kind,
                            found: attrs.kind(),
                        },
                    ));
                }
            }
            let mut local = Vec::new();
            check_values(&attrs.values, agent.error_in_labelling, &mut local);
            out.extend(local.into_iter().map(|v| v.prefixed(&path)));
        }
        for (i, sub) in agent.sub_entities.iter().enumerate() {
            walk(sub, format!("{path}.sub_entities[{i}]"), res, ids, uuids, out);
        }
    }

    for (i, agent) in image.agents.iter().enumerate() {
        walk(agent, format!("agents[{i}]"), res, &mut ids, &mut uuids, &mut out);
    }

    // Group table: partition of a subset of the top-level person agents.
    let by_id: BTreeMap<u32, &CanonicalAgent> =
        image.agents.iter().map(|a| (a.agent_image_id, a)).collect();
    let mut declared = BTreeSet::new();
    let mut owner: BTreeMap<u32, &str> = BTreeMap::new();
    for (gi, group) in image.groups.iter().enumerate() {
        let gpath = format!("groups[{gi}]");
        if group.group_id.is_empty() {
            out.push(Violation::new(format!("{gpath}.group_id"), Rule::EmptyGroupId));
        }
        if !declared.insert(group.group_id.as_str()) {
            out.push(Violation::new(
                format!("{gpath}.group_id"),
                Rule::DuplicateGroupId {
                    group_id: group.group_id.clone(),
                },
            ));
        }
        let distinct: BTreeSet<u32> = group.members.iter().copied().collect();
        if distinct.len() < 2 {
            out.push(Violation::new(
                format!("{gpath}.members"),
                Rule::GroupTooSmall {
                    group_id: group.group_id.clone(),
                },
            ));
        }
        for (mi, member) in group.members.iter().enumerate() {
            let mpath = format!("{gpath}.members[{mi}]");
            match by_id.get(member) {
                None => out.push(Violation::new(
                    mpath.clone(),
                    Rule::UnknownGroupMember {
                        group_id: group.group_id.clone(),
                        agent_image_id: *member,
                    },
                )),
                Some(agent) if agent.kind() != Some(AgentKind::Person) => out.push(Violation::new(
                    mpath.clone(),
                    Rule::GroupMemberNotPerson {
                        group_id: group.group_id.clone(),
                        agent_image_id: *member,
                    },
                )),
                Some(_) => {}
            }
            if owner.insert(*member, group.group_id.as_str()).is_some() {
                out.push(Violation::new(
                    mpath,
                    Rule::AgentInTwoGroups {
                        agent_image_id: *member,
                    },
                ));
            }
        }
    }
    for (i, agent) in image.agents.iter().enumerate() {
        let Some(person) = agent
            .annotated_attributes
            .as_ref()
            .and_then(|a| a.values.as_person())
        else {
            continue;
        };
        let path = format!("agents[{i}].{ATTR}.group_id");
        match person.group_id.as_deref() {
            Some(g) if !g.is_empty() && !declared.contains(g) => out.push(Violation::new(
                path,
                Rule::UndeclaredGroup {
                    group_id: g.to_string(),
                },
            )),
            Some(g) if !g.is_empty() && owner.get(&agent.agent_image_id) != Some(&g) => {
                out.push(Violation::new(
                    path,
                    Rule::GroupBackReferenceMismatch {
                        agent_image_id: agent.agent_image_id,
                    },
                ))
            }
            None if owner.contains_key(&agent.agent_image_id) => out.push(Violation::new(
                path,
                Rule::GroupBackReferenceMismatch {
                    agent_image_id: agent.agent_image_id,
                },
            )),
            _ => {}
        }
    }
    out
}

/// Fails with the first violation, if any.
pub fn validate_image(image: &CanonicalImage) -> Result<(), ModelError> {
    match image_violations(image).into_iter().next() {
        None => Ok(()),
        Some(v) => Err(ModelError::Invariant {
            message: v.rule.to_string(),
            path: v.path,
        }),
    }
}
