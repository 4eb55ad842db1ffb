//! Attributes as seen by the statistics: one string label per agent.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::attributes::{
    Age, AgentKind, AttributeField, AttributeValues, CarType, Colour, Label, MeansOfTransport, Sex,
    Skin, UnknownConfidence, VehicleType,
};
use super::canonical::CanonicalAgent;

pub const UNKNOWN: &str = "unknown";
pub const UNKNOWN_CLEAR: &str = "unknown_clear";
pub const UNKNOWN_NOT_CLEAR: &str = "unknown_not_clear";
pub const GROUP: &str = "group";
pub const NO_GROUP: &str = "no_group";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeId {
    Age,
    Group,
    MeansOfTransport,
    Sex,
    Skin,
    VehicleType,
    Colour,
    CarType,
}

impl AttributeId {
    pub const PERSON: [AttributeId; 5] = [
        AttributeId::Age,
        AttributeId::Group,
        AttributeId::MeansOfTransport,
        AttributeId::Sex,
        AttributeId::Skin,
    ];
    pub const VEHICLE: [AttributeId; 3] = [
        AttributeId::VehicleType,
        AttributeId::Colour,
        AttributeId::CarType,
    ];

    pub fn for_kind(kind: AgentKind) -> &'static [AttributeId] {
        match kind {
            AgentKind::Person => &Self::PERSON,
            AgentKind::Vehicle => &Self::VEHICLE,
        }
    }

    pub fn kind(self) -> AgentKind {
        match self {
            AttributeId::Age
            | AttributeId::Group
            | AttributeId::MeansOfTransport
            | AttributeId::Sex
            | AttributeId::Skin => AgentKind::Person,
            AttributeId::VehicleType | AttributeId::Colour | AttributeId::CarType => {
                AgentKind::Vehicle
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeId::Age => "age",
            AttributeId::Group => "group",
            AttributeId::MeansOfTransport => "means_of_transport",
            AttributeId::Sex => "sex",
            AttributeId::Skin => "skin",
            AttributeId::VehicleType => "vehicle_type",
            AttributeId::Colour => "colour",
            AttributeId::CarType => "car_type",
        }
    }

    fn field(self) -> Option<AttributeField> {
        match self {
            AttributeId::Age => Some(AttributeField::Age),
            AttributeId::Group => None,
            AttributeId::MeansOfTransport => Some(AttributeField::MeansOfTransport),
            AttributeId::Sex => Some(AttributeField::Sex),
            AttributeId::Skin => Some(AttributeField::Skin),
            AttributeId::VehicleType => Some(AttributeField::VehicleType),
            AttributeId::Colour => Some(AttributeField::Colour),
            AttributeId::CarType => Some(AttributeField::CarType),
        }
    }

    /// Label alphabet in display order. With `expand_unknown` the single
    /// `unknown` label is replaced by `unknown_clear` and `unknown_not_clear`.
    pub fn alphabet(self, expand_unknown: bool) -> Vec<String> {
        fn names<L: Label>() -> Vec<&'static str> {
            L::ALL.iter().map(|l| l.as_str()).collect()
        }
        let base = match self {
            AttributeId::Age => names::<Age>(),
            AttributeId::Group => vec![GROUP, NO_GROUP],
            AttributeId::MeansOfTransport => names::<MeansOfTransport>(),
            AttributeId::Sex => names::<Sex>(),
            AttributeId::Skin => names::<Skin>(),
            AttributeId::VehicleType => names::<VehicleType>(),
            AttributeId::Colour => names::<Colour>(),
            AttributeId::CarType => names::<CarType>(),
        };
        let mut out = Vec::with_capacity(base.len() + 1);
        for l in base {
            if expand_unknown && l == UNKNOWN {
                out.push(UNKNOWN_CLEAR.to_string());
                out.push(UNKNOWN_NOT_CLEAR.to_string());
            } else {
                out.push(l.to_string());
            }
        }
        out
    }

    /// The agent's label for this attribute, `None` when not annotated with
    /// the matching kind.
    ///
    /// When expanding, an unqualified `unknown` reads as `unknown_not_clear`.
    pub fn label_of(self, agent: &CanonicalAgent, expand_unknown: bool) -> Option<String> {
        let values = &agent.annotated_attributes.as_ref()?.values;
        if values.kind() != self.kind() {
            return None;
        }
        let raw: &'static str = match (self, values) {
            (AttributeId::Age, AttributeValues::Person(p)) => p.age.as_str(),
            (AttributeId::Group, AttributeValues::Person(p)) => {
                if p.group_id.is_some() {
                    GROUP
                } else {
                    NO_GROUP
                }
            }
            (AttributeId::MeansOfTransport, AttributeValues::Person(p)) => {
                p.means_of_transport.as_str()
            }
            (AttributeId::Sex, AttributeValues::Person(p)) => p.sex.as_str(),
            (AttributeId::Skin, AttributeValues::Person(p)) => p.skin.as_str(),
            (AttributeId::VehicleType, AttributeValues::Vehicle(v)) => v.vehicle_type.as_str(),
            (AttributeId::Colour, AttributeValues::Vehicle(v)) => v.colour.as_str(),
            (AttributeId::CarType, AttributeValues::Vehicle(v)) => v.car_type.as_str(),
            _ => return None,
        };
        if expand_unknown && raw == UNKNOWN {
            let confidence = self
                .field()
                .and_then(|f| values.unknown_confidence().get(&f).copied());
            return Some(match confidence {
                Some(UnknownConfidence::Clear) => UNKNOWN_CLEAR,
                _ => UNKNOWN_NOT_CLEAR,
            }
            .to_string());
        }
        Some(raw.to_string())
    }
}

impl fmt::Display for AttributeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttributeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::PERSON.as_slice(), Self::VEHICLE.as_slice()]
            .concat()
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown attribute `{s}`"))
    }
}
