//! Attribute taxonomies for person and vehicle agents.
//!
//! Every alphabet carries an explicit `unknown` variant. Unknown values can be
//! qualified as `clear` / `not_clear`; the qualifier lives next to the value in
//! [`PersonAttributes::unknown_confidence`] / [`VehicleAttributes::unknown_confidence`]
//! instead of being a separate variant.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Kind of agent an attribute block describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Person,
    Vehicle,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Person => "person",
            AgentKind::Vehicle => "vehicle",
        }
    }

    pub fn other(self) -> AgentKind {
        match self {
            AgentKind::Person => AgentKind::Vehicle,
            AgentKind::Vehicle => AgentKind::Person,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "person" => Ok(AgentKind::Person),
            "vehicle" => Ok(AgentKind::Vehicle),
            other => Err(format!("unknown agent kind `{other}`")),
        }
    }
}

/// Qualifier attached to an `unknown` value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownConfidence {
    Clear,
    NotClear,
}

/// A closed label alphabet with a distinguished `unknown` member.
pub trait Label: Copy + Eq + Ord + fmt::Debug + 'static {
    const ALL: &'static [Self];
    const UNKNOWN: Self;

    fn as_str(self) -> &'static str;

    fn is_unknown(self) -> bool {
        self == Self::UNKNOWN
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.as_str() == s)
    }
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl Label for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];
            const UNKNOWN: Self = $name::Unknown;

            fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

label_enum!(
    /// Age band. Only clearly distinguishable children (up to about 12 years) are `kid`.
    Age { Adult => "adult", Kid => "kid", Unknown => "unknown" }
);
label_enum!(
    /// Perceived sex from traditional male/female appearance and morphology.
    Sex { Male => "male", Female => "female", Unknown => "unknown" }
);
label_enum!(
    /// Binarized Fitzpatrick scale: `light` is types I-III, `dark` is IV-VI.
    Skin { Light => "light", Dark => "dark", Unknown => "unknown" }
);
label_enum!(
    /// Non-motorized means of transport. `pmd` is a personal mobility device.
    MeansOfTransport {
        Pedestrian => "pedestrian",
        Bicycle => "bicycle",
        Pmd => "pmd",
        Wheelchair => "wheelchair",
        Unknown => "unknown",
    }
);
label_enum!(
    VehicleType {
        Car => "car",
        Motorcycle => "motorcycle",
        Van => "van",
        Truck => "truck",
        Bus => "bus",
        Other => "other",
        Unknown => "unknown",
    }
);
label_enum!(
    /// Eight named colours plus `unknown`.
    Colour {
        Black => "black",
        White => "white",
        Grey => "grey",
        Blue => "blue",
        Red => "red",
        Yellow => "yellow",
        Green => "green",
        Other => "other",
        Unknown => "unknown",
    }
);
label_enum!(
    /// Car segment; only meaningful when the vehicle type is `car`.
    CarType {
        Small => "small",
        Medium => "medium",
        Large => "large",
        Pickup => "pickup",
        Convertible => "convertible",
        Other => "other",
        Unknown => "unknown",
    }
);

/// Names of the individually qualifiable attribute fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeField {
    Age,
    Sex,
    Skin,
    MeansOfTransport,
    VehicleType,
    Colour,
    CarType,
}

impl AttributeField {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributeField::Age => "age",
            AttributeField::Sex => "sex",
            AttributeField::Skin => "skin",
            AttributeField::MeansOfTransport => "means_of_transport",
            AttributeField::VehicleType => "vehicle_type",
            AttributeField::Colour => "colour",
            AttributeField::CarType => "car_type",
        }
    }
}

impl fmt::Display for AttributeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonAttributes {
    pub age: Age,
    pub sex: Sex,
    pub skin: Skin,
    pub means_of_transport: MeansOfTransport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub unknown_confidence: BTreeMap<AttributeField, UnknownConfidence>,
}

impl PersonAttributes {
    pub fn all_unknown() -> Self {
        Self {
            age: Age::Unknown,
            sex: Sex::Unknown,
            skin: Skin::Unknown,
            means_of_transport: MeansOfTransport::Unknown,
            group_id: None,
            unknown_confidence: BTreeMap::new(),
        }
    }

    /// `(field, is_unknown)` for every labelled field.
    pub fn fields(&self) -> [(AttributeField, bool); 4] {
        [
            (AttributeField::Age, self.age.is_unknown()),
            (AttributeField::Sex, self.sex.is_unknown()),
            (AttributeField::Skin, self.skin.is_unknown()),
            (AttributeField::MeansOfTransport, self.means_of_transport.is_unknown()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleAttributes {
    pub vehicle_type: VehicleType,
    pub colour: Colour,
    pub car_type: CarType,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub unknown_confidence: BTreeMap<AttributeField, UnknownConfidence>,
}

impl VehicleAttributes {
    pub fn all_unknown() -> Self {
        Self {
            vehicle_type: VehicleType::Unknown,
            colour: Colour::Unknown,
            car_type: CarType::Unknown,
            unknown_confidence: BTreeMap::new(),
        }
    }

    pub fn fields(&self) -> [(AttributeField, bool); 3] {
        [
            (AttributeField::VehicleType, self.vehicle_type.is_unknown()),
            (AttributeField::Colour, self.colour.is_unknown()),
            (AttributeField::CarType, self.car_type.is_unknown()),
        ]
    }
}

/// Where an attribute block came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Manual,
    Propagated,
}

impl Provenance {
    fn is_manual(&self) -> bool {
        *self == Provenance::Manual
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeValues {
    Person(PersonAttributes),
    Vehicle(VehicleAttributes),
}

impl AttributeValues {
    pub fn kind(&self) -> AgentKind {
        match self {
            AttributeValues::Person(_) => AgentKind::Person,
            AttributeValues::Vehicle(_) => AgentKind::Vehicle,
        }
    }

    pub fn all_unknown(kind: AgentKind) -> Self {
        match kind {
            AgentKind::Person => AttributeValues::Person(PersonAttributes::all_unknown()),
            AgentKind::Vehicle => AttributeValues::Vehicle(VehicleAttributes::all_unknown()),
        }
    }

    pub fn as_person(&self) -> Option<&PersonAttributes> {
        match self {
            AttributeValues::Person(p) => Some(p),
            AttributeValues::Vehicle(_) => None,
        }
    }

    pub fn as_vehicle(&self) -> Option<&VehicleAttributes> {
        match self {
            AttributeValues::Vehicle(v) => Some(v),
            AttributeValues::Person(_) => None,
        }
    }

    pub fn unknown_confidence(&self) -> &BTreeMap<AttributeField, UnknownConfidence> {
        match self {
            AttributeValues::Person(p) => &p.unknown_confidence,
            AttributeValues::Vehicle(v) => &v.unknown_confidence,
        }
    }

    /// `(field, is_unknown)` pairs for the labelled fields of this block.
    pub fn fields(&self) -> Vec<(AttributeField, bool)> {
        match self {
            AttributeValues::Person(p) => p.fields().to_vec(),
            AttributeValues::Vehicle(v) => v.fields().to_vec(),
        }
    }
}

/// Annotated attribute block: the values plus how they were obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedAttributes {
    #[serde(flatten)]
    pub values: AttributeValues,
    #[serde(default, skip_serializing_if = "Provenance::is_manual")]
    pub provenance: Provenance,
}

impl AnnotatedAttributes {
    pub fn manual(values: AttributeValues) -> Self {
        Self {
            values,
            provenance: Provenance::Manual,
        }
    }

    pub fn kind(&self) -> AgentKind {
        self.values.kind()
    }
}

impl From<PersonAttributes> for AnnotatedAttributes {
    fn from(p: PersonAttributes) -> Self {
        Self::manual(AttributeValues::Person(p))
    }
}

impl From<VehicleAttributes> for AnnotatedAttributes {
    fn from(v: VehicleAttributes) -> Self {
        Self::manual(AttributeValues::Vehicle(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_cardinalities() {
        assert_eq!(Age::ALL.len(), 3);
        assert_eq!(Sex::ALL.len(), 3);
        assert_eq!(Skin::ALL.len(), 3);
        assert_eq!(MeansOfTransport::ALL.len(), 5);
        assert_eq!(VehicleType::ALL.len(), 7);
        assert_eq!(Colour::ALL.len(), 9);
        assert_eq!(CarType::ALL.len(), 7);
        // eight named colours
        assert_eq!(Colour::ALL.iter().filter(|c| !c.is_unknown()).count(), 8);
    }

    #[test]
    fn labels_parse_back() {
        for l in Colour::ALL {
            assert_eq!(Colour::parse(l.as_str()), Some(*l));
        }
        assert_eq!(MeansOfTransport::parse("pmd"), Some(MeansOfTransport::Pmd));
        assert_eq!(Age::parse("elderly"), None);
    }

    #[test]
    fn attribute_block_is_tagged_by_kind() {
        let block = AnnotatedAttributes::from(VehicleAttributes::all_unknown());
        let json = serde_json::to_value(&block).unwrap();
        assert_eq!(json["kind"], "vehicle");
        assert_eq!(json["colour"], "unknown");
        assert!(json.get("provenance").is_none());
        let back: AnnotatedAttributes = serde_json::from_value(json).unwrap();
        assert_eq!(back, block);
    }
}
