//! Attribute distributions over full datasets.

mod chart;

pub use chart::{chart_data, render_svg, Bar, ChartData, PieSeries, Segment, StackedBars};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::AnnotatorExports;
use crate::model::{AgentKind, AttributeId, CanonicalAgent};

pub const DEFAULT_UNDERREPRESENTED_PERCENT: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum BiasError {
    #[error("dataset `{dataset}` has {found} agents, attribute `{attribute}` needs {needed}")]
    KindMismatch {
        dataset: String,
        attribute: AttributeId,
        found: AgentKind,
        needed: AgentKind,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelShare {
    pub label: String,
    pub count: u64,
    /// `count / total · 100`, full precision.
    pub percent: f64,
    /// Two-decimal display form.
    pub display: String,
    pub underrepresented: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSlice {
    pub dataset_id: String,
    pub attribute: AttributeId,
    /// Agents with this attribute annotated.
    pub total: u64,
    /// Every alphabet label in order, zero counts included.
    pub labels: Vec<LabelShare>,
}

impl DistributionSlice {
    pub fn share(&self, label: &str) -> Option<&LabelShare> {
        self.labels.iter().find(|l| l.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub threshold_percent: f64,
    pub slices: Vec<DistributionSlice>,
}

/// One representative per annotated agent: `(image_id, uuid)` → the copies
/// from every annotator who labelled it. Discarded images and agents flagged
/// `error_in_labelling` are skipped.
pub fn annotated_agents(exports: &AnnotatorExports) -> BTreeMap<(String, String), Vec<&CanonicalAgent>> {
    let mut out: BTreeMap<(String, String), Vec<&CanonicalAgent>> = BTreeMap::new();
    for images in exports.values() {
        for img in images.iter().filter(|i| !i.image_meta.discard_flag) {
            for a in img
                .agents
                .iter()
                .filter(|a| a.annotated_attributes.is_some() && !a.error_in_labelling)
            {
                out.entry((img.image_id().to_string(), a.uuid.clone())).or_default().push(a);
            }
        }
    }
    out
}

/// Majority label among the copies of one agent; ties go to the label that
/// comes first in the alphabet.
fn consensus(attribute: AttributeId, alphabet: &[String], copies: &[&CanonicalAgent]) -> Option<usize> {
    let mut votes = vec![0u32; alphabet.len()];
    let mut any = false;
    for c in copies {
        if let Some(l) = attribute.label_of(c, false) {
            if let Some(i) = alphabet.iter().position(|x| *x == l) {
                votes[i] += 1;
                any = true;
            }
        }
    }
    if !any {
        return None;
    }
    let best = *votes.iter().max().expect("non-empty alphabet");
    votes.iter().position(|&v| v == best)
}

/// Label counts and shares of `attribute` for one dataset.
pub fn distribution(
    dataset_id: &str,
    exports: &AnnotatorExports,
    attribute: AttributeId,
    threshold_percent: f64,
) -> Result<DistributionSlice, BiasError> {
    let agents = annotated_agents(exports);
    if let Some(found) = agents
        .values()
        .filter_map(|c| c.first().and_then(|a| a.annotated_attributes.as_ref()).map(|x| x.values.kind()))
        .find(|k| *k != attribute.kind())
    {
        if !agents
            .values()
            .any(|c| c[0].annotated_attributes.as_ref().map(|x| x.values.kind()) == Some(attribute.kind()))
        {
            return Err(BiasError::KindMismatch {
                dataset: dataset_id.to_string(),
                attribute,
                found,
                needed: attribute.kind(),
            });
        }
    }
    let alphabet = attribute.alphabet(false);
    let mut counts = vec![0u64; alphabet.len()];
    for copies in agents.values() {
        if let Some(i) = consensus(attribute, &alphabet, copies) {
            counts[i] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let labels = alphabet
        .into_iter()
        .zip(counts)
        .map(|(label, count)| {
            let percent = if total == 0 { 0.0 } else { count as f64 / total as f64 * 100.0 };
            LabelShare {
                label,
                count,
                percent,
                display: format!("{percent:.2}"),
                underrepresented: total > 0 && percent < threshold_percent,
            }
        })
        .collect();
    Ok(DistributionSlice {
        dataset_id: dataset_id.to_string(),
        attribute,
        total,
        labels,
    })
}

/// Every applicable attribute of every dataset. Attributes of the other
/// agent kind are skipped rather than reported as errors.
pub fn distribution_report(datasets: &BTreeMap<String, AnnotatorExports>, threshold_percent: f64) -> DistributionReport {
    let mut slices = Vec::new();
    for (id, exports) in datasets {
        for attr in AttributeId::PERSON.iter().chain(AttributeId::VEHICLE.iter()) {
            if let Ok(s) = distribution(id, exports, *attr, threshold_percent) {
                if s.total > 0 || !has_kind(exports, attr.kind().other()) {
                    slices.push(s);
                }
            }
        }
    }
    DistributionReport {
        threshold_percent,
        slices,
    }
}

fn has_kind(exports: &AnnotatorExports, kind: AgentKind) -> bool {
    annotated_agents(exports)
        .values()
        .any(|c| c[0].annotated_attributes.as_ref().map(|x| x.values.kind()) == Some(kind))
}

impl DistributionReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dataset", "attribute", "label", "count", "percent", "underrepresented"])
            .expect("writing to memory");
        for s in &self.slices {
            for l in &s.labels {
                w.write_record([
                    s.dataset_id.as_str(),
                    s.attribute.as_str(),
                    l.label.as_str(),
                    &l.count.to_string(),
                    &l.display,
                    if l.underrepresented { "true" } else { "false" },
                ])
                .expect("writing to memory");
            }
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Age, BoundingBox, CanonicalImage, ImageMeta, PersonAttributes, Resolution, Split,
    };

    fn person_export(ages: &[Age], dataset: &str) -> Vec<CanonicalImage> {
        let mut img = CanonicalImage::new(ImageMeta {
            image_id: format!("{dataset}-0"),
            source_dataset: dataset.into(),
            split: Split::Train,
            file_path: "x.png".into(),
            resolution: Resolution::new(4000, 100),
            annotator_id: Some("a".into()),
            discard_flag: false,
            unresolved_path: false,
            sequence: None,
        });
        for (i, age) in ages.iter().enumerate() {
            let mut a = CanonicalAgent::new(i as u32, format!("u{i}"), "ped", BoundingBox::new(i as f64 * 10.0, 0.0, i as f64 * 10.0 + 5.0, 50.0))
                .with_kind(AgentKind::Person);
            let mut p = PersonAttributes::all_unknown();
            p.age = *age;
            a.annotated_attributes = Some(p.into());
            img.agents.push(a);
        }
        vec![img]
    }

    #[test]
    fn nine_to_one() {
        let mut ages = vec![Age::Adult; 9];
        ages.push(Age::Kid);
        let exports: AnnotatorExports = [("a".to_string(), person_export(&ages, "d"))].into();
        let s = distribution("d", &exports, AttributeId::Age, 1.0).unwrap();
        assert_eq!(s.total, 10);
        assert_eq!(s.share("adult").unwrap().display, "90.00");
        assert_eq!(s.share("kid").unwrap().display, "10.00");
        assert_eq!(s.share("unknown").unwrap().count, 0);
    }

    #[test]
    fn empty_export_gives_zero_total() {
        let exports = AnnotatorExports::new();
        let s = distribution("d", &exports, AttributeId::Sex, 1.0).unwrap();
        assert_eq!(s.total, 0);
        assert_eq!(s.labels.len(), 3);
    }

    #[test]
    fn vehicle_attribute_on_persons_is_error() {
        let exports: AnnotatorExports = [("a".to_string(), person_export(&[Age::Adult], "d"))].into();
        assert!(matches!(
            distribution("d", &exports, AttributeId::Colour, 1.0),
            Err(BiasError::KindMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_inter_copies_counted_once_by_majority() {
        let exports: AnnotatorExports = [
            ("a".to_string(), person_export(&[Age::Kid], "d")),
            ("b".to_string(), person_export(&[Age::Adult], "d")),
            ("c".to_string(), person_export(&[Age::Kid], "d")),
        ]
        .into();
        let s = distribution("d", &exports, AttributeId::Age, 1.0).unwrap();
        assert_eq!(s.total, 1);
        assert_eq!(s.share("kid").unwrap().count, 1);
    }
}
