use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AgreementError;

/// Index of a label inside a [`RatingMatrix`] alphabet.
pub type LabelIdx = u16;

/// Items × raters table of categorical labels for one attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingMatrix {
    attribute: String,
    alphabet: Vec<String>,
    raters: Vec<String>,
    items: Vec<String>,
    ratings: Vec<Vec<Option<LabelIdx>>>,
}

impl RatingMatrix {
    pub fn new(
        attribute: impl Into<String>,
        alphabet: Vec<String>,
        raters: Vec<String>,
    ) -> Result<Self, AgreementError> {
        if raters.len() < 2 {
            return Err(AgreementError::TooFewRaters(raters.len()));
        }
        if alphabet.is_empty() || alphabet.len() > usize::from(LabelIdx::MAX) {
            return Err(AgreementError::BadAlphabet(alphabet.len()));
        }
        Ok(Self {
            attribute: attribute.into(),
            alphabet,
            raters,
            items: Vec::new(),
            ratings: Vec::new(),
        })
    }

    /// Matrix with anonymous raters `r0..rN` and labels `l0..lM`, for index-based construction.
    pub fn anonymous(labels: usize, raters: usize) -> Result<Self, AgreementError> {
        Self::new(
            "",
            (0..labels).map(|i| format!("l{i}")).collect(),
            (0..raters).map(|i| format!("r{i}")).collect(),
        )
    }

    pub fn push_item(
        &mut self,
        item: impl Into<String>,
        ratings: &[Option<&str>],
    ) -> Result<(), AgreementError> {
        let idx = ratings
            .iter()
            .map(|r| match r {
                None => Ok(None),
                Some(label) => self
                    .label_index(label)
                    .map(Some)
                    .ok_or_else(|| AgreementError::UnknownLabel(label.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.push_indexed(item, idx)
    }

    pub fn push_indexed(
        &mut self,
        item: impl Into<String>,
        ratings: Vec<Option<LabelIdx>>,
    ) -> Result<(), AgreementError> {
        if ratings.len() != self.raters.len() {
            return Err(AgreementError::Arity {
                expected: self.raters.len(),
                found: ratings.len(),
            });
        }
        if let Some(bad) = ratings.iter().flatten().find(|l| usize::from(**l) >= self.alphabet.len()) {
            return Err(AgreementError::UnknownLabel(format!("#{bad}")));
        }
        self.items.push(item.into());
        self.ratings.push(ratings);
        Ok(())
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn rater_count(&self) -> usize {
        self.raters.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn label_index(&self, label: &str) -> Option<LabelIdx> {
        self.alphabet
            .iter()
            .position(|l| l == label)
            .map(|i| i as LabelIdx)
    }

    pub fn row(&self, item: usize) -> &[Option<LabelIdx>] {
        &self.ratings[item]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Option<LabelIdx>]> {
        self.ratings.iter().map(Vec::as_slice)
    }

    /// Rows with at least two non-missing ratings: the items any statistic sees.
    pub fn rated_rows(&self) -> impl Iterator<Item = &[Option<LabelIdx>]> {
        self.rows().filter(|r| r.iter().flatten().count() >= 2)
    }

    /// Rows where every rater gave a label.
    pub fn complete_rows(&self) -> impl Iterator<Item = &[Option<LabelIdx>]> {
        self.rows().filter(|r| r.iter().all(Option::is_some))
    }

    pub(crate) fn map_rows(&self, f: impl Fn(&[Option<LabelIdx>]) -> Vec<Option<LabelIdx>>) -> Self {
        Self {
            attribute: self.attribute.clone(),
            alphabet: self.alphabet.clone(),
            raters: self.raters.clone(),
            items: self.items.clone(),
            ratings: self.ratings.iter().map(|r| f(r)).collect(),
        }
    }

    pub(crate) fn retain_rows(&mut self, keep: impl Fn(&[Option<LabelIdx>]) -> bool) {
        let (items, ratings): (Vec<_>, Vec<_>) = std::mem::take(&mut self.items)
            .into_iter()
            .zip(std::mem::take(&mut self.ratings))
            .filter(|(_, r)| keep(r))
            .unzip();
        self.items = items;
        self.ratings = ratings;
    }
}

/// Per-label multiplicities of one item's non-missing ratings.
pub fn label_counts(row: &[Option<LabelIdx>]) -> BTreeMap<LabelIdx, u32> {
    let mut counts = BTreeMap::new();
    for l in row.iter().flatten() {
        *counts.entry(*l).or_insert(0) += 1;
    }
    counts
}
