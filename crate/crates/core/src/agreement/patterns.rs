use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::matrix::{label_counts, LabelIdx, RatingMatrix};
use super::metrics::k_score;
use crate::scalar::Scalar;

/// Sorted label multiplicities of one item, e.g. `4/1` or `2/2/1`.
///
/// Ordered by total rating count (descending) and then lexicographically, so
/// for a fixed number of raters the order is the agreement-first column order
/// `5, 4/1, 3/2, 3/1/1, 2/2/1, 2/1/1/1, 1/1/1/1/1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternSignature(Vec<u32>);

impl PatternSignature {
    pub fn from_counts(counts: impl IntoIterator<Item = u32>) -> Self {
        let mut v: Vec<u32> = counts.into_iter().filter(|&c| c > 0).collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        Self(v)
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn raters(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_unanimous(&self) -> bool {
        self.0.len() == 1
    }

    pub fn k_score<T: Scalar>(&self) -> Option<T> {
        k_score(&self.0)
    }

    /// Every signature for `n` raters (the integer partitions of `n`), in column order.
    pub fn all_for(n: u32) -> Vec<Self> {
        fn rec(rest: u32, max: u32, prefix: &mut Vec<u32>, out: &mut Vec<PatternSignature>) {
            if rest == 0 {
                out.push(PatternSignature(prefix.clone()));
                return;
            }
            for part in (1..=rest.min(max)).rev() {
                prefix.push(part);
                rec(rest - part, part, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        rec(n, n, &mut Vec::new(), &mut out);
        out
    }
}

impl Ord for PatternSignature {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .raters()
            .cmp(&self.raters())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for PatternSignature {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PatternSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join("/"))
    }
}

impl FromStr for PatternSignature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split('/')
            .map(|p| p.trim().parse::<u32>().map_err(|e| format!("bad signature `{s}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_counts(parts))
    }
}

impl Serialize for PatternSignature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PatternSignature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternOutcome<T> {
    pub signature: PatternSignature,
    pub k_score: T,
}

/// Signature and k-score of one item's ratings. `None` for fewer than two ratings.
pub fn classify_pattern<T: Scalar, L: Ord>(ratings: &[L]) -> Option<PatternOutcome<T>> {
    let mut counts: BTreeMap<&L, u32> = BTreeMap::new();
    for r in ratings {
        *counts.entry(r).or_insert(0) += 1;
    }
    let signature = PatternSignature::from_counts(counts.into_values());
    let k_score = signature.k_score()?;
    Some(PatternOutcome { signature, k_score })
}

/// Signature counts over the items with at least two ratings.
pub fn pattern_histogram(matrix: &RatingMatrix) -> BTreeMap<PatternSignature, usize> {
    let mut hist = BTreeMap::new();
    for row in matrix.rated_rows() {
        let sig = PatternSignature::from_counts(label_counts(row).into_values());
        *hist.entry(sig).or_insert(0) += 1;
    }
    hist
}

/// Number of rating outcomes for `m` labels and `n` raters: combinations with
/// replacement, `C(m + n − 1, n)`.
pub fn outcome_space_size(m: u32, n: u32) -> u128 {
    assert!(m >= 1 && n >= 1, "outcome space needs m >= 1 and n >= 1");
    num_integer::binomial(u128::from(m + n - 1), u128::from(n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftFiltered {
    pub matrix: RatingMatrix,
    /// Items left with fewer than two ratings after filtering.
    pub dropped_items: usize,
    /// `M − |soft|`, the alphabet size for the outcome-space figure.
    pub reduced_alphabet: usize,
}

/// Turns soft-labelled ratings into missing ones and drops items left with
/// fewer than two ratings.
pub fn soft_filter(matrix: &RatingMatrix, soft: &BTreeSet<LabelIdx>) -> SoftFiltered {
    let before = matrix.item_count();
    let mut filtered = matrix.map_rows(|row| {
        row.iter()
            .map(|r| r.filter(|l| !soft.contains(l)))
            .collect()
    });
    filtered.retain_rows(|row| row.iter().flatten().count() >= 2);
    let in_alphabet = soft
        .iter()
        .filter(|l| usize::from(**l) < matrix.alphabet().len())
        .count();
    SoftFiltered {
        dropped_items: before - filtered.item_count(),
        reduced_alphabet: matrix.alphabet().len() - in_alphabet,
        matrix: filtered,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn signatures_display_and_order() {
        let mut sigs: Vec<PatternSignature> = ["2/1/1/1", "5", "3/2", "1/1/1/1/1", "4/1", "2/2/1", "3/1/1"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        sigs.sort();
        let shown: Vec<String> = sigs.iter().map(ToString::to_string).collect();
        assert_eq!(shown, ["5", "4/1", "3/2", "3/1/1", "2/2/1", "2/1/1/1", "1/1/1/1/1"]);
        assert_eq!(PatternSignature::all_for(5), sigs);
    }

    #[test]
    fn classify_examples() {
        let o = classify_pattern::<Ratio<i64>, _>(&["a", "b", "c", "d", "e"]).unwrap();
        assert_eq!(o.signature.to_string(), "1/1/1/1/1");
        assert_eq!(o.k_score, Ratio::from_integer(0));
        let o = classify_pattern::<Ratio<i64>, _>(&["a", "a", "a", "b", "c"]).unwrap();
        assert_eq!(o.signature.to_string(), "3/1/1");
        assert_eq!(o.k_score, Ratio::new(3, 10));
        assert!(classify_pattern::<f64, _>(&["a"]).is_none());
    }

    #[test]
    fn outcome_space_closed_form() {
        assert_eq!(outcome_space_size(2, 5), 6);
        assert_eq!(outcome_space_size(3, 5), 21);
        assert_eq!(outcome_space_size(9, 5), 1287);
    }

    #[test]
    fn soft_filter_female_example() {
        let mut m = RatingMatrix::new(
            "sex",
            ["male", "female", "unknown"].map(String::from).to_vec(),
            (0..5).map(|i| format!("r{i}")).collect(),
        )
        .unwrap();
        let f = Some("female");
        let u = Some("unknown");
        m.push_item("agent4", &[f, f, u, u, f]).unwrap();
        m.push_item("soft-only", &[u, u, u, u, u]).unwrap();
        let soft = BTreeSet::from([2u16]);
        let out = soft_filter(&m, &soft);
        assert_eq!(out.dropped_items, 1);
        assert_eq!(out.reduced_alphabet, 2);
        assert_eq!(out.matrix.item_count(), 1);
        let hist = pattern_histogram(&out.matrix);
        assert_eq!(hist.len(), 1);
        let (sig, n) = hist.into_iter().next().unwrap();
        assert_eq!((sig.to_string(), n), ("3".to_string(), 1));
        assert!(sig.is_unanimous());
    }

    #[test]
    fn soft_filter_without_soft_labels_is_identity() {
        let mut m = RatingMatrix::anonymous(3, 3).unwrap();
        m.push_indexed("a", vec![Some(0), Some(1), Some(1)]).unwrap();
        let out = soft_filter(&m, &BTreeSet::from([2u16]));
        assert_eq!(out.matrix, m);
        assert_eq!(out.dropped_items, 0);
    }
}
