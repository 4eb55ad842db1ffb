use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::matrix::{label_counts, LabelIdx, RatingMatrix};
use crate::scalar::Scalar;

/// Per-item agreement from repeated-label counts:
/// `(Σ l_m² − N) / (N (N − 1))` with `N = Σ l_m`.
///
/// `None` for fewer than two ratings.
pub fn k_score<T: Scalar>(counts: &[u32]) -> Option<T> {
    let n: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if n < 2 {
        return None;
    }
    let squares: u64 = counts.iter().map(|&c| u64::from(c) * u64::from(c)).sum();
    Some(T::ratio(squares - n, n * (n - 1)))
}

/// [`k_score`] of one row of a rating matrix; missing ratings are skipped.
pub fn k_score_row<T: Scalar>(row: &[Option<LabelIdx>]) -> Option<T> {
    let counts: Vec<u32> = label_counts(row).into_values().collect();
    k_score(&counts)
}

/// Percentage of disagreement in its per-rater form:
/// `PD = Σ_n T^D_n / (N · T)`, where `T^D_n` counts the items on which rater
/// `n` gave a label different from at least one other rater.
///
/// Items with fewer than two ratings are skipped; on items with missing
/// ratings only the raters present contribute to numerator and denominator.
/// `None` when no item is rated.
pub fn percentage_of_disagreement<T: Scalar>(matrix: &RatingMatrix) -> Option<T> {
    weighted_disagreement(matrix, &BTreeSet::new(), T::one())
}

/// [`percentage_of_disagreement`] where disagreements caused only by soft
/// labels contribute `soft_weight` instead of 1.
///
/// A non-unanimous item is a soft disagreement when its non-soft ratings are
/// unanimous (or absent).
pub fn weighted_disagreement<T: Scalar>(
    matrix: &RatingMatrix,
    soft: &BTreeSet<LabelIdx>,
    soft_weight: T,
) -> Option<T> {
    let (mut hard, mut soft_only, mut denominator) = (0u64, 0u64, 0u64);
    for row in matrix.rated_rows() {
        let counts = label_counts(row);
        let present: u32 = counts.values().sum();
        denominator += u64::from(present);
        let differing = row
            .iter()
            .flatten()
            .filter(|l| counts[l] < present)
            .count() as u64;
        if differing == 0 {
            continue;
        }
        let hard_labels = counts.keys().filter(|l| !soft.contains(l)).count();
        if !soft.is_empty() && hard_labels <= 1 {
            soft_only += differing;
        } else {
            hard += differing;
        }
    }
    if denominator == 0 {
        return None;
    }
    let numerator = T::from_count(hard) + soft_weight * T::from_count(soft_only);
    Some(numerator / T::from_count(denominator))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleissKappa<T> {
    /// Mean per-item agreement.
    pub p: T,
    /// Chance agreement from pooled label proportions.
    pub p_e: T,
    /// `None` when `p_e = 1` (all ratings carry one label).
    pub kappa: Option<T>,
    /// Complete items that entered the computation.
    pub items: usize,
}

/// Chance-corrected agreement `κ = (P − P_e) / (1 − P_e)`.
pub fn kappa_from<T: Scalar>(p: T, p_e: T) -> Option<T> {
    if p_e >= T::one() {
        return None;
    }
    Some((p - p_e.clone()) / (T::one() - p_e))
}

/// Fleiss' kappa over the complete items of `matrix`.
///
/// Items with any missing rating are excluded from both `P` and the pooled
/// label proportions. `None` when no complete item exists.
pub fn fleiss_kappa<T: Scalar>(matrix: &RatingMatrix) -> Option<FleissKappa<T>> {
    let m = matrix.alphabet().len();
    let mut pooled = vec![0u64; m];
    let mut p_sum = T::zero();
    let mut items = 0u64;
    for row in matrix.complete_rows() {
        let counts = label_counts(row);
        for (l, c) in &counts {
            pooled[usize::from(*l)] += u64::from(*c);
        }
        let c: Vec<u32> = counts.into_values().collect();
        p_sum = p_sum + k_score::<T>(&c)?;
        items += 1;
    }
    if items == 0 {
        return None;
    }
    let total: u64 = pooled.iter().sum();
    let p = p_sum / T::from_count(items);
    let p_e = pooled
        .iter()
        .map(|&c| {
            let share = T::ratio(c, total);
            share.clone() * share
        })
        .fold(T::zero(), |acc, x| acc + x);
    Some(FleissKappa {
        kappa: kappa_from(p.clone(), p_e.clone()),
        p,
        p_e,
        items: items as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn matrix(rows: &[&[u16]]) -> RatingMatrix {
        let raters = rows[0].len();
        let labels = rows.iter().flat_map(|r| r.iter()).max().map_or(1, |m| *m as usize + 1);
        let mut m = RatingMatrix::anonymous(labels.max(2), raters).unwrap();
        for (i, r) in rows.iter().enumerate() {
            m.push_indexed(i.to_string(), r.iter().map(|l| Some(*l)).collect()).unwrap();
        }
        m
    }

    #[test]
    fn k_score_table_values() {
        assert_eq!(k_score::<Q>(&[4, 1]), Some(Q::new(3, 5)));
        assert_eq!(k_score::<Q>(&[5]), Some(Q::from_integer(1)));
        assert_eq!(k_score::<Q>(&[2, 2, 1]), Some(Q::new(1, 5)));
        assert_eq!(k_score::<Q>(&[1]), None);
    }

    #[test]
    fn pd_counts_non_unanimous_items() {
        let mut rows: Vec<&[u16]> = vec![&[0, 0, 0, 0, 0]; 7];
        rows.extend([&[0u16, 0, 0, 0, 1][..], &[0, 1, 1, 0, 0], &[2, 1, 0, 0, 0]]);
        let m = matrix(&rows);
        assert_eq!(percentage_of_disagreement::<Q>(&m), Some(Q::new(3, 10)));
    }

    #[test]
    fn pd_of_single_four_one_item_is_one() {
        let m = matrix(&[&[0, 0, 0, 0, 1]]);
        assert_eq!(percentage_of_disagreement::<f64>(&m), Some(1.0));
    }

    #[test]
    fn pd_undefined_without_items() {
        let m = RatingMatrix::anonymous(2, 5).unwrap();
        assert_eq!(percentage_of_disagreement::<f64>(&m), None);
    }

    #[test]
    fn soft_weight_downweights_unknown_only_disagreements() {
        // label 2 is soft; item 0 is a soft disagreement, item 1 a hard one
        let m = matrix(&[&[0, 0, 2, 2, 0], &[0, 1, 0, 0, 0]]);
        let soft = BTreeSet::from([2u16]);
        let half = Q::new(1, 2);
        assert_eq!(weighted_disagreement(&m, &soft, Q::from_integer(1)), Some(Q::from_integer(1)));
        assert_eq!(weighted_disagreement(&m, &soft, half), Some(Q::new(3, 4)));
    }

    #[test]
    fn kappa_combiner() {
        let k = kappa_from(0.9469_f64, 0.9090).unwrap();
        assert!((k - 0.4165).abs() < 1e-4);
        assert_eq!(kappa_from(0.5, 1.0), None);
    }

    #[test]
    fn perfect_agreement_with_two_labels() {
        let m = matrix(&[&[0, 0, 0], &[1, 1, 1]]);
        let f = fleiss_kappa::<Q>(&m).unwrap();
        assert_eq!(f.p, Q::from_integer(1));
        assert_eq!(f.p_e, Q::new(1, 2));
        assert_eq!(f.kappa, Some(Q::from_integer(1)));
    }

    #[test]
    fn single_label_kappa_undefined() {
        let m = matrix(&[&[0, 0, 0], &[0, 0, 0]]);
        let f = fleiss_kappa::<f64>(&m).unwrap();
        assert_eq!(f.p_e, 1.0);
        assert_eq!(f.kappa, None);
    }

    #[test]
    fn fleiss_wikipedia_example() {
        // 10 items, 14 raters, 5 categories; counts per item from Fleiss (1971).
        let counts: [[u32; 5]; 10] = [
            [0, 0, 0, 0, 14],
            [0, 2, 6, 4, 2],
            [0, 0, 3, 5, 6],
            [0, 3, 9, 2, 0],
            [2, 2, 8, 1, 1],
            [7, 7, 0, 0, 0],
            [3, 2, 6, 3, 0],
            [2, 5, 3, 2, 2],
            [6, 5, 2, 1, 0],
            [0, 2, 2, 3, 7],
        ];
        let mut m = RatingMatrix::anonymous(5, 14).unwrap();
        for (i, row) in counts.iter().enumerate() {
            let labels: Vec<Option<u16>> = row
                .iter()
                .enumerate()
                .flat_map(|(l, c)| std::iter::repeat_n(Some(l as u16), *c as usize))
                .collect();
            m.push_indexed(i.to_string(), labels).unwrap();
        }
        let f = fleiss_kappa::<f64>(&m).unwrap();
        assert!((f.p - 0.378).abs() < 1e-3);
        assert!((f.p_e - 0.213).abs() < 1e-3);
        assert!((f.kappa.unwrap() - 0.210).abs() < 1e-3);
    }

    #[test]
    fn incomplete_items_excluded_from_fleiss() {
        let mut m = matrix(&[&[0, 0, 0], &[1, 1, 0]]);
        m.push_indexed("partial", vec![Some(1), None, Some(1)]).unwrap();
        let with = fleiss_kappa::<Q>(&m).unwrap();
        let without = fleiss_kappa::<Q>(&matrix(&[&[0, 0, 0], &[1, 1, 0]])).unwrap();
        assert_eq!(with, without);
        assert_eq!(with.items, 2);
    }
}
