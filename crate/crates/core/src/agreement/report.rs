//! Agreement tables computed from annotator exports over the inter pool.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::matrix::{LabelIdx, RatingMatrix};
use super::metrics::{fleiss_kappa, weighted_disagreement, FleissKappa};
use super::patterns::{outcome_space_size, pattern_histogram, soft_filter, PatternSignature};
use crate::allocation::AllocationPlan;
use crate::model::{AttributeId, CanonicalImage, UNKNOWN, UNKNOWN_NOT_CLEAR};
use crate::scalar::Scalar;

/// Annotator id → that annotator's exported images for one dataset.
pub type AnnotatorExports = BTreeMap<String, Vec<CanonicalImage>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributeOptions {
    /// Split `unknown` into `unknown_clear` / `unknown_not_clear`.
    pub expand_unknown: bool,
    /// Soft-label tokens, resolved against the alphabet with [`resolve_soft`].
    pub soft: Vec<String>,
    /// Alphabet size used for the outcome-space figure instead of the real one.
    pub outcome_alphabet: Option<u32>,
}

impl Default for AttributeOptions {
    fn default() -> Self {
        Self {
            expand_unknown: false,
            soft: vec![UNKNOWN.to_string()],
            outcome_alphabet: None,
        }
    }
}

impl AttributeOptions {
    pub fn default_for(attribute: AttributeId) -> Self {
        let mut o = Self::default();
        match attribute {
            AttributeId::Sex | AttributeId::Skin => o.expand_unknown = true,
            AttributeId::Colour | AttributeId::CarType | AttributeId::VehicleType => {
                o.soft.push("other".into())
            }
            _ => {}
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgreementOptions {
    pub attributes: BTreeMap<AttributeId, AttributeOptions>,
    /// When set, PD is also reported with soft-only disagreements weighted by this value.
    pub soft_weight: Option<f64>,
}

impl Default for AgreementOptions {
    fn default() -> Self {
        let attributes = AttributeId::PERSON
            .iter()
            .chain(AttributeId::VEHICLE.iter())
            .map(|&a| (a, AttributeOptions::default_for(a)))
            .collect();
        Self {
            attributes,
            soft_weight: None,
        }
    }
}

impl AgreementOptions {
    pub fn for_attribute(&self, attribute: AttributeId) -> AttributeOptions {
        self.attributes
            .get(&attribute)
            .cloned()
            .unwrap_or_else(|| AttributeOptions::default_for(attribute))
    }

    /// Replaces the soft set of every attribute.
    pub fn with_soft(mut self, tokens: &[String]) -> Self {
        for a in AttributeId::PERSON.iter().chain(AttributeId::VEHICLE.iter()) {
            self.attributes
                .entry(*a)
                .or_insert_with(|| AttributeOptions::default_for(*a))
                .soft = tokens.to_vec();
        }
        self
    }
}

/// Label indices selected by soft tokens: `unknown` covers every unknown
/// variant, `not_clear` means `unknown_not_clear`, anything else must match a
/// label exactly. Tokens without a match are ignored.
pub fn resolve_soft(tokens: &[String], alphabet: &[String]) -> BTreeSet<LabelIdx> {
    let mut out = BTreeSet::new();
    for t in tokens {
        let t = t.trim();
        for (i, l) in alphabet.iter().enumerate() {
            let hit = match t {
                UNKNOWN => l == UNKNOWN || l.starts_with("unknown_"),
                "not_clear" => l == UNKNOWN_NOT_CLEAR,
                _ => l == t,
            };
            if hit {
                out.insert(i as LabelIdx);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRow {
    /// M used for the outcome-space figure.
    pub alphabet_size: u32,
    pub raters: u32,
    /// C^R(M, N).
    pub outcome_space: String,
    /// Histogram keyed by the observed signature. After soft filtering this
    /// includes signatures over fewer raters.
    pub observed: BTreeMap<PatternSignature, usize>,
    /// Histogram over the full-rater signatures. A reduced signature is
    /// padded onto its largest part, so a unanimous remainder counts as agreement.
    pub columns: BTreeMap<PatternSignature, usize>,
    pub items: usize,
    /// Mean tabulated k-score over `observed`.
    pub mean_k_score: Option<f64>,
}

impl PatternRow {
    fn from_matrix(matrix: &RatingMatrix, alphabet_size: u32) -> Self {
        let n = matrix.rater_count() as u32;
        let observed = pattern_histogram(matrix);
        let mut columns: BTreeMap<PatternSignature, usize> =
            PatternSignature::all_for(n).into_iter().map(|s| (s, 0)).collect();
        let mut k_sum = BigRational::from_integer(BigInt::from(0));
        let mut items = 0usize;
        for (sig, &count) in &observed {
            *columns.entry(pad_to(sig, n)).or_insert(0) += count;
            if let Some(k) = sig.k_score::<BigRational>() {
                k_sum += k * BigRational::from_count(count as u64);
            }
            items += count;
        }
        let mean_k_score = (items > 0).then(|| (k_sum / BigRational::from_count(items as u64)).to_f64());
        Self {
            alphabet_size,
            raters: n,
            outcome_space: format!(
                "C^R({alphabet_size},{n})={}",
                outcome_space_size(alphabet_size.max(1), n.max(1))
            ),
            observed,
            columns,
            items,
            mean_k_score,
        }
    }
}

fn pad_to(sig: &PatternSignature, n: u32) -> PatternSignature {
    let mut parts = sig.parts().to_vec();
    let missing = n.saturating_sub(sig.raters());
    if let Some(first) = parts.first_mut() {
        *first += missing;
    }
    PatternSignature::from_counts(parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAgreement {
    pub attribute: AttributeId,
    pub alphabet: Vec<String>,
    pub raters: usize,
    pub items: usize,
    /// Inter-pool agents skipped because at least one rater has no label.
    pub excluded_incomplete: usize,
    pub pd: Option<f64>,
    /// PD as an exact fraction.
    pub pd_exact: Option<String>,
    pub pd_soft_weighted: Option<f64>,
    pub fleiss: Option<FleissKappa<f64>>,
    pub raw: PatternRow,
    pub soft_labels: Vec<String>,
    pub soft: PatternRow,
    pub soft_dropped_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAgreement {
    pub dataset_id: String,
    pub raters: Vec<String>,
    pub attributes: Vec<AttributeAgreement>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub datasets: Vec<DatasetAgreement>,
    /// All datasets pooled per attribute, raters matched by position in each plan.
    pub pooled: Vec<AttributeAgreement>,
}

/// Rating matrix for `attribute` over the inter-pool agents of `plan`.
///
/// Items are `image_id/uuid`; raters follow the plan's annotator order. An
/// agent enters only when every rater has a label for it; the second value
/// counts the agents left out.
pub fn build_matrix(
    attribute: AttributeId,
    options: &AttributeOptions,
    plan: &AllocationPlan,
    exports: &AnnotatorExports,
) -> (RatingMatrix, usize) {
    let alphabet = attribute.alphabet(options.expand_unknown);
    let mut matrix = RatingMatrix::new(attribute.as_str(), alphabet, plan.annotators.clone())
        .expect("plans have at least two annotators and alphabets are non-empty");
    let by_image: Vec<BTreeMap<&str, &CanonicalImage>> = plan
        .annotators
        .iter()
        .map(|a| {
            exports
                .get(a)
                .map(|imgs| imgs.iter().map(|i| (i.image_id(), i)).collect())
                .unwrap_or_default()
        })
        .collect();
    let mut excluded = 0;
    for entry in &plan.inter_pool {
        let copies: Vec<Option<&CanonicalImage>> = by_image
            .iter()
            .map(|m| m.get(entry.image_id.as_str()).copied())
            .collect();
        let uuids: BTreeSet<&str> = copies
            .iter()
            .flatten()
            .flat_map(|img| plan.filter.eligible_agents(img))
            .map(|a| a.uuid.as_str())
            .collect();
        for uuid in uuids {
            let labels: Vec<Option<String>> = copies
                .iter()
                .map(|c| {
                    c.and_then(|img| img.agent_by_uuid(uuid))
                        .and_then(|a| attribute.label_of(a, options.expand_unknown))
                })
                .collect();
            if labels.iter().all(Option::is_none) {
                // Agent of the other kind for this attribute.
                continue;
            }
            if labels.iter().any(Option::is_none) {
                excluded += 1;
                continue;
            }
            let refs: Vec<Option<&str>> = labels.iter().map(|l| l.as_deref()).collect();
            matrix
                .push_item(format!("{}/{uuid}", entry.image_id), &refs)
                .expect("labels come from the attribute alphabet");
        }
    }
    (matrix, excluded)
}

fn summarize(
    attribute: AttributeId,
    options: &AttributeOptions,
    soft_weight: Option<f64>,
    matrix: &RatingMatrix,
    excluded: usize,
) -> AttributeAgreement {
    let soft = resolve_soft(&options.soft, matrix.alphabet());
    let pd = weighted_disagreement::<BigRational>(matrix, &BTreeSet::new(), BigRational::from_count(1));
    let pd_soft_weighted = soft_weight.and_then(|w| weighted_disagreement::<f64>(matrix, &soft, w));
    let fleiss = fleiss_kappa::<BigRational>(matrix).map(|f| FleissKappa {
        p: f.p.to_f64(),
        p_e: f.p_e.to_f64(),
        kappa: f.kappa.map(|k| k.to_f64()),
        items: f.items,
    });
    let m = options
        .outcome_alphabet
        .unwrap_or(matrix.alphabet().len() as u32);
    let filtered = soft_filter(matrix, &soft);
    let reduced = m.saturating_sub((matrix.alphabet().len() - filtered.reduced_alphabet) as u32);
    AttributeAgreement {
        attribute,
        alphabet: matrix.alphabet().to_vec(),
        raters: matrix.rater_count(),
        items: matrix.item_count(),
        excluded_incomplete: excluded,
        pd: pd.as_ref().map(Scalar::to_f64),
        pd_exact: pd.map(|p| p.to_string()),
        pd_soft_weighted,
        fleiss,
        raw: PatternRow::from_matrix(matrix, m),
        soft_labels: soft.iter().map(|&i| matrix.alphabet()[usize::from(i)].clone()).collect(),
        soft: PatternRow::from_matrix(&filtered.matrix, reduced),
        soft_dropped_items: filtered.dropped_items,
    }
}

/// Label rows of one attribute across datasets, excluded items, rater count.
type PooledRows = BTreeMap<AttributeId, (Vec<Vec<Option<String>>>, usize, usize)>;

/// Per-dataset and pooled agreement for every attribute that has ratings.
pub fn agreement_report(
    inputs: &[(&AllocationPlan, &AnnotatorExports)],
    options: &AgreementOptions,
) -> AgreementReport {
    let mut datasets = Vec::new();
    let mut pooled_rows: PooledRows = BTreeMap::new();
    let all: Vec<AttributeId> = AttributeId::PERSON
        .iter()
        .chain(AttributeId::VEHICLE.iter())
        .copied()
        .collect();
    for (plan, exports) in inputs {
        let mut diagnostics = Vec::new();
        if plan.inter_pool.is_empty() {
            diagnostics.push("inter pool is empty".to_string());
        }
        for a in &plan.annotators {
            if !exports.contains_key(a) {
                diagnostics.push(format!("no export for annotator `{a}`"));
            }
        }
        let mut attributes = Vec::new();
        for &attr in &all {
            let opts = options.for_attribute(attr);
            let (matrix, excluded) = build_matrix(attr, &opts, plan, exports);
            if matrix.item_count() == 0 && excluded == 0 {
                continue;
            }
            let slot = pooled_rows.entry(attr).or_insert((Vec::new(), 0, plan.annotators.len()));
            slot.1 += excluded;
            slot.2 = slot.2.min(plan.annotators.len());
            for row in matrix.rows() {
                slot.0.push(
                    row.iter()
                        .map(|r| r.map(|l| matrix.alphabet()[usize::from(l)].clone()))
                        .collect(),
                );
            }
            attributes.push(summarize(attr, &opts, options.soft_weight, &matrix, excluded));
        }
        if attributes.is_empty() && diagnostics.is_empty() {
            diagnostics.push("no inter-pool ratings found".to_string());
        }
        datasets.push(DatasetAgreement {
            dataset_id: plan.dataset_id.clone(),
            raters: plan.annotators.clone(),
            attributes,
            diagnostics,
        });
    }
    let mut pooled = Vec::new();
    for (attr, (rows, excluded, n)) in pooled_rows {
        let opts = options.for_attribute(attr);
        let raters = (1..=n).map(|i| format!("rater_{i}")).collect();
        let Ok(mut matrix) = RatingMatrix::new(attr.as_str(), attr.alphabet(opts.expand_unknown), raters) else {
            continue;
        };
        for (i, row) in rows.iter().enumerate() {
            let refs: Vec<Option<&str>> = row.iter().take(n).map(|l| l.as_deref()).collect();
            matrix
                .push_item(i.to_string(), &refs)
                .expect("labels come from the attribute alphabet");
        }
        pooled.push(summarize(attr, &opts, options.soft_weight, &matrix, excluded));
    }
    AgreementReport { datasets, pooled }
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_default()
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is UTF-8")
}

impl AgreementReport {
    /// Percentage of disagreement, attributes × datasets, in percent.
    pub fn pd_csv(&self) -> String {
        let mut header = vec!["attribute".to_string()];
        header.extend(self.datasets.iter().map(|d| d.dataset_id.clone()));
        header.push("pooled".into());
        let mut rows = vec![header];
        for p in &self.pooled {
            let mut row = vec![p.attribute.to_string()];
            for d in &self.datasets {
                row.push(pct(d.attributes.iter().find(|a| a.attribute == p.attribute).and_then(|a| a.pd)));
            }
            row.push(pct(p.pd));
            rows.push(row);
        }
        csv_string(rows)
    }

    /// Pooled P, P_e, kappa per attribute, in percent.
    pub fn fleiss_csv(&self) -> String {
        let mut rows = vec![vec!["attribute", "P", "P_e", "kappa", "items"]
            .into_iter()
            .map(String::from)
            .collect()];
        for p in &self.pooled {
            let f = p.fleiss.as_ref();
            rows.push(vec![
                p.attribute.to_string(),
                pct(f.map(|f| f.p)),
                pct(f.map(|f| f.p_e)),
                pct(f.and_then(|f| f.kappa)),
                f.map(|f| f.items).unwrap_or(0).to_string(),
            ]);
        }
        csv_string(rows)
    }

    /// Pooled pattern breakdown: one raw and one soft-filtered row per attribute.
    pub fn patterns_csv(&self) -> String {
        let n = self.pooled.iter().map(|p| p.raters as u32).max().unwrap_or(5);
        let sigs = PatternSignature::all_for(n);
        let mut header = vec!["attribute".to_string(), "filter".into(), "outcome_space".into()];
        header.extend(sigs.iter().map(ToString::to_string));
        header.push("dropped".into());
        let mut k_row = vec!["k_score".to_string(), String::new(), String::new()];
        k_row.extend(sigs.iter().map(|s| {
            s.k_score::<BigRational>()
                .map(|k| format!("{}", k.to_f64()))
                .unwrap_or_default()
        }));
        k_row.push(String::new());
        let mut rows = vec![header, k_row];
        for p in &self.pooled {
            for (filter, row, dropped) in [("raw", &p.raw, 0), ("soft", &p.soft, p.soft_dropped_items)] {
                let mut r = vec![p.attribute.to_string(), filter.to_string(), row.outcome_space.clone()];
                r.extend(sigs.iter().map(|s| row.columns.get(s).copied().unwrap_or(0).to_string()));
                r.push(dropped.to_string());
                rows.push(r);
            }
        }
        csv_string(rows)
    }
}
