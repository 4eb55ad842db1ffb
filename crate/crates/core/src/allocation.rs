//! Data selection and work allocation.
//!
//! The dataset goal `G` is split into an inter-agreement pool, annotated by
//! every annotator, and an exclusive pool whose images are each claimed by a
//! single annotator. Each annotator first works through the inter pool until
//! they have annotated `q = ceil(f·G)` agents there, then transparently moves
//! on to claiming exclusive images until the goal is covered.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{AgentKind, CanonicalImage, Split};

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error("at least 2 annotators are required for inter-agreement, got {0}")]
    TooFewAnnotators(usize),
    #[error("fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(Fraction),
    #[error("area thresholds must be positive")]
    BadThreshold,
    #[error("duplicate annotator id `{0}`")]
    DuplicateAnnotator(String),
    #[error("goal {goal} exceeds the {eligible} eligible agents (max coverage {coverage:.4} of goal)")]
    GoalExceedsEligible {
        goal: u64,
        eligible: u64,
        /// `eligible / goal`.
        coverage: f64,
    },
    #[error("annotator `{0}` is not registered in the plan")]
    UnknownAnnotator(String),
    #[error("image `{image}` is not the current assignment of `{annotator}`")]
    NotAssigned { annotator: String, image: String },
}

/// Exact fraction in `(0, 1)`, parsed from decimal (`0.06`) or `a/b` notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction(Ratio<u64>);

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        Self(Ratio::new(num, den))
    }

    pub fn ratio(&self) -> Ratio<u64> {
        self.0
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// `ceil(self · n)`, computed exactly.
    pub fn ceil_of(&self, n: u64) -> u64 {
        let num = u128::from(*self.0.numer()) * u128::from(n);
        let den = u128::from(*self.0.denom());
        num.div_ceil(den) as u64
    }
}

/// Inter-agreement share used throughout: six percent.
pub const DEFAULT_FRACTION: Fraction = Fraction(Ratio::new_raw(3, 50));

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (num, den) = (*self.0.numer(), *self.0.denom());
        // Terminating decimal when the denominator is 2^a·5^b.
        let mut d = den;
        let mut digits = 0u32;
        while d % 10 == 0 || d % 2 == 0 || d % 5 == 0 {
            if d % 10 == 0 {
                d /= 10;
            } else if d % 2 == 0 {
                d /= 2;
            } else {
                d /= 5;
            }
            digits += 1;
        }
        if d == 1 && digits <= 18 {
            let scale = 10u128.pow(digits);
            let scaled = u128::from(num) * scale / u128::from(den);
            let int = scaled / scale;
            let frac = scaled % scale;
            if digits == 0 {
                return write!(f, "{int}");
            }
            let s = format!("{frac:0width$}", width = digits as usize);
            write!(f, "{int}.{}", s.trim_end_matches('0'))
        } else {
            write!(f, "{num}/{den}")
        }
    }
}

impl FromStr for Fraction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let a: u64 = a.trim().parse().map_err(|e| format!("bad fraction `{s}`: {e}"))?;
            let b: u64 = b.trim().parse().map_err(|e| format!("bad fraction `{s}`: {e}"))?;
            if b == 0 {
                return Err(format!("bad fraction `{s}`: zero denominator"));
            }
            return Ok(Self::new(a, b));
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty()
            || !int.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
            || frac.len() > 18
        {
            return Err(format!("bad fraction `{s}`"));
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|e| format!("bad fraction `{s}`: {e}"))? };
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|e| format!("bad fraction `{s}`: {e}"))? };
        let num = int
            .checked_mul(den)
            .and_then(|x| x.checked_add(frac_v))
            .ok_or_else(|| format!("bad fraction `{s}`: overflow"))?;
        Ok(Self::new(num, den))
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-annotator inter-agreement quota `q = ceil(f·G)` (agents).
pub fn compute_quota(goal: u64, annotators: usize, fraction: Fraction) -> Result<u64, AllocationError> {
    if annotators < 2 {
        return Err(AllocationError::TooFewAnnotators(annotators));
    }
    let r = fraction.ratio();
    if *r.numer() == 0 || r.numer() >= r.denom() {
        return Err(AllocationError::BadFraction(fraction));
    }
    Ok(fraction.ceil_of(goal))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub person_min_area: f64,
    pub vehicle_min_area: f64,
    /// Keep `area >= threshold` when true, `area > threshold` otherwise.
    pub inclusive: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            person_min_area: 6000.0,
            vehicle_min_area: 8000.0,
            inclusive: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), AllocationError> {
        if self.person_min_area > 0.0 && self.vehicle_min_area > 0.0 {
            Ok(())
        } else {
            Err(AllocationError::BadThreshold)
        }
    }

    pub fn threshold(&self, kind: AgentKind) -> f64 {
        match kind {
            AgentKind::Person => self.person_min_area,
            AgentKind::Vehicle => self.vehicle_min_area,
        }
    }

    pub fn passes(&self, kind: AgentKind, area: f64) -> bool {
        let t = self.threshold(kind);
        if self.inclusive {
            area >= t
        } else {
            area > t
        }
    }

    /// Eligible top-level agents of one image, in image order.
    pub fn eligible_agents<'a>(&self, image: &'a CanonicalImage) -> Vec<&'a crate::model::CanonicalAgent> {
        if image.image_meta.discard_flag {
            return Vec::new();
        }
        image
            .agents
            .iter()
            .filter(|a| a.kind().is_some_and(|k| self.passes(k, a.bbox.area())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibleImage {
    pub image_id: String,
    pub split: Split,
    /// uuids of the agents passing the area filter.
    pub agents: Vec<String>,
}

/// Images with at least one eligible agent, sorted by image id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibleIndex {
    pub dataset_id: String,
    pub images: Vec<EligibleImage>,
}

impl EligibleIndex {
    pub fn total_agents(&self) -> u64 {
        self.images.iter().map(|i| i.agents.len() as u64).sum()
    }

    pub fn contains(&self, image_id: &str, uuid: &str) -> bool {
        self.images
            .binary_search_by(|i| i.image_id.as_str().cmp(image_id))
            .ok()
            .is_some_and(|i| self.images[i].agents.iter().any(|u| u == uuid))
    }
}

/// Marks agents eligible by kind-specific bbox area; discarded images and
/// images without eligible agents are left out.
pub fn filter_by_area<'a>(
    dataset_id: &str,
    images: impl IntoIterator<Item = &'a CanonicalImage>,
    config: &FilterConfig,
) -> EligibleIndex {
    let mut out: Vec<EligibleImage> = images
        .into_iter()
        .filter_map(|img| {
            let agents: Vec<String> = config
                .eligible_agents(img)
                .into_iter()
                .map(|a| a.uuid.clone())
                .collect();
            (!agents.is_empty()).then(|| EligibleImage {
                image_id: img.image_meta.image_id.clone(),
                split: img.image_meta.split,
                agents,
            })
        })
        .collect();
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    EligibleIndex {
        dataset_id: dataset_id.to_string(),
        images: out,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Inter,
    Exclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub image_id: String,
    pub split: Split,
    pub eligible_agents: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub image_id: String,
    pub pool: PoolKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NextImage {
    Image(Assignment),
    Done,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorState {
    pub annotator_id: String,
    pub inter_agents: u64,
    pub exclusive_agents: u64,
    pub inter_completed: BTreeSet<String>,
    pub exclusive_completed: BTreeSet<String>,
    /// Image handed out and not yet completed.
    pub current: Option<Assignment>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanProgress {
    pub annotators: BTreeMap<String, AnnotatorState>,
    /// Exclusive image id → claiming annotator.
    pub claims: BTreeMap<String, String>,
    pub exclusive_cursor: usize,
    pub claimed_exclusive_agents: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub dataset_id: String,
    pub goal: u64,
    pub annotators: Vec<String>,
    pub fraction: Fraction,
    pub quota: u64,
    pub seed: u64,
    pub filter: FilterConfig,
    pub inter_pool: Vec<PoolEntry>,
    pub exclusive_pool: Vec<PoolEntry>,
    pub progress: PlanProgress,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub goal: u64,
    pub annotators: Vec<String>,
    pub fraction: Fraction,
    pub seed: u64,
}

impl PlanRequest {
    /// Annotators named `annotator_1..=annotator_n`.
    pub fn numbered(goal: u64, n: usize, fraction: Fraction, seed: u64) -> Self {
        Self {
            goal,
            annotators: (1..=n).map(|i| format!("annotator_{i}")).collect(),
            fraction,
            seed,
        }
    }
}

/// Seeded shuffle per split, merged so every prefix keeps the split
/// proportions as closely as possible.
fn stratified_order(index: &EligibleIndex, seed: u64) -> Vec<&EligibleImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<Vec<&EligibleImage>> = Split::ALL
        .iter()
        .map(|s| index.images.iter().filter(|i| i.split == *s).collect())
        .collect();
    for s in &mut strata {
        s.shuffle(&mut rng);
    }
    let mut taken = vec![0usize; strata.len()];
    let total: usize = strata.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total);
    while out.len() < total {
        // Pick the stratum whose next element sits earliest in its own
        // proportional timeline: minimise (2·taken + 1) / len.
        let mut best: Option<usize> = None;
        for (i, s) in strata.iter().enumerate() {
            if taken[i] >= s.len() {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let lhs = (2 * taken[i] + 1) as u128 * strata[b].len() as u128;
                    let rhs = (2 * taken[b] + 1) as u128 * s.len() as u128;
                    if lhs < rhs {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let b = best.expect("remaining elements imply a stratum");
        out.push(strata[b][taken[b]]);
        taken[b] += 1;
    }
    out
}

/// Builds the allocation plan; a pure function of its inputs.
pub fn build_plan(
    index: &EligibleIndex,
    filter: FilterConfig,
    request: &PlanRequest,
) -> Result<AllocationPlan, AllocationError> {
    filter.validate()?;
    let quota = compute_quota(request.goal, request.annotators.len(), request.fraction)?;
    let mut seen = BTreeSet::new();
    for a in &request.annotators {
        if !seen.insert(a) {
            return Err(AllocationError::DuplicateAnnotator(a.clone()));
        }
    }
    let eligible = index.total_agents();
    if request.goal > eligible {
        return Err(AllocationError::GoalExceedsEligible {
            goal: request.goal,
            eligible,
            coverage: eligible as f64 / request.goal as f64,
        });
    }

    let mut inter_pool = Vec::new();
    let mut exclusive_pool = Vec::new();
    if request.goal > 0 {
        let mut inter_agents = 0u64;
        for img in stratified_order(index, request.seed) {
            let entry = PoolEntry {
                image_id: img.image_id.clone(),
                split: img.split,
                eligible_agents: img.agents.len() as u64,
            };
            if inter_agents < quota {
                inter_agents += entry.eligible_agents;
                inter_pool.push(entry);
            } else {
                exclusive_pool.push(entry);
            }
        }
    }

    let progress = PlanProgress {
        annotators: request
            .annotators
            .iter()
            .map(|a| {
                (
                    a.clone(),
                    AnnotatorState {
                        annotator_id: a.clone(),
                        ..AnnotatorState::default()
                    },
                )
            })
            .collect(),
        ..PlanProgress::default()
    };

    Ok(AllocationPlan {
        dataset_id: index.dataset_id.clone(),
        goal: request.goal,
        annotators: request.annotators.clone(),
        fraction: request.fraction,
        quota,
        seed: request.seed,
        filter,
        inter_pool,
        exclusive_pool,
        progress,
    })
}

impl AllocationPlan {
    pub fn inter_pool_agents(&self) -> u64 {
        self.inter_pool.iter().map(|e| e.eligible_agents).sum()
    }

    pub fn pool_entry(&self, image_id: &str) -> Option<(PoolKind, &PoolEntry)> {
        self.inter_pool
            .iter()
            .find(|e| e.image_id == image_id)
            .map(|e| (PoolKind::Inter, e))
            .or_else(|| {
                self.exclusive_pool
                    .iter()
                    .find(|e| e.image_id == image_id)
                    .map(|e| (PoolKind::Exclusive, e))
            })
    }

    pub fn is_inter(&self, image_id: &str) -> bool {
        self.inter_pool.iter().any(|e| e.image_id == image_id)
    }

    pub fn annotator(&self, id: &str) -> Result<&AnnotatorState, AllocationError> {
        self.progress
            .annotators
            .get(id)
            .ok_or_else(|| AllocationError::UnknownAnnotator(id.to_string()))
    }

    /// Distinct agents covered: the inter pool once plus claimed exclusive images.
    pub fn covered_agents(&self) -> u64 {
        self.inter_pool_agents() + self.progress.claimed_exclusive_agents
    }

    fn inter_done(&self, state: &AnnotatorState) -> bool {
        state.inter_agents >= self.quota
            || self
                .inter_pool
                .iter()
                .all(|e| state.inter_completed.contains(&e.image_id))
    }

    /// Whether this annotator has nothing left to do.
    pub fn is_done_for(&self, annotator: &str) -> Result<bool, AllocationError> {
        let state = self.annotator(annotator)?;
        Ok(state.current.is_none()
            && self.inter_done(state)
            && (self.covered_agents() >= self.goal
                || self.progress.exclusive_cursor >= self.exclusive_pool.len()))
    }

    /// The image [`next_image`](Self::next_image) would hand out, without
    /// changing any state.
    ///
    /// An unfinished assignment comes back unchanged. Otherwise the next inter
    /// image while the annotator's inter count is below the quota, then the
    /// next unclaimed exclusive image. `Done` once the goal is covered or both
    /// pools are exhausted.
    pub fn peek_next(&self, annotator: &str) -> Result<NextImage, AllocationError> {
        let state = self.annotator(annotator)?;
        if let Some(current) = &state.current {
            return Ok(NextImage::Image(current.clone()));
        }
        if !self.inter_done(state) {
            let next = self
                .inter_pool
                .iter()
                .find(|e| !state.inter_completed.contains(&e.image_id))
                .expect("inter_done is false so an uncompleted inter image exists");
            return Ok(NextImage::Image(Assignment {
                image_id: next.image_id.clone(),
                pool: PoolKind::Inter,
            }));
        }
        if self.covered_agents() >= self.goal {
            return Ok(NextImage::Done);
        }
        Ok(match self.exclusive_pool.get(self.progress.exclusive_cursor) {
            Some(entry) => NextImage::Image(Assignment {
                image_id: entry.image_id.clone(),
                pool: PoolKind::Exclusive,
            }),
            None => NextImage::Done,
        })
    }

    /// Hands out the annotator's next image; exclusive images are claimed
    /// with this call.
    pub fn next_image(&mut self, annotator: &str) -> Result<NextImage, AllocationError> {
        let next = self.peek_next(annotator)?;
        if let NextImage::Image(a) = &next {
            if self.annotator(annotator)?.current.is_none() {
                self.assign(annotator, a)?;
            }
        }
        Ok(next)
    }

    /// Applies a hand-out computed by [`peek_next`](Self::peek_next).
    pub fn assign(&mut self, annotator: &str, assignment: &Assignment) -> Result<(), AllocationError> {
        match assignment.pool {
            PoolKind::Inter => self.assign_inter(annotator, &assignment.image_id),
            PoolKind::Exclusive => self.claim(annotator, &assignment.image_id),
        }
    }

    /// Claims the exclusive image at the cursor for `annotator`.
    ///
    /// Exposed so journal replay can re-apply recorded claims in order.
    pub fn claim(&mut self, annotator: &str, image_id: &str) -> Result<(), AllocationError> {
        self.annotator(annotator)?;
        let cursor = self.progress.exclusive_cursor;
        let entry = match self.exclusive_pool.get(cursor) {
            Some(e) if e.image_id == image_id => e.clone(),
            _ => {
                return Err(AllocationError::NotAssigned {
                    annotator: annotator.to_string(),
                    image: image_id.to_string(),
                })
            }
        };
        self.progress.exclusive_cursor += 1;
        self.progress.claimed_exclusive_agents += entry.eligible_agents;
        self.progress
            .claims
            .insert(entry.image_id.clone(), annotator.to_string());
        self.state_mut(annotator).current = Some(Assignment {
            image_id: entry.image_id,
            pool: PoolKind::Exclusive,
        });
        Ok(())
    }

    /// Re-issues an inter assignment (journal replay of a hand-out).
    pub fn assign_inter(&mut self, annotator: &str, image_id: &str) -> Result<(), AllocationError> {
        let state = self.annotator(annotator)?;
        if !self.is_inter(image_id) || state.inter_completed.contains(image_id) {
            return Err(AllocationError::NotAssigned {
                annotator: annotator.to_string(),
                image: image_id.to_string(),
            });
        }
        self.state_mut(annotator).current = Some(Assignment {
            image_id: image_id.to_string(),
            pool: PoolKind::Inter,
        });
        Ok(())
    }

    /// Marks the annotator's current image as fully annotated.
    pub fn complete_image(&mut self, annotator: &str, image_id: &str) -> Result<(), AllocationError> {
        let state = self.annotator(annotator)?;
        let current = match &state.current {
            Some(a) if a.image_id == image_id => a.clone(),
            _ => {
                return Err(AllocationError::NotAssigned {
                    annotator: annotator.to_string(),
                    image: image_id.to_string(),
                })
            }
        };
        let agents = self
            .pool_entry(image_id)
            .map(|(_, e)| e.eligible_agents)
            .unwrap_or(0);
        let state = self.state_mut(annotator);
        state.current = None;
        match current.pool {
            PoolKind::Inter => {
                state.inter_completed.insert(current.image_id);
                state.inter_agents += agents;
            }
            PoolKind::Exclusive => {
                state.exclusive_completed.insert(current.image_id);
                state.exclusive_agents += agents;
            }
        }
        Ok(())
    }

    fn state_mut(&mut self, annotator: &str) -> &mut AnnotatorState {
        self.progress
            .annotators
            .get_mut(annotator)
            .expect("annotator checked by caller")
    }

    /// The plan with progress counters reset.
    pub fn pristine(&self) -> Self {
        let mut p = self.clone();
        p.progress = PlanProgress {
            annotators: self
                .annotators
                .iter()
                .map(|a| {
                    (
                        a.clone(),
                        AnnotatorState {
                            annotator_id: a.clone(),
                            ..AnnotatorState::default()
                        },
                    )
                })
                .collect(),
            ..PlanProgress::default()
        };
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(n: usize, agents_per_image: usize) -> EligibleIndex {
        EligibleIndex {
            dataset_id: "fx".into(),
            images: (0..n)
                .map(|i| EligibleImage {
                    image_id: format!("img{i:04}"),
                    split: if i % 4 == 0 { Split::Val } else { Split::Train },
                    agents: (0..agents_per_image).map(|j| format!("a{i}-{j}")).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn fraction_parsing_is_exact() {
        let f: Fraction = "0.06".parse().unwrap();
        assert_eq!(f, Fraction::new(3, 50));
        assert_eq!(f, DEFAULT_FRACTION);
        assert_eq!(f.to_string(), "0.06");
        assert_eq!("1/3".parse::<Fraction>().unwrap().to_string(), "1/3");
        assert_eq!("0.5".parse::<Fraction>().unwrap().to_string(), "0.5");
        assert!("abc".parse::<Fraction>().is_err());
        assert!(".".parse::<Fraction>().is_err());
    }

    #[test]
    fn quota_examples() {
        let f = DEFAULT_FRACTION;
        assert_eq!(compute_quota(1000, 5, f), Ok(60));
        assert_eq!(compute_quota(42000, 5, f), Ok(2520));
        assert_eq!(compute_quota(30000, 5, f), Ok(1800));
        assert_eq!(compute_quota(50, 5, f), Ok(3));
        assert_eq!(compute_quota(1001, 5, f), Ok(61));
        assert_eq!(compute_quota(10, 1, f), Err(AllocationError::TooFewAnnotators(1)));
        assert!(compute_quota(10, 3, Fraction::new(1, 1)).is_err());
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let c = FilterConfig::default();
        let kept = [5999.0, 6000.0, 12000.0]
            .iter()
            .filter(|a| c.passes(AgentKind::Person, **a))
            .count();
        assert_eq!(kept, 2);
        assert!(c.passes(AgentKind::Vehicle, 8000.0));
        let strict = FilterConfig {
            inclusive: false,
            ..c
        };
        assert!(!strict.passes(AgentKind::Vehicle, 8000.0));
    }

    #[test]
    fn hundred_single_agent_images() {
        let plan = build_plan(
            &index(100, 1),
            FilterConfig::default(),
            &PlanRequest::numbered(50, 5, DEFAULT_FRACTION, 7),
        )
        .unwrap();
        assert_eq!(plan.quota, 3);
        assert_eq!(plan.inter_pool.len(), 3);
        assert_eq!(plan.exclusive_pool.len(), 97);
        let inter: BTreeSet<_> = plan.inter_pool.iter().map(|e| &e.image_id).collect();
        assert!(plan.exclusive_pool.iter().all(|e| !inter.contains(&e.image_id)));
    }

    #[test]
    fn zero_goal_gives_empty_pools() {
        let plan = build_plan(
            &index(10, 1),
            FilterConfig::default(),
            &PlanRequest::numbered(0, 5, DEFAULT_FRACTION, 1),
        )
        .unwrap();
        assert!(plan.inter_pool.is_empty() && plan.exclusive_pool.is_empty());
        let mut plan = plan;
        assert_eq!(plan.next_image("annotator_1"), Ok(NextImage::Done));
    }

    #[test]
    fn goal_above_eligible_reports_coverage() {
        let err = build_plan(
            &index(10, 2),
            FilterConfig::default(),
            &PlanRequest::numbered(40, 5, DEFAULT_FRACTION, 1),
        )
        .unwrap_err();
        match err {
            AllocationError::GoalExceedsEligible { eligible, coverage, .. } => {
                assert_eq!(eligible, 20);
                assert_eq!(coverage, 0.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn plan_is_pure_in_seed() {
        let req = PlanRequest::numbered(50, 5, DEFAULT_FRACTION, 3);
        let a = build_plan(&index(100, 1), FilterConfig::default(), &req).unwrap();
        let b = build_plan(&index(100, 1), FilterConfig::default(), &req).unwrap();
        assert_eq!(a, b);
        let c = build_plan(
            &index(100, 1),
            FilterConfig::default(),
            &PlanRequest { seed: 4, ..req },
        )
        .unwrap();
        assert_ne!(a.inter_pool, c.inter_pool);
    }

    #[test]
    fn stratification_keeps_split_proportions() {
        let idx = index(100, 1);
        let order = stratified_order(&idx, 11);
        let val_in_first_20 = order[..20].iter().filter(|i| i.split == Split::Val).count();
        assert_eq!(val_in_first_20, 5);
    }

    #[test]
    fn transparent_transition_to_exclusive() {
        let mut plan = build_plan(
            &index(100, 1),
            FilterConfig::default(),
            &PlanRequest::numbered(50, 5, DEFAULT_FRACTION, 7),
        )
        .unwrap();
        let first_inter = plan.inter_pool[0].image_id.clone();
        let NextImage::Image(a) = plan.next_image("annotator_1").unwrap() else {
            panic!()
        };
        assert_eq!(a.image_id, first_inter);
        assert_eq!(a.pool, PoolKind::Inter);
        // resumes the same assignment until completed
        assert_eq!(plan.next_image("annotator_1").unwrap(), NextImage::Image(a.clone()));
        plan.complete_image("annotator_1", &a.image_id).unwrap();
        for _ in 0..2 {
            let NextImage::Image(a) = plan.next_image("annotator_1").unwrap() else {
                panic!()
            };
            plan.complete_image("annotator_1", &a.image_id).unwrap();
        }
        assert_eq!(plan.annotator("annotator_1").unwrap().inter_agents, 3);
        let NextImage::Image(a) = plan.next_image("annotator_1").unwrap() else {
            panic!()
        };
        assert_eq!(a.pool, PoolKind::Exclusive);
        assert_eq!(a.image_id, plan.exclusive_pool[0].image_id);
        assert_eq!(plan.progress.claims[&a.image_id], "annotator_1");
        // another annotator never sees the claimed image
        for _ in 0..3 {
            let NextImage::Image(b) = plan.next_image("annotator_2").unwrap() else {
                panic!()
            };
            plan.complete_image("annotator_2", &b.image_id).unwrap();
        }
        let NextImage::Image(b) = plan.next_image("annotator_2").unwrap() else {
            panic!()
        };
        assert_eq!(b.image_id, plan.exclusive_pool[1].image_id);
    }

    #[test]
    fn completion_requires_assignment() {
        let mut plan = build_plan(
            &index(10, 1),
            FilterConfig::default(),
            &PlanRequest::numbered(5, 2, DEFAULT_FRACTION, 7),
        )
        .unwrap();
        assert!(plan.complete_image("annotator_1", "img0000").is_err());
        assert!(matches!(
            plan.next_image("nobody"),
            Err(AllocationError::UnknownAnnotator(_))
        ));
    }

    #[test]
    fn goal_met_ends_exclusive_claims() {
        let mut plan = build_plan(
            &index(20, 1),
            FilterConfig::default(),
            &PlanRequest::numbered(10, 2, DEFAULT_FRACTION, 7),
        )
        .unwrap();
        assert_eq!(plan.quota, 1);
        let mut served = 0;
        for who in ["annotator_1", "annotator_2"].iter().cycle().take(40) {
            if let NextImage::Image(a) = plan.next_image(who).unwrap() {
                plan.complete_image(who, &a.image_id).unwrap();
                served += 1;
            }
        }
        // 1 inter image twice + 9 exclusive images
        assert_eq!(served, 11);
        assert_eq!(plan.covered_agents(), 10);
        assert!(plan.is_done_for("annotator_1").unwrap());
    }
}
