//! Agreement between a legacy and a new risk model's high-risk cohorts.
//!
//! A model flags the top `q` fraction of units by score. Concordance is
//! summarized by the 2x2 table of (legacy flag, new flag) and the two
//! conditional rates `cr12 = P(legacy | new)` and `cr21 = P(new | legacy)`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::Arm;
use crate::numeric::{self, NumericError, Probability, RngStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConcordanceError {
    #[error("no records to classify")]
    Empty,
    #[error("high-risk fraction q must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("unit '{unit_id}' has no score for model '{model}'")]
    MissingScore { unit_id: String, model: String },
    #[error("unit '{unit_id}' has a non-finite score for model '{model}'")]
    NonFiniteScore { unit_id: String, model: String },
    #[error("labelings cover different units ({} differ, e.g. {})", .0.len(), preview(.0))]
    MismatchedUnits(Vec<String>),
    #[error("at least one legacy labeling is required")]
    NoLegacy,
    #[error("q grid must be strictly increasing within (0, 1]")]
    InvalidGrid,
    #[error("no unit is flagged high-risk by the {0} model")]
    NoHighRisk(&'static str),
    #[error("n_bootstrap must be at least 1")]
    NoReplicates,
    #[error("every bootstrap replicate was degenerate")]
    AllReplicatesDegenerate,
    #[error("unit '{unit_id}' has no value for cluster key '{key}'")]
    MissingClusterKey { unit_id: String, key: String },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

fn preview(ids: &[String]) -> String {
    let shown: Vec<&str> = ids.iter().take(5).map(String::as_str).collect();
    shown.join(", ")
}

/// Covariate value attached to a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariate {
    Numeric(f64),
    Categorical(String),
}

impl Covariate {
    fn key(&self) -> String {
        match self {
            Covariate::Numeric(v) => v.to_string(),
            Covariate::Categorical(s) => s.clone(),
        }
    }
}

/// One analysis unit (an exam, an ECG, a patient stay) with its model scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskRecord {
    pub unit_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub covariates: BTreeMap<String, Covariate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_tag: Option<String>,
}

impl RiskRecord {
    pub fn new(unit_id: impl Into<String>) -> Self {
        RiskRecord { unit_id: unit_id.into(), ..Default::default() }
    }

    pub fn with_score(mut self, model: impl Into<String>, score: f64) -> Self {
        self.scores.insert(model.into(), score);
        self
    }
}

/// Binary high-risk flags of one model at fraction `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighRiskLabeling {
    pub model_name: String,
    pub q: f64,
    pub threshold: f64,
    pub labels: BTreeMap<String, bool>,
}

impl HighRiskLabeling {
    pub fn flagged(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().filter(|(_, &l)| l).map(|(id, _)| id.as_str())
    }

    pub fn n_flagged(&self) -> usize {
        self.labels.values().filter(|&&l| l).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceEstimate {
    pub q: f64,
    /// Flagged by both models.
    pub n11: u64,
    /// Flagged by the legacy model only.
    pub n10: u64,
    /// Flagged by the new model only.
    pub n01: u64,
    pub n00: u64,
    pub cr12: Probability,
    pub cr21: Probability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci12: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci21: Option<(f64, f64)>,
    #[serde(default)]
    pub n_bootstrap: u64,
    #[serde(default)]
    pub n_bootstrap_skipped: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ConcordanceEstimate {
    /// Builds the estimate from 2x2 cell counts.
    pub fn from_cells(q: f64, n11: u64, n10: u64, n01: u64, n00: u64) -> Result<Self, ConcordanceError> {
        if n11 + n01 == 0 {
            return Err(ConcordanceError::NoHighRisk("new"));
        }
        if n11 + n10 == 0 {
            return Err(ConcordanceError::NoHighRisk("legacy"));
        }
        Ok(ConcordanceEstimate {
            q,
            n11,
            n10,
            n01,
            n00,
            cr12: Probability::new(n11 as f64 / (n11 + n01) as f64)?,
            cr21: Probability::new(n11 as f64 / (n11 + n10) as f64)?,
            ci12: None,
            ci21: None,
            n_bootstrap: 0,
            n_bootstrap_skipped: 0,
            seed: None,
        })
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }
}

fn check_fraction(q: f64) -> Result<(), ConcordanceError> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(ConcordanceError::InvalidFraction(q))
    }
}

/// Number of units the top-`q` rule must flag before ties: `ceil(q n)`, at least one.
fn required_flags(q: f64, n: usize) -> usize {
    let raw = q * n as f64;
    let k = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    k.clamp(1, n)
}

/// Threshold and mask of the top-`q` rule over raw scores. Every score
/// equal to the threshold is flagged.
pub fn top_fraction_mask(scores: &[f64], q: f64) -> Result<(f64, Vec<bool>), ConcordanceError> {
    check_fraction(q)?;
    if scores.is_empty() {
        return Err(ConcordanceError::Empty);
    }
    let k = required_flags(q, scores.len());
    let mut work = scores.to_vec();
    let (_, kth, _) = work.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    let threshold = *kth;
    let mask = scores.iter().map(|&s| s >= threshold).collect();
    Ok((threshold, mask))
}

pub(crate) fn score_column(records: &[RiskRecord], model: &str) -> Result<Vec<f64>, ConcordanceError> {
    records
        .iter()
        .map(|r| match r.scores.get(model) {
            Some(s) if s.is_finite() => Ok(*s),
            Some(_) => Err(ConcordanceError::NonFiniteScore {
                unit_id: r.unit_id.clone(),
                model: model.to_string(),
            }),
            None => Err(ConcordanceError::MissingScore {
                unit_id: r.unit_id.clone(),
                model: model.to_string(),
            }),
        })
        .collect()
}

/// Flags the top `q` fraction of `records` by `model_name` score.
pub fn classify_top_fraction(
    records: &[RiskRecord],
    model_name: &str,
    q: f64,
) -> Result<HighRiskLabeling, ConcordanceError> {
    check_fraction(q)?;
    if records.is_empty() {
        return Err(ConcordanceError::Empty);
    }
    let scores = score_column(records, model_name)?;
    let (threshold, mask) = top_fraction_mask(&scores, q)?;
    let labels = records.iter().zip(mask).map(|(r, m)| (r.unit_id.clone(), m)).collect();
    Ok(HighRiskLabeling { model_name: model_name.to_string(), q, threshold, labels })
}

fn check_same_units(a: &HighRiskLabeling, b: &HighRiskLabeling) -> Result<(), ConcordanceError> {
    if a.labels.len() == b.labels.len() && a.labels.keys().eq(b.labels.keys()) {
        return Ok(());
    }
    let ka: BTreeSet<&String> = a.labels.keys().collect();
    let kb: BTreeSet<&String> = b.labels.keys().collect();
    let diff = ka.symmetric_difference(&kb).map(|s| (*s).clone()).collect();
    Err(ConcordanceError::MismatchedUnits(diff))
}

fn cells(legacy: &[bool], new: &[bool]) -> [u64; 4] {
    let mut c = [0u64; 4];
    for (&l, &n) in legacy.iter().zip(new) {
        let idx = match (l, n) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        c[idx] += 1;
    }
    c
}

/// 2x2 concordance table and rates; confidence intervals are left unset.
pub fn concordance_rates(
    legacy: &HighRiskLabeling,
    new: &HighRiskLabeling,
) -> Result<ConcordanceEstimate, ConcordanceError> {
    check_same_units(legacy, new)?;
    let l: Vec<bool> = legacy.labels.values().copied().collect();
    let n: Vec<bool> = new.labels.values().copied().collect();
    let [n11, n10, n01, n00] = cells(&l, &n);
    ConcordanceEstimate::from_cells(new.q, n11, n10, n01, n00)
}

/// Fraction of the new model's high-risk units flagged by at least one legacy model.
pub fn union_concordance(
    legacies: &[HighRiskLabeling],
    new: &HighRiskLabeling,
) -> Result<Probability, ConcordanceError> {
    if legacies.is_empty() {
        return Err(ConcordanceError::NoLegacy);
    }
    for l in legacies {
        check_same_units(l, new)?;
    }
    let mut flagged_new = 0u64;
    let mut covered = 0u64;
    for (id, &is_new) in &new.labels {
        if !is_new {
            continue;
        }
        flagged_new += 1;
        if legacies.iter().any(|l| l.labels[id]) {
            covered += 1;
        }
    }
    if flagged_new == 0 {
        return Err(ConcordanceError::NoHighRisk("new"));
    }
    Ok(Probability::new(covered as f64 / flagged_new as f64)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub q: f64,
    pub cr12: Probability,
    pub cr21: Probability,
}

/// cr12 (and cr21) as a function of the high-risk fraction.
pub fn overlap_curve(
    records: &[RiskRecord],
    legacy_model: &str,
    new_model: &str,
    q_grid: &[f64],
) -> Result<Vec<CurvePoint>, ConcordanceError> {
    if q_grid.is_empty() || q_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConcordanceError::InvalidGrid);
    }
    q_grid.iter().try_for_each(|&q| check_fraction(q))?;
    if records.is_empty() {
        return Err(ConcordanceError::Empty);
    }
    let legacy = score_column(records, legacy_model)?;
    let new = score_column(records, new_model)?;
    q_grid
        .iter()
        .map(|&q| {
            let est = estimate_from_scores(&legacy, &new, q)?;
            Ok(CurvePoint { q, cr12: est.cr12, cr21: est.cr21 })
        })
        .collect()
}

fn estimate_from_scores(legacy: &[f64], new: &[f64], q: f64) -> Result<ConcordanceEstimate, ConcordanceError> {
    let (_, l) = top_fraction_mask(legacy, q)?;
    let (_, n) = top_fraction_mask(new, q)?;
    let [n11, n10, n01, n00] = cells(&l, &n);
    ConcordanceEstimate::from_cells(q, n11, n10, n01, n00)
}

/// Resampling unit for the bootstrap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClusterKey {
    PatientId,
    TrialTag,
    Covariate(String),
}

impl ClusterKey {
    pub fn parse(name: &str) -> Self {
        match name {
            "patient_id" => ClusterKey::PatientId,
            "trial_tag" => ClusterKey::TrialTag,
            other => ClusterKey::Covariate(other.to_string()),
        }
    }

    fn name(&self) -> &str {
        match self {
            ClusterKey::PatientId => "patient_id",
            ClusterKey::TrialTag => "trial_tag",
            ClusterKey::Covariate(c) => c,
        }
    }

    fn value(&self, record: &RiskRecord) -> Option<String> {
        match self {
            ClusterKey::PatientId => record.patient_id.clone(),
            ClusterKey::TrialTag => record.trial_tag.clone(),
            ClusterKey::Covariate(c) => record.covariates.get(c).map(Covariate::key),
        }
    }
}

/// Groups of record indices, in order of first appearance.
fn clusters(records: &[RiskRecord], key: Option<&ClusterKey>) -> Result<Vec<Vec<usize>>, ConcordanceError> {
    let Some(key) = key else {
        return Ok((0..records.len()).map(|i| vec![i]).collect());
    };
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let v = key.value(r).ok_or_else(|| ConcordanceError::MissingClusterKey {
            unit_id: r.unit_id.clone(),
            key: key.name().to_string(),
        })?;
        let g = *index.entry(v).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    Ok(groups)
}

/// Percentile of a sorted sample with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Point estimate plus 95% percentile-bootstrap intervals for cr12 and cr21.
///
/// Replicate `b` draws from `RngStream::new(seed, b)`, so results do not
/// depend on how replicates are scheduled across threads. Each replicate
/// re-applies the top-`q` rule to the resampled scores.
pub fn bootstrap_ci(
    records: &[RiskRecord],
    legacy_model: &str,
    new_model: &str,
    q: f64,
    n_bootstrap: u64,
    seed: u64,
    cluster_by: Option<&ClusterKey>,
) -> Result<ConcordanceEstimate, ConcordanceError> {
    if n_bootstrap == 0 {
        return Err(ConcordanceError::NoReplicates);
    }
    check_fraction(q)?;
    if records.is_empty() {
        return Err(ConcordanceError::Empty);
    }
    let legacy = score_column(records, legacy_model)?;
    let new = score_column(records, new_model)?;
    let mut point = estimate_from_scores(&legacy, &new, q)?;
    let groups = clusters(records, cluster_by)?;

    let replicates: Vec<Option<(f64, f64)>> = (0..n_bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(seed, b).rng();
            let mut ls = Vec::with_capacity(legacy.len());
            let mut ns = Vec::with_capacity(new.len());
            for _ in 0..groups.len() {
                for &i in &groups[rng.random_range(0..groups.len())] {
                    ls.push(legacy[i]);
                    ns.push(new[i]);
                }
            }
            estimate_from_scores(&ls, &ns, q)
                .ok()
                .map(|e| (e.cr12.value(), e.cr21.value()))
        })
        .collect();

    let mut r12: Vec<f64> = replicates.iter().flatten().map(|r| r.0).collect();
    let mut r21: Vec<f64> = replicates.iter().flatten().map(|r| r.1).collect();
    if r12.is_empty() {
        return Err(ConcordanceError::AllReplicatesDegenerate);
    }
    r12.sort_by(f64::total_cmp);
    r21.sort_by(f64::total_cmp);
    point.ci12 = Some((percentile(&r12, 0.025), percentile(&r12, 0.975)));
    point.ci21 = Some((percentile(&r21, 0.025), percentile(&r21, 0.975)));
    point.n_bootstrap = n_bootstrap;
    point.n_bootstrap_skipped = n_bootstrap - r12.len() as u64;
    point.seed = Some(seed);
    Ok(point)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMode {
    Asymptotic,
    Exact,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub b: u64,
    pub c: u64,
    pub statistic: f64,
    pub p_value: Probability,
    /// Mode actually used (`auto` resolves to one of the other two).
    pub mode: McNemarMode,
}

/// Below this many discordant pairs `auto` uses the exact test.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;

/// McNemar's test on discordant pair counts `b` and `c`, without continuity correction.
pub fn mcnemar_test(b: u64, c: u64, mode: McNemarMode) -> Result<McNemarResult, ConcordanceError> {
    let n = b + c;
    let mode = match mode {
        McNemarMode::Auto if n < MCNEMAR_EXACT_BELOW => McNemarMode::Exact,
        McNemarMode::Auto => McNemarMode::Asymptotic,
        m => m,
    };
    if n == 0 {
        return Ok(McNemarResult { b, c, statistic: 0.0, p_value: Probability::ONE, mode });
    }
    let diff = b as f64 - c as f64;
    let statistic = diff * diff / n as f64;
    let p = match mode {
        McNemarMode::Exact => numeric::exact_binomial_two_sided(b, n)?,
        _ => numeric::chi_square1_sf(statistic)?,
    };
    Ok(McNemarResult { b, c, statistic, p_value: Probability::saturating(p), mode })
}

/// Paired comparison of two legacy models on the new model's high-risk cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegacyComparison {
    pub legacy_a: String,
    pub legacy_b: String,
    pub cr12_a: Probability,
    pub cr12_b: Probability,
    pub test: McNemarResult,
}

/// McNemar comparison of `cr12` between two legacy models. Pairs are the
/// new model's high-risk units; `b` counts units flagged by `a` only and
/// `c` those flagged by `b` only.
pub fn compare_legacies(
    a: &HighRiskLabeling,
    b: &HighRiskLabeling,
    new: &HighRiskLabeling,
    mode: McNemarMode,
) -> Result<LegacyComparison, ConcordanceError> {
    check_same_units(a, new)?;
    check_same_units(b, new)?;
    let (mut only_a, mut only_b, mut both, mut n) = (0u64, 0u64, 0u64, 0u64);
    for (id, &is_new) in &new.labels {
        if !is_new {
            continue;
        }
        n += 1;
        match (a.labels[id], b.labels[id]) {
            (true, true) => both += 1,
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            (false, false) => {}
        }
    }
    if n == 0 {
        return Err(ConcordanceError::NoHighRisk("new"));
    }
    Ok(LegacyComparison {
        legacy_a: a.model_name.clone(),
        legacy_b: b.model_name.clone(),
        cr12_a: Probability::new((both + only_a) as f64 / n as f64)?,
        cr12_b: Probability::new((both + only_b) as f64 / n as f64)?,
        test: mcnemar_test(only_a, only_b, mode)?,
    })
}
