//! Validity checklist for reusing legacy trial records, and covariate
//! balance between the legacy concordant stratum and new recruits.
//!
//! Item statuses are asserted by the user; the balance report is evidence
//! for that judgement and never sets a status on its own.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::concordance::{Covariate, RiskRecord};
use crate::numeric::Probability;

/// |SMD| above which the text report flags a covariate. A convention, not a decision rule.
pub const SMD_FLAG_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("{0} group has no records")]
    EmptyGroup(&'static str),
    #[error("covariate '{name}' missing for unit '{unit_id}'")]
    MissingCovariate { name: String, unit_id: String },
    #[error("covariate '{0}' mixes numeric and categorical values")]
    MixedCovariate(String),
    #[error("covariate '{name}' has a non-finite value for unit '{unit_id}'")]
    NonFinite { name: String, unit_id: String },
    #[error("unknown checklist item '{0}'")]
    UnknownItem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    PopulationConsistency,
    OutcomeConsistency,
    InterventionConsistency,
    ImplementationConsistency,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::PopulationConsistency => "Population consistency",
            Category::OutcomeConsistency => "Outcome consistency",
            Category::InterventionConsistency => "Intervention consistency",
            Category::ImplementationConsistency => "Implementation consistency",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Met,
    Unmet,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub id: String,
    pub category: Category,
    pub criterion: String,
    /// Data needed to test the criterion.
    pub evidence: String,
    #[serde(default)]
    pub status: Status,
}

const CATALOG: [(&str, Category, &str, &str); 7] = [
    (
        "population.distributions",
        Category::PopulationConsistency,
        "Distributions of patient covariates and outcomes are similar across trials within concordant and discordant strata.",
        "Baseline covariates and outcomes from both recruitment pools; statistical tests for distributional differences.",
    ),
    (
        "population.eligibility",
        Category::PopulationConsistency,
        "Inclusion/exclusion criteria and recruitment processes are consistent.",
        "Trial protocols, eligibility criteria documentation, recruitment logs, and enrollment patterns.",
    ),
    (
        "population.stability",
        Category::PopulationConsistency,
        "Underlying disease prevalence, risk factor distributions, and treatment responses are stable.",
        "Population-level epidemiological data, institutional case mix data, temporal trends in disease incidence.",
    ),
    (
        "outcome.definitions",
        Category::OutcomeConsistency,
        "Outcome definitions and measurement methods are identical.",
        "Outcome adjudication protocols, endpoint definitions, follow-up procedures.",
    ),
    (
        "intervention.similarity",
        Category::InterventionConsistency,
        "Clinical intervention triggered by legacy and updated AI model recommendations are similar.",
        "Detailed intervention protocols, treatment standardization documentation, care pathway adherence data.",
    ),
    (
        "implementation.compliance",
        Category::ImplementationConsistency,
        "Clinicians comply with AI model recommendations across trials.",
        "Treatment adherence rates and clinician override patterns, time-to-treatment metrics from both trials.",
    ),
    (
        "implementation.measurement",
        Category::ImplementationConsistency,
        "All shared input variables between the legacy and updated AI models are measured identically.",
        "Data dictionaries, measurement protocols, laboratory standardization records, imaging acquisition parameters.",
    ),
];

/// The fixed catalog of reuse criteria, all with status unknown.
pub fn checklist_catalog() -> Vec<ChecklistItem> {
    CATALOG
        .iter()
        .map(|(id, category, criterion, evidence)| ChecklistItem {
            id: id.to_string(),
            category: *category,
            criterion: criterion.to_string(),
            evidence: evidence.to_string(),
            status: Status::Unknown,
        })
        .collect()
}

/// User-asserted statuses keyed by item id; items not listed stay unknown.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecklistStatuses {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<String>,
    pub statuses: BTreeMap<String, Status>,
}

impl ChecklistStatuses {
    /// The catalog with these statuses applied.
    pub fn apply(&self) -> Result<Vec<ChecklistItem>, DiagnosticsError> {
        let mut items = checklist_catalog();
        for (id, status) in &self.statuses {
            let item = items.iter_mut().find(|i| &i.id == id).ok_or_else(|| DiagnosticsError::UnknownItem(id.clone()))?;
            item.status = *status;
        }
        Ok(items)
    }
}

fn signed_infinity<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("+inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceEntry {
    /// Covariate name; one-hot levels are `name=level`.
    pub name: String,
    /// `(mean_new - mean_legacy) / sqrt((s_new^2 + s_legacy^2) / 2)`; infinite when the pooled SD is zero but the means differ.
    #[serde(serialize_with = "signed_infinity")]
    pub smd: f64,
    /// Asymptotic two-sample Kolmogorov-Smirnov p-value.
    pub test_p: Probability,
    pub ks_statistic: f64,
    pub mean_legacy: f64,
    pub mean_new: f64,
    pub n_legacy: usize,
    pub n_new: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BalanceReport {
    pub entries: Vec<BalanceEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Standardized mean difference of `new` relative to `legacy`.
pub fn standardized_mean_difference(legacy: &[f64], new: &[f64]) -> f64 {
    let (m1, s1) = mean_sd(legacy);
    let (m2, s2) = mean_sd(new);
    let pooled = ((s1 * s1 + s2 * s2) / 2.0).sqrt();
    let diff = m2 - m1;
    if pooled > 0.0 {
        diff / pooled
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Largest gap between the two empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small arguments.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=6).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d = ks_statistic(a, b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    (d, kolmogorov_sf((n * m / (n + m)).sqrt() * d))
}

enum Column {
    Numeric(Vec<f64>, Vec<f64>),
    Levels(BTreeSet<String>),
}

fn column(name: &str, legacy: &[RiskRecord], new: &[RiskRecord]) -> Result<Column, DiagnosticsError> {
    let mut numeric = (Vec::new(), Vec::new());
    let mut levels = BTreeSet::new();
    for (group, out) in [(legacy, &mut numeric.0), (new, &mut numeric.1)] {
        for r in group {
            match r.covariates.get(name) {
                None => {
                    return Err(DiagnosticsError::MissingCovariate { name: name.into(), unit_id: r.unit_id.clone() })
                }
                Some(Covariate::Numeric(v)) if !v.is_finite() => {
                    return Err(DiagnosticsError::NonFinite { name: name.into(), unit_id: r.unit_id.clone() })
                }
                Some(Covariate::Numeric(v)) => out.push(*v),
                Some(Covariate::Categorical(s)) => {
                    levels.insert(s.clone());
                }
            }
        }
    }
    match (numeric.0.len() + numeric.1.len(), levels.is_empty()) {
        (_, true) => Ok(Column::Numeric(numeric.0, numeric.1)),
        (0, false) => Ok(Column::Levels(levels)),
        _ => Err(DiagnosticsError::MixedCovariate(name.into())),
    }
}

fn indicator(group: &[RiskRecord], name: &str, level: &str) -> Vec<f64> {
    group
        .iter()
        .map(|r| match r.covariates.get(name) {
            Some(Covariate::Categorical(s)) if s == level => 1.0,
            _ => 0.0,
        })
        .collect()
}

/// Per-covariate SMD and KS test between legacy concordant records and new
/// recruits. Categorical covariates are expanded to one indicator per level.
pub fn balance_report(
    legacy: &[RiskRecord],
    new: &[RiskRecord],
    covariates: &[String],
) -> Result<BalanceReport, DiagnosticsError> {
    if legacy.is_empty() {
        return Err(DiagnosticsError::EmptyGroup("legacy"));
    }
    if new.is_empty() {
        return Err(DiagnosticsError::EmptyGroup("new"));
    }
    let mut report = BalanceReport::default();
    let push = |report: &mut BalanceReport, name: String, a: &[f64], b: &[f64]| {
        let smd = standardized_mean_difference(a, b);
        if smd.is_infinite() {
            report.warnings.push(format!("{name}: zero pooled SD with unequal means; SMD reported as infinite"));
        }
        let (d, p) = ks_test(a, b);
        report.entries.push(BalanceEntry {
            smd,
            test_p: Probability::saturating(p),
            ks_statistic: d,
            mean_legacy: mean_sd(a).0,
            mean_new: mean_sd(b).0,
            n_legacy: a.len(),
            n_new: b.len(),
            name,
        });
    };
    for name in covariates {
        match column(name, legacy, new)? {
            Column::Numeric(a, b) => push(&mut report, name.clone(), &a, &b),
            Column::Levels(levels) => {
                for level in levels {
                    let a = indicator(legacy, name, &level);
                    let b = indicator(new, name, &level);
                    push(&mut report, format!("{name}={level}"), &a, &b);
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ReuseDefensible,
    InsufficientEvidence,
    ReuseNotDefensible,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::ReuseDefensible => "reuse defensible",
            Verdict::InsufficientEvidence => "insufficient evidence",
            Verdict::ReuseNotDefensible => "reuse not defensible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChecklistReport {
    pub verdict: Verdict,
    pub unmet: Vec<String>,
    pub unknown: Vec<String>,
    pub items: Vec<ChecklistItem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balance: Option<BalanceReport>,
    pub smd_flag_threshold: f64,
    pub summary: String,
}

/// Verdict plus a plain-text summary. Any unmet item makes the verdict
/// negative; otherwise any unknown item leaves the evidence insufficient.
pub fn render_checklist(items: &[ChecklistItem], balance: Option<&BalanceReport>) -> ChecklistReport {
    let ids = |s: Status| items.iter().filter(|i| i.status == s).map(|i| i.id.clone()).collect::<Vec<_>>();
    let unmet = ids(Status::Unmet);
    let unknown = ids(Status::Unknown);
    let verdict = if !unmet.is_empty() {
        Verdict::ReuseNotDefensible
    } else if !unknown.is_empty() {
        Verdict::InsufficientEvidence
    } else {
        Verdict::ReuseDefensible
    };

    let mut s = String::new();
    let _ = writeln!(s, "Verdict: {}", verdict.label());
    let mut last = None;
    for item in items {
        if last != Some(item.category) {
            let _ = writeln!(s, "\n{}", item.category.label());
            last = Some(item.category);
        }
        let mark = match item.status {
            Status::Met => "met",
            Status::Unmet => "UNMET",
            Status::Unknown => "unknown",
        };
        let _ = writeln!(s, "  [{mark:>7}] {} ({})", item.criterion, item.id);
        let _ = writeln!(s, "            evidence: {}", item.evidence);
    }
    if let Some(b) = balance {
        let _ = writeln!(s, "\nCovariate balance (|SMD| > {SMD_FLAG_THRESHOLD} flagged by convention)");
        for e in &b.entries {
            let flag = if e.smd.abs() > SMD_FLAG_THRESHOLD { "  <-- imbalance" } else { "" };
            let _ = writeln!(
                s,
                "  {:<24} smd {:>9.4}  ks p {:.4}  n {}/{}{flag}",
                e.name,
                e.smd,
                e.test_p.value(),
                e.n_legacy,
                e.n_new
            );
        }
        for w in &b.warnings {
            let _ = writeln!(s, "  warning: {w}");
        }
    }
    ChecklistReport {
        verdict,
        unmet,
        unknown,
        items: items.to_vec(),
        balance: balance.cloned(),
        smd_flag_threshold: SMD_FLAG_THRESHOLD,
        summary: s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(values: &[f64]) -> Vec<RiskRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut r = RiskRecord::new(format!("u{i}"));
                r.covariates.insert("x".into(), Covariate::Numeric(*v));
                r
            })
            .collect()
    }

    #[test]
    fn catalog_shape() {
        let c = checklist_catalog();
        assert_eq!(c.len(), 7);
        assert!(c.iter().all(|i| i.status == Status::Unknown));
        let count = |cat| c.iter().filter(|i| i.category == cat).count();
        assert_eq!(count(Category::PopulationConsistency), 3);
        assert_eq!(count(Category::OutcomeConsistency), 1);
        assert_eq!(count(Category::InterventionConsistency), 1);
        assert_eq!(count(Category::ImplementationConsistency), 2);
    }

    #[test]
    fn verdicts() {
        let mut items = checklist_catalog();
        assert_eq!(render_checklist(&items, None).verdict, Verdict::InsufficientEvidence);
        items.iter_mut().for_each(|i| i.status = Status::Met);
        assert_eq!(render_checklist(&items, None).verdict, Verdict::ReuseDefensible);
        items[5].status = Status::Unmet;
        let r = render_checklist(&items, None);
        assert_eq!(r.verdict, Verdict::ReuseNotDefensible);
        assert_eq!(r.unmet, vec!["implementation.compliance".to_string()]);
        assert!(r.summary.contains("UNMET"));
    }

    #[test]
    fn identical_samples_balance() {
        let a = records(&[1.0, 2.0, 3.0, 4.0]);
        let r = balance_report(&a, &a, &["x".into()]).unwrap();
        assert_eq!(r.entries[0].smd, 0.0);
        assert_eq!(r.entries[0].test_p.value(), 1.0);
    }

    #[test]
    fn unit_smd() {
        // Means 0 and 1, both sample SDs 1.
        let a = [-1.0, 0.0, 1.0];
        let b = [0.0, 1.0, 2.0];
        assert!((standardized_mean_difference(&a, &b) - 1.0).abs() < 1e-15);
        assert!((standardized_mean_difference(&b, &a) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_groups_with_different_means() {
        let r = balance_report(&records(&[1.0, 1.0]), &records(&[2.0, 2.0]), &["x".into()]).unwrap();
        assert_eq!(r.entries[0].smd, f64::INFINITY);
        assert_eq!(r.warnings.len(), 1);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"+inf\""));
    }

    #[test]
    fn empty_group_is_error() {
        assert_eq!(balance_report(&[], &records(&[1.0]), &["x".into()]), Err(DiagnosticsError::EmptyGroup("legacy")));
    }

    #[test]
    fn categorical_one_hot() {
        let mk = |levels: &[&str]| -> Vec<RiskRecord> {
            levels
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let mut r = RiskRecord::new(format!("u{i}"));
                    r.covariates.insert("site".into(), Covariate::Categorical(l.to_string()));
                    r
                })
                .collect()
        };
        let r = balance_report(&mk(&["a", "b", "a"]), &mk(&["b", "c"]), &["site".into()]).unwrap();
        let names: Vec<_> = r.entries.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["site=a", "site=b", "site=c"]);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // Both series are valid near the switch point.
        let lo = {
            let l: f64 = 1.18;
            let c = std::f64::consts::PI.powi(2) / (8.0 * l * l);
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / l * (1..=6).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum::<f64>()
        };
        assert!((lo - kolmogorov_sf(1.18)).abs() < 1e-12);
        assert!((kolmogorov_sf(1.3580986393225505) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn statuses_reject_unknown_ids() {
        let s = ChecklistStatuses { schema_version: None, statuses: [("nope".to_string(), Status::Met)].into() };
        assert!(matches!(s.apply(), Err(DiagnosticsError::UnknownItem(_))));
    }
}
