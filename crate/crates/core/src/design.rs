//! Sample sizes for a trial of a new risk model, with and without reuse of
//! concordant participants from a completed legacy trial.
//!
//! The high-risk population of the new model splits into the concordant
//! stratum C (also flagged by the legacy model) and the discordant stratum D.
//! The conventional size follows the stratified two-proportion formula; with
//! reuse, concordant participants already randomized in the legacy trial
//! offset the concordant requirement arm by arm, while the discordant
//! requirement must always be recruited.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{self, Probability, RoundingPolicy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("invalid {field}: {constraint}")]
    InvalidField { field: String, constraint: String },
    #[error("effect equals margin: infinite sample size (effect {effect}, margin {margin})")]
    EffectEqualsMargin { effect: f64, margin: f64 },
    #[error(
        "effect {effect} lies on the null side of margin {margin} for a one-sided test of {direction:?}; \
         the trial can never demonstrate benefit"
    )]
    WrongDirection { effect: f64, margin: f64, direction: Direction },
    #[error("a legacy trial is required to plan data reuse")]
    MissingLegacy,
    #[error("sweep needs at least one value")]
    EmptySweep,
}

impl DesignError {
    fn field(field: &str, constraint: impl Into<String>) -> Self {
        DesignError::InvalidField { field: field.to_string(), constraint: constraint.into() }
    }

    /// Name of the offending spec field, when the error is tied to one.
    pub fn field_name(&self) -> Option<&str> {
        match self {
            DesignError::InvalidField { field, .. } => Some(field),
            DesignError::MissingLegacy => Some("legacy"),
            _ => None,
        }
    }
}

/// Event rates under treatment (`1`) and control (`0`) in the concordant
/// (`c`) and discordant (`d`) strata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrataRates {
    pub p_c1: Probability,
    pub p_c0: Probability,
    pub p_d1: Probability,
    pub p_d0: Probability,
}

impl StrataRates {
    pub fn new(p_c1: f64, p_c0: f64, p_d1: f64, p_d0: f64) -> Result<Self, DesignError> {
        let p = |name: &str, v: f64| Probability::new(v).map_err(|_| DesignError::field(name, "must lie in [0, 1]"));
        Ok(StrataRates { p_c1: p("rates.p_c1", p_c1)?, p_c0: p("rates.p_c0", p_c0)?, p_d1: p("rates.p_d1", p_d1)?, p_d0: p("rates.p_d0", p_d0)? })
    }

    /// Same rates in both strata.
    pub fn uniform(treated: f64, control: f64) -> Result<Self, DesignError> {
        StrataRates::new(treated, control, treated, control)
    }
}

/// Which direction of the effect counts as benefit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Benefit is a higher event rate under treatment.
    #[default]
    Increase,
    /// Benefit is a lower event rate under treatment (e.g. cancer incidence).
    Decrease,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increase => 1.0,
            Direction::Decrease => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegacyTrial {
    pub n1: u64,
    pub k1: f64,
    #[serde(default = "full_completion")]
    pub completion: f64,
}

fn full_completion() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    /// One-sided type I error.
    pub alpha: Probability,
    pub power: Probability,
    #[serde(default)]
    pub delta_margin: f64,
    pub cr12: Probability,
    pub cr21: Probability,
    pub rates: StrataRates,
    /// Treatment:control allocation ratio of the new trial.
    pub k2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legacy: Option<LegacyTrial>,
    /// Cost per reused treated participant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_unit_cost: Option<f64>,
    #[serde(default)]
    pub rounding: RoundingPolicy,
    #[serde(default)]
    pub direction: Direction,
    /// Effect used instead of the one implied by `rates` and `cr12`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_effect: Option<f64>,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<(), DesignError> {
        let open = |name: &str, p: Probability| {
            if p.value() > 0.0 && p.value() < 1.0 {
                Ok(())
            } else {
                Err(DesignError::field(name, "must lie in the open interval (0, 1)"))
            }
        };
        open("alpha", self.alpha)?;
        open("power", self.power)?;
        if !self.delta_margin.is_finite() {
            return Err(DesignError::field("delta_margin", "must be finite"));
        }
        if !(self.k2.is_finite() && self.k2 > 0.0) {
            return Err(DesignError::field("k2", "must be a finite positive ratio"));
        }
        if let Some(legacy) = &self.legacy {
            if !(legacy.k1.is_finite() && legacy.k1 > 0.0) {
                return Err(DesignError::field("legacy.k1", "must be a finite positive ratio"));
            }
            if !(0.0..=1.0).contains(&legacy.completion) {
                return Err(DesignError::field("legacy.completion", "must lie in [0, 1]"));
            }
        }
        for (name, cost) in [("unit_cost", self.unit_cost), ("control_unit_cost", self.control_unit_cost)] {
            if let Some(c) = cost {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(DesignError::field(name, "must be a finite non-negative amount"));
                }
            }
        }
        if let Some(e) = self.target_effect {
            if !e.is_finite() {
                return Err(DesignError::field("target_effect", "must be finite"));
            }
        }
        Ok(())
    }

    /// Effect tested by the design: `target_effect` if set, else the one implied by the rates.
    pub fn effect(&self) -> f64 {
        self.target_effect.unwrap_or_else(|| implied_effect(&self.rates, self.cr12))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub delta_effect: f64,
    pub n2_real: f64,
    pub n2: u64,
    pub arm_treat: u64,
    pub arm_control: u64,
    pub n_c: u64,
    pub n_d: u64,
    pub n_c_treat: u64,
    pub n_c_control: u64,
    pub n_d_treat: u64,
    pub n_d_control: u64,
    /// Concordant legacy records available per arm; absent without a legacy trial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub available_treat: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub available_control: Option<u64>,
    pub reuse_treat: u64,
    pub reuse_control: u64,
    pub recruit_treat: u64,
    pub recruit_control: u64,
    pub n2_prime: u64,
    pub n2_prime_real: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub savings: Option<f64>,
}

impl DesignResult {
    pub fn reused(&self) -> u64 {
        self.reuse_treat + self.reuse_control
    }

    /// Aligned plain-text summary.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let rows: Vec<(&str, String)> = vec![
            ("effect (delta)", format!("{:.6}", self.delta_effect)),
            ("N2 (real)", format!("{:.3}", self.n2_real)),
            ("N2", self.n2.to_string()),
            ("  treatment arm", self.arm_treat.to_string()),
            ("  control arm", self.arm_control.to_string()),
            ("concordant stratum", format!("{} ({} / {})", self.n_c, self.n_c_treat, self.n_c_control)),
            ("discordant stratum", format!("{} ({} / {})", self.n_d, self.n_d_treat, self.n_d_control)),
            ("reused", format!("{} ({} / {})", self.reused(), self.reuse_treat, self.reuse_control)),
            ("recruited", format!("{} ({} / {})", self.n2_prime, self.recruit_treat, self.recruit_control)),
            ("N2' (real)", format!("{:.3}", self.n2_prime_real)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>24}");
        }
        if let Some(s) = self.savings {
            let _ = writeln!(out, "{:<width$}  {:>24}", "savings", format!("{s:.2}"));
        }
        out
    }
}

/// Effect among the new model's high-risk units: the concordance-weighted
/// average of the within-stratum risk differences.
pub fn implied_effect(rates: &StrataRates, cr12: Probability) -> f64 {
    let w = cr12.value();
    w * (rates.p_c1.value() - rates.p_c0.value()) + (1.0 - w) * (rates.p_d1.value() - rates.p_d0.value())
}

fn stratum_variance(treated: Probability, control: Probability, k: f64) -> f64 {
    let t = treated.value();
    let c = control.value();
    t * (1.0 - t) / k + c * (1.0 - c)
}

/// Real-valued conventional sample size and the effect it was computed for.
pub fn conventional_size_real(spec: &DesignSpec) -> Result<(f64, f64), DesignError> {
    spec.validate()?;
    let effect = spec.effect();
    let benefit = spec.direction.sign() * effect;
    let gap = benefit - spec.delta_margin;
    if gap == 0.0 {
        return Err(DesignError::EffectEqualsMargin { effect, margin: spec.delta_margin });
    }
    if gap < 0.0 {
        return Err(DesignError::WrongDirection { effect, margin: spec.delta_margin, direction: spec.direction });
    }
    let z_alpha = numeric::normal_quantile(1.0 - spec.alpha.value()).expect("alpha validated");
    let z_beta = numeric::normal_quantile(spec.power.value()).expect("power validated");
    let k = spec.k2;
    let w = spec.cr12.value();
    let r = &spec.rates;
    let mixed = w * stratum_variance(r.p_c1, r.p_c0, k) + (1.0 - w) * stratum_variance(r.p_d1, r.p_d0, k);
    let n = (k + 1.0) * (z_alpha + z_beta).powi(2) / (gap * gap) * mixed;
    Ok((n, effect))
}

/// Conventional design: every participant is recruited fresh.
///
/// Each (stratum, arm) cell is sized from `n2_real` and rounded on its own;
/// arm and stratum totals are sums of cells.
pub fn required_sample_size(spec: &DesignSpec) -> Result<DesignResult, DesignError> {
    let (n2_real, effect) = conventional_size_real(spec)?;
    let k = spec.k2;
    let w = spec.cr12.value();
    let treat_share = k / (k + 1.0);
    let control_share = 1.0 / (k + 1.0);
    let round = |x: f64| spec.rounding.apply(x);
    let n_c_treat = round(n2_real * w * treat_share);
    let n_c_control = round(n2_real * w * control_share);
    let n_d_treat = round(n2_real * (1.0 - w) * treat_share);
    let n_d_control = round(n2_real * (1.0 - w) * control_share);
    let arm_treat = n_c_treat + n_d_treat;
    let arm_control = n_c_control + n_d_control;
    Ok(DesignResult {
        delta_effect: effect,
        n2_real,
        n2: arm_treat + arm_control,
        arm_treat,
        arm_control,
        n_c: n_c_treat + n_c_control,
        n_d: n_d_treat + n_d_control,
        n_c_treat,
        n_c_control,
        n_d_treat,
        n_d_control,
        available_treat: None,
        available_control: None,
        reuse_treat: 0,
        reuse_control: 0,
        recruit_treat: arm_treat,
        recruit_control: arm_control,
        n2_prime: arm_treat + arm_control,
        n2_prime_real: n2_real,
        savings: None,
    })
}

/// Real-valued size with reuse: discordant requirement plus the per-arm
/// concordant deficit left after subtracting legacy concordant participants.
pub fn reuse_size_real(n2_real: f64, n1_real: f64, cr12: f64, cr21: f64, k1: f64, k2: f64) -> f64 {
    let deficit = |new_share: f64, legacy_share: f64| (n2_real * cr12 * new_share - n1_real * cr21 * legacy_share).max(0.0);
    n2_real * (1.0 - cr12) + deficit(k2 / (k2 + 1.0), k1 / (k1 + 1.0)) + deficit(1.0 / (k2 + 1.0), 1.0 / (k1 + 1.0))
}

/// Closed form for equal sizes and ratios in both trials at full completion.
pub fn simplified_reuse_size(n2: f64, cr12: Probability, cr21: Probability) -> f64 {
    let (a, b) = (cr12.value(), cr21.value());
    n2 * ((1.0 - a) + (a - b).max(0.0))
}

/// Design with reuse of concordant legacy participants.
///
/// Concordant legacy records per arm are `n1 * cr21` split at `k1`, rounded
/// with the design's rounding policy; under partial completion that count is scaled
/// and floored. Each arm reuses at most what its concordant cell needs.
pub fn data_reuse_plan(spec: &DesignSpec) -> Result<DesignResult, DesignError> {
    let legacy = spec.legacy.ok_or(DesignError::MissingLegacy)?;
    let mut result = required_sample_size(spec)?;
    let k1 = legacy.k1;
    let cr21 = spec.cr21.value();
    let legacy_concordant = |share: f64| spec.rounding.apply(legacy.n1 as f64 * cr21 * share);
    let available = |share: f64| numeric::floor_count(legacy.completion * legacy_concordant(share) as f64);
    let available_treat = available(k1 / (k1 + 1.0));
    let available_control = available(1.0 / (k1 + 1.0));

    result.available_treat = Some(available_treat);
    result.available_control = Some(available_control);
    result.reuse_treat = available_treat.min(result.n_c_treat);
    result.reuse_control = available_control.min(result.n_c_control);
    result.recruit_treat = result.n_d_treat + (result.n_c_treat - result.reuse_treat);
    result.recruit_control = result.n_d_control + (result.n_c_control - result.reuse_control);
    result.n2_prime = result.recruit_treat + result.recruit_control;
    result.n2_prime_real = reuse_size_real(
        result.n2_real,
        legacy.completion * legacy.n1 as f64,
        spec.cr12.value(),
        cr21,
        k1,
        spec.k2,
    );
    result.savings = savings(spec, result.reuse_treat, result.reuse_control);
    Ok(result)
}

fn savings(spec: &DesignSpec, reuse_treat: u64, reuse_control: u64) -> Option<f64> {
    match (spec.unit_cost, spec.control_unit_cost) {
        (None, None) => None,
        (t, c) => Some(t.unwrap_or(0.0) * reuse_treat as f64 + c.unwrap_or(0.0) * reuse_control as f64),
    }
}

/// Reuse plan when a legacy trial is given and reuse is wanted, conventional otherwise.
pub fn plan(spec: &DesignSpec, reuse: bool) -> Result<DesignResult, DesignError> {
    if reuse && spec.legacy.is_some() {
        data_reuse_plan(spec)
    } else {
        required_sample_size(spec)
    }
}

/// Spec field varied by a what-if sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepField {
    Cr12,
    Cr21,
    Completion,
    UnitCost,
    PC1,
    PC0,
    PD1,
    PD0,
}

impl SweepField {
    pub fn name(self) -> &'static str {
        match self {
            SweepField::Cr12 => "cr12",
            SweepField::Cr21 => "cr21",
            SweepField::Completion => "completion",
            SweepField::UnitCost => "unit_cost",
            SweepField::PC1 => "p_c1",
            SweepField::PC0 => "p_c0",
            SweepField::PD1 => "p_d1",
            SweepField::PD0 => "p_d0",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            SweepField::Cr12,
            SweepField::Cr21,
            SweepField::Completion,
            SweepField::UnitCost,
            SweepField::PC1,
            SweepField::PC0,
            SweepField::PD1,
            SweepField::PD0,
        ]
        .into_iter()
        .find(|f| f.name() == name)
    }

    fn apply(self, spec: &mut DesignSpec, value: f64) -> Result<(), DesignError> {
        let prob = |v: f64| Probability::new(v).map_err(|_| DesignError::field(self.name(), "must lie in [0, 1]"));
        match self {
            SweepField::Cr12 => spec.cr12 = prob(value)?,
            SweepField::Cr21 => spec.cr21 = prob(value)?,
            SweepField::Completion => match spec.legacy.as_mut() {
                Some(l) => l.completion = value,
                None => return Err(DesignError::MissingLegacy),
            },
            SweepField::UnitCost => spec.unit_cost = Some(value),
            SweepField::PC1 => spec.rates.p_c1 = prob(value)?,
            SweepField::PC0 => spec.rates.p_c0 = prob(value)?,
            SweepField::PD1 => spec.rates.p_d1 = prob(value)?,
            SweepField::PD0 => spec.rates.p_d0 = prob(value)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub value: f64,
    pub n2: u64,
    pub n2_prime: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub savings: Option<f64>,
}

/// Re-plans `spec` once per swept value, preserving order.
pub fn sensitivity(spec: &DesignSpec, field: SweepField, values: &[f64]) -> Result<Vec<SensitivityPoint>, DesignError> {
    if values.is_empty() {
        return Err(DesignError::EmptySweep);
    }
    values
        .iter()
        .map(|&value| {
            let mut s = spec.clone();
            field.apply(&mut s, value)?;
            let r = plan(&s, true)?;
            Ok(SensitivityPoint { value, n2: r.n2, n2_prime: r.n2_prime, savings: r.savings })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    pub(crate) fn breast_cancer() -> DesignSpec {
        DesignSpec {
            alpha: p(0.025),
            power: p(0.8),
            delta_margin: 0.0,
            cr12: p(0.466),
            cr21: p(0.466),
            rates: StrataRates::uniform(0.014, 0.02).unwrap(),
            k2: 0.25,
            legacy: Some(LegacyTrial { n1: 20_392, k1: 0.25, completion: 1.0 }),
            unit_cost: Some(1500.0),
            control_unit_cost: None,
            rounding: RoundingPolicy::CeilPerArm,
            direction: Direction::Decrease,
            target_effect: None,
        }
    }

    #[test]
    fn implied_effect_examples() {
        let null = StrataRates::new(0.2, 0.2, 0.4, 0.4).unwrap();
        assert_eq!(implied_effect(&null, p(0.3)), 0.0);
        let r = StrataRates::new(0.3, 0.1, 0.9, 0.0).unwrap();
        assert!((implied_effect(&r, p(1.0)) - 0.2).abs() < 1e-15);
        let r = StrataRates::new(0.3, 0.1, 0.2, 0.2).unwrap();
        assert!((implied_effect(&r, p(0.5)) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn breast_cancer_conventional_arms() {
        let r = required_sample_size(&breast_cancer()).unwrap();
        assert_eq!((r.arm_treat, r.arm_control, r.n2), (4079, 16_313, 20_392));
        assert_eq!(r.n2_prime, r.n2);
    }

    #[test]
    fn breast_cancer_reuse() {
        let r = data_reuse_plan(&breast_cancer()).unwrap();
        assert_eq!((r.reuse_treat, r.reuse_control), (1901, 7602));
        assert_eq!(r.reused(), 9503);
        assert_eq!(r.n2_prime, 10_889);
        assert_eq!(r.savings, Some(2_851_500.0));

        let mut half = breast_cancer();
        half.legacy.as_mut().unwrap().completion = 0.5;
        let r = data_reuse_plan(&half).unwrap();
        assert_eq!((r.reuse_treat, r.reuse_control), (950, 3801));
        assert_eq!(r.reused(), 4751);
        assert_eq!(r.savings, Some(1_425_000.0));
    }

    #[test]
    fn balanced_two_proportion_oracle() {
        let spec = DesignSpec {
            cr12: p(1.0),
            rates: StrataRates::uniform(0.6, 0.4).unwrap(),
            k2: 1.0,
            legacy: None,
            direction: Direction::Increase,
            unit_cost: None,
            ..breast_cancer()
        };
        let r = required_sample_size(&spec).unwrap();
        assert_eq!((r.arm_treat, r.arm_control, r.n2), (95, 95, 190));
    }

    #[test]
    fn doubling_the_gap_quarters_the_size() {
        let base = DesignSpec { target_effect: Some(-0.006), ..breast_cancer() };
        let double = DesignSpec { target_effect: Some(-0.012), ..breast_cancer() };
        let (n1, _) = conventional_size_real(&base).unwrap();
        let (n2, _) = conventional_size_real(&double).unwrap();
        assert!((n1 / n2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn effect_at_margin_is_rejected() {
        let spec = DesignSpec { rates: StrataRates::uniform(0.02, 0.02).unwrap(), ..breast_cancer() };
        assert!(matches!(required_sample_size(&spec), Err(DesignError::EffectEqualsMargin { .. })));
        let wrong = DesignSpec { direction: Direction::Increase, ..breast_cancer() };
        assert!(matches!(required_sample_size(&wrong), Err(DesignError::WrongDirection { .. })));
    }

    #[test]
    fn validation_names_fields() {
        let bad = DesignSpec { k2: 0.0, ..breast_cancer() };
        assert_eq!(bad.validate().unwrap_err().field_name(), Some("k2"));
        let mut bad = breast_cancer();
        bad.legacy.as_mut().unwrap().completion = 1.2;
        assert_eq!(bad.validate().unwrap_err().field_name(), Some("legacy.completion"));
        let bad = DesignSpec { alpha: p(0.0), ..breast_cancer() };
        assert_eq!(bad.validate().unwrap_err().field_name(), Some("alpha"));
        let no_legacy = DesignSpec { legacy: None, ..breast_cancer() };
        assert_eq!(data_reuse_plan(&no_legacy), Err(DesignError::MissingLegacy));
    }

    #[test]
    fn no_concordance_means_no_reuse() {
        let spec = DesignSpec { cr12: p(0.0), ..breast_cancer() };
        let r = data_reuse_plan(&spec).unwrap();
        assert_eq!(r.n2_prime, r.n2);
        assert_eq!(r.reused(), 0);
        assert_eq!(r.n2_prime_real, r.n2_real);
    }

    #[test]
    fn identical_models_need_no_recruitment() {
        let mut spec = DesignSpec { cr12: p(1.0), cr21: p(1.0), ..breast_cancer() };
        let n2 = required_sample_size(&spec).unwrap().n2;
        spec.legacy = Some(LegacyTrial { n1: n2, k1: spec.k2, completion: 1.0 });
        let r = data_reuse_plan(&spec).unwrap();
        assert_eq!(r.n2_prime, 0);
    }

    #[test]
    fn simplified_form() {
        assert!((simplified_reuse_size(1000.0, p(0.4), p(0.4)) - 600.0).abs() < 1e-12);
        assert!((simplified_reuse_size(1000.0, p(1.0), p(0.5)) - 500.0).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_sweeps() {
        let mut spec = breast_cancer();
        spec.legacy = Some(LegacyTrial { n1: 1_000_000, k1: 0.25, completion: 1.0 });
        let pts = sensitivity(&spec, SweepField::Cr12, &[0.0, 0.466, 1.0]).unwrap();
        assert_eq!(pts[0].n2_prime, pts[0].n2);
        assert_eq!(pts[1].n2_prime, 10_889);
        assert_eq!(pts[2].n2_prime, 0);
        let pts = sensitivity(&spec, SweepField::Completion, &[0.0, 1.0]).unwrap();
        assert_eq!(pts[0].savings, Some(0.0));
        assert_eq!(pts[1].savings, Some(2_851_500.0));
        assert_eq!(sensitivity(&spec, SweepField::Cr12, &[]), Err(DesignError::EmptySweep));
        assert!(sensitivity(&spec, SweepField::Cr21, &[1.5]).is_err());
        assert_eq!(SweepField::parse("p_d0"), Some(SweepField::PD0));
        assert_eq!(SweepField::parse("k2"), None);
    }

    #[test]
    fn table_mentions_totals() {
        let table = data_reuse_plan(&breast_cancer()).unwrap().render_table();
        assert!(table.contains("20392"));
        assert!(table.contains("9503 (1901 / 7602)"));
        assert!(table.contains("2851500.00"));
    }
}
