//! Stratified estimate of the effect in the new model's high-risk population
//! from concordant (possibly reused) and discordant trial data, and the
//! one-sided test against a margin.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::Direction;
use crate::numeric::{self, Probability};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("cell {0} has no participants but carries non-zero weight")]
    EmptyCell(CellId),
    #[error("cell {cell} reports {events} events among {n} participants")]
    EventsExceedCount { cell: CellId, events: u64, n: u64 },
    #[error("discordant legacy record is not reusable (unit '{0}')")]
    DiscordantLegacy(String),
    #[error("record '{0}' is outside the new model's high-risk population")]
    OutsideTarget(String),
    #[error("variance is zero: degenerate data admit no test")]
    ZeroVariance,
    #[error("alpha must lie in (0, 0.5), got {0}")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stratum {
    /// Flagged by both models.
    C,
    /// Flagged by the new model only.
    D,
}

impl Stratum {
    /// Stratum of a unit from its legacy (`r1`) and new (`r2`) flags;
    /// `None` outside the new model's high-risk population.
    pub fn from_flags(r1: bool, r2: bool) -> Option<Stratum> {
        match (r1, r2) {
            (true, true) => Some(Stratum::C),
            (false, true) => Some(Stratum::D),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treatment => 1,
        }
    }
}

impl TryFrom<u8> for Arm {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treatment),
            other => Err(format!("arm must be 0 or 1, got {other}")),
        }
    }
}

impl From<Arm> for u8 {
    fn from(a: Arm) -> u8 {
        a.index() as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub stratum: Stratum,
    pub arm: Arm,
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{}", self.stratum, if self.arm == Arm::Treatment { "treatment" } else { "control" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumArmData {
    pub stratum: Stratum,
    pub arm: Arm,
    pub n: u64,
    pub events: u64,
}

impl StratumArmData {
    pub fn new(stratum: Stratum, arm: Arm, n: u64, events: u64) -> Self {
        StratumArmData { stratum, arm, n, events }
    }

    pub fn id(&self) -> CellId {
        CellId { stratum: self.stratum, arm: self.arm }
    }

    pub fn rate(&self) -> f64 {
        self.events as f64 / self.n as f64
    }
}

/// Four (stratum, arm) cells indexed `[stratum][arm]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellTable {
    counts: [[(u64, u64); 2]; 2],
}

impl CellTable {
    fn slot(stratum: Stratum) -> usize {
        match stratum {
            Stratum::C => 0,
            Stratum::D => 1,
        }
    }

    pub fn add(&mut self, stratum: Stratum, arm: Arm, outcome: bool) {
        let c = &mut self.counts[Self::slot(stratum)][arm.index()];
        c.0 += 1;
        c.1 += outcome as u64;
    }

    pub fn get(&self, stratum: Stratum, arm: Arm) -> StratumArmData {
        let (n, events) = self.counts[Self::slot(stratum)][arm.index()];
        StratumArmData::new(stratum, arm, n, events)
    }

    pub fn cells(&self) -> [StratumArmData; 4] {
        [
            self.get(Stratum::C, Arm::Treatment),
            self.get(Stratum::C, Arm::Control),
            self.get(Stratum::D, Arm::Treatment),
            self.get(Stratum::D, Arm::Control),
        ]
    }

    pub fn from_cells(cells: &[StratumArmData]) -> Self {
        let mut t = CellTable::default();
        for c in cells {
            let slot = &mut t.counts[Self::slot(c.stratum)][c.arm.index()];
            slot.0 += c.n;
            slot.1 += c.events;
        }
        t
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|c| c.0).sum()
    }
}

/// Point estimate, its variance and any data-quality warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub delta_hat: f64,
    pub variance: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `cr12`-weighted difference of proportions across strata with its
/// plug-in variance. Cells in a stratum of weight zero may be empty.
pub fn estimate_delta(cells: &[StratumArmData], cr12: Probability) -> Result<PointEstimate, EstimationError> {
    let table = CellTable::from_cells(cells);
    let w = cr12.value();
    let mut delta_hat = 0.0;
    let mut variance = 0.0;
    let mut warnings = Vec::new();
    for (stratum, weight) in [(Stratum::C, w), (Stratum::D, 1.0 - w)] {
        if weight == 0.0 {
            continue;
        }
        let mut diff = 0.0;
        let mut var = 0.0;
        for arm in [Arm::Treatment, Arm::Control] {
            let cell = table.get(stratum, arm);
            if cell.n == 0 {
                return Err(EstimationError::EmptyCell(cell.id()));
            }
            if cell.events > cell.n {
                return Err(EstimationError::EventsExceedCount { cell: cell.id(), events: cell.events, n: cell.n });
            }
            let p = cell.rate();
            if cell.events == 0 || cell.events == cell.n {
                warnings.push(format!("cell {} has observed rate {p}; its variance contribution is zero", cell.id()));
            }
            diff += if arm == Arm::Treatment { p } else { -p };
            var += p * (1.0 - p) / cell.n as f64;
        }
        delta_hat += weight * diff;
        variance += weight * weight * var;
    }
    Ok(PointEstimate { delta_hat, variance, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub delta_hat: f64,
    pub variance: f64,
    pub z_stat: f64,
    pub p_value: Probability,
    /// Two-sided `1 - 2 alpha` interval.
    pub ci: (f64, f64),
    pub alpha: Probability,
    pub delta_margin: f64,
    pub cr12_used: Probability,
    #[serde(default)]
    pub direction: Direction,
    pub rejected: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// One-sided test of `H0: benefit <= delta_margin`, where benefit is the
/// estimate signed by `direction`.
pub fn superiority_test(
    estimate: &PointEstimate,
    cr12: Probability,
    delta_margin: f64,
    alpha: f64,
    direction: Direction,
) -> Result<DeltaEstimate, EstimationError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(EstimationError::InvalidAlpha(alpha));
    }
    if !(estimate.variance > 0.0) {
        return Err(EstimationError::ZeroVariance);
    }
    let se = estimate.variance.sqrt();
    let z_stat = (direction.sign() * estimate.delta_hat - delta_margin) / se;
    let p_value = numeric::normal_sf(z_stat);
    let z_crit = numeric::normal_quantile(1.0 - alpha).expect("alpha validated");
    Ok(DeltaEstimate {
        delta_hat: estimate.delta_hat,
        variance: estimate.variance,
        z_stat,
        p_value: Probability::saturating(p_value),
        ci: (estimate.delta_hat - z_crit * se, estimate.delta_hat + z_crit * se),
        alpha: Probability::saturating(alpha),
        delta_margin,
        cr12_used: cr12,
        direction,
        rejected: p_value < alpha,
        warnings: estimate.warnings.clone(),
    })
}

/// Where a trial record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Legacy,
    New,
}

/// A randomized participant with an observed outcome.
pub trait Observation {
    fn unit_label(&self) -> String;
    fn stratum(&self) -> Option<Stratum>;
    fn arm(&self) -> Arm;
    fn outcome(&self) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub unit_id: String,
    pub stratum: Stratum,
    pub arm: Arm,
    pub outcome: bool,
    pub source: Source,
}

impl Observation for TrialRecord {
    fn unit_label(&self) -> String {
        self.unit_id.clone()
    }

    fn stratum(&self) -> Option<Stratum> {
        Some(self.stratum)
    }

    fn arm(&self) -> Arm {
        self.arm
    }

    fn outcome(&self) -> bool {
        self.outcome
    }
}

/// Tabulates reused legacy records and fresh records into the four cells.
/// Legacy records may only populate the concordant stratum.
pub fn pool_reused_and_new<'a, L, F>(
    reused: impl IntoIterator<Item = &'a L>,
    fresh: impl IntoIterator<Item = &'a F>,
) -> Result<CellTable, EstimationError>
where
    L: Observation + 'a,
    F: Observation + 'a,
{
    let mut table = CellTable::default();
    for r in reused {
        match r.stratum() {
            Some(Stratum::C) => table.add(Stratum::C, r.arm(), r.outcome()),
            Some(Stratum::D) => return Err(EstimationError::DiscordantLegacy(r.unit_label())),
            None => return Err(EstimationError::OutsideTarget(r.unit_label())),
        }
    }
    for r in fresh {
        let s = r.stratum().ok_or_else(|| EstimationError::OutsideTarget(r.unit_label()))?;
        table.add(s, r.arm(), r.outcome());
    }
    Ok(table)
}

/// Splits records by source and pools them.
pub fn pool_records(records: &[TrialRecord]) -> Result<CellTable, EstimationError> {
    pool_reused_and_new(
        records.iter().filter(|r| r.source == Source::Legacy),
        records.iter().filter(|r| r.source == Source::New),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    fn cells(c1: (u64, u64), c0: (u64, u64), d1: (u64, u64), d0: (u64, u64)) -> Vec<StratumArmData> {
        vec![
            StratumArmData::new(Stratum::C, Arm::Treatment, c1.1, c1.0),
            StratumArmData::new(Stratum::C, Arm::Control, c0.1, c0.0),
            StratumArmData::new(Stratum::D, Arm::Treatment, d1.1, d1.0),
            StratumArmData::new(Stratum::D, Arm::Control, d0.1, d0.0),
        ]
    }

    #[test]
    fn worked_four_cell_example() {
        let est = estimate_delta(&cells((3, 10), (1, 10), (2, 10), (2, 10)), p(0.5)).unwrap();
        assert!((est.delta_hat - 0.1).abs() < 1e-15);
        assert!((est.variance - 0.0155).abs() < 1e-15);
        let t = superiority_test(&est, p(0.5), 0.0, 0.025, Direction::Increase).unwrap();
        assert!((t.z_stat - 0.803_219_328_902_498_9).abs() < 1e-12);
        assert!((t.p_value.value() - 0.210_923_987_726_681_3).abs() < 1e-10);
        assert!(!t.rejected);
        assert!(t.ci.0 < t.delta_hat && t.delta_hat < t.ci.1);
    }

    #[test]
    fn equal_rates_give_null_estimate() {
        let est = estimate_delta(&cells((4, 20), (2, 10), (6, 30), (1, 5)), p(0.3)).unwrap();
        assert!(est.delta_hat.abs() < 1e-15);
    }

    #[test]
    fn full_concordance_is_plain_difference() {
        let only_c = vec![
            StratumArmData::new(Stratum::C, Arm::Treatment, 40, 12),
            StratumArmData::new(Stratum::C, Arm::Control, 50, 5),
        ];
        let est = estimate_delta(&only_c, p(1.0)).unwrap();
        assert!((est.delta_hat - (0.3 - 0.1)).abs() < 1e-15);
        assert!((est.variance - (0.3 * 0.7 / 40.0 + 0.1 * 0.9 / 50.0)).abs() < 1e-15);
        let err = estimate_delta(&only_c, p(0.9)).unwrap_err();
        assert_eq!(err, EstimationError::EmptyCell(CellId { stratum: Stratum::D, arm: Arm::Treatment }));
    }

    #[test]
    fn boundary_null_has_half_p_value() {
        let est = PointEstimate { delta_hat: 0.05, variance: 0.001, warnings: vec![] };
        let t = superiority_test(&est, p(0.5), 0.05, 0.025, Direction::Increase).unwrap();
        assert_eq!(t.z_stat, 0.0);
        assert_eq!(t.p_value.value(), 0.5);
        assert!(!t.rejected);
        let zero = PointEstimate { delta_hat: 0.1, variance: 0.0, warnings: vec![] };
        assert_eq!(superiority_test(&zero, p(0.5), 0.0, 0.025, Direction::Increase), Err(EstimationError::ZeroVariance));
    }

    #[test]
    fn scaling_counts_scales_z() {
        let small = estimate_delta(&cells((3, 10), (1, 10), (2, 10), (2, 10)), p(0.5)).unwrap();
        let big = estimate_delta(&cells((300, 1000), (100, 1000), (200, 1000), (200, 1000)), p(0.5)).unwrap();
        let zs = superiority_test(&small, p(0.5), 0.0, 0.025, Direction::Increase).unwrap().z_stat;
        let zb = superiority_test(&big, p(0.5), 0.0, 0.025, Direction::Increase).unwrap().z_stat;
        assert!((zb / zs - 10.0).abs() < 1e-12);
    }

    #[test]
    fn direction_flips_the_test() {
        let est = PointEstimate { delta_hat: -0.1, variance: 0.0009, warnings: vec![] };
        let dec = superiority_test(&est, p(0.5), 0.0, 0.025, Direction::Decrease).unwrap();
        assert!(dec.rejected);
        let inc = superiority_test(&est, p(0.5), 0.0, 0.025, Direction::Increase).unwrap();
        assert!(!inc.rejected);
    }

    #[test]
    fn zero_event_cell_warns() {
        let est = estimate_delta(&cells((0, 10), (1, 10), (2, 10), (2, 10)), p(0.5)).unwrap();
        assert_eq!(est.warnings.len(), 1);
    }

    fn rec(id: &str, stratum: Stratum, arm: Arm, outcome: bool, source: Source) -> TrialRecord {
        TrialRecord { unit_id: id.into(), stratum, arm, outcome, source }
    }

    #[test]
    fn pooling_tabulates_both_sources() {
        let mut records = Vec::new();
        for i in 0..20 {
            records.push(rec(&format!("l{i}"), Stratum::C, Arm::Treatment, i < 5, Source::Legacy));
            records.push(rec(&format!("n{i}"), Stratum::C, Arm::Treatment, i < 5, Source::New));
        }
        let t = pool_records(&records).unwrap();
        assert_eq!(t.get(Stratum::C, Arm::Treatment), StratumArmData::new(Stratum::C, Arm::Treatment, 40, 10));
    }

    #[test]
    fn no_reused_records_is_fresh_tabulation() {
        let fresh = vec![
            rec("a", Stratum::D, Arm::Control, true, Source::New),
            rec("b", Stratum::C, Arm::Treatment, false, Source::New),
        ];
        let none: Vec<TrialRecord> = Vec::new();
        let t = pool_reused_and_new(&none, &fresh).unwrap();
        assert_eq!(t.total(), 2);
        assert_eq!(t.get(Stratum::D, Arm::Control).events, 1);
    }

    #[test]
    fn legacy_only_full_reuse_is_estimable() {
        let legacy: Vec<TrialRecord> = (0..20)
            .map(|i| rec(&format!("l{i}"), Stratum::C, if i % 2 == 0 { Arm::Treatment } else { Arm::Control }, i % 3 == 0, Source::Legacy))
            .collect();
        let t = pool_records(&legacy).unwrap();
        assert!(estimate_delta(&t.cells(), p(1.0)).is_ok());
    }

    #[test]
    fn discordant_legacy_record_is_rejected() {
        let records = vec![rec("x", Stratum::D, Arm::Control, false, Source::Legacy)];
        assert_eq!(pool_records(&records), Err(EstimationError::DiscordantLegacy("x".into())));
    }
}
