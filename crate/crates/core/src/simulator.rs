//! Monte Carlo engine for legacy and reuse trials.
//!
//! A population is an ordered sequence of units with legacy and new model
//! flags `(r1, r2)` and both potential outcomes. The legacy trial enrolls
//! units flagged by the legacy model first; the new trial then recruits
//! later units flagged by the new model, reusing concordant legacy records
//! according to the design's reuse plan.
//!
//! Potential outcomes are thresholded latent uniforms, `Y(a) = U_a < p(a)`,
//! so a drifted legacy rate `p(a) + shift` is applied to the same units.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{self, DesignError, DesignResult, DesignSpec, StrataRates};
use crate::estimation::{
    self, Arm, CellTable, DeltaEstimate, EstimationError, Observation, PointEstimate, Stratum,
};
use crate::numeric::{Probability, RngStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("inconsistent concordance/prevalence configuration: {0}")]
    InconsistentLaw(String),
    #[error("invalid scenario field {field}: {constraint}")]
    InvalidField { field: &'static str, constraint: String },
    #[error("population exhausted after {enrolled} of {wanted} {what} enrollments")]
    PopulationExhausted { what: &'static str, enrolled: u64, wanted: u64 },
    #[error("worker pool: {0}")]
    Workers(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// Randomization scheme for both trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Independent per-unit assignment with probability `k / (k + 1)`.
    #[default]
    Bernoulli,
    /// Arms filled to the plan's integer counts in random order.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    /// Reuse concordant legacy records per the design's reuse plan.
    #[default]
    Bridge,
    /// Recruit the full conventional sample fresh.
    Conventional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub population_size: u64,
    /// Prevalence of the new model's high-risk flag.
    pub q: f64,
    pub cr12: Probability,
    pub cr21: Probability,
    /// True event rates.
    pub rates: StrataRates,
    /// Rates for units flagged by the legacy model only; default to the concordant rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_e1: Option<Probability>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_e0: Option<Probability>,
    /// Additive shift of concordant-stratum event rates in the legacy trial.
    #[serde(default)]
    pub legacy_shift: f64,
    pub design: DesignSpec,
    pub replicates: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub allocation: Allocation,
    #[serde(default)]
    pub trial: TrialKind,
}

impl SimScenario {
    pub fn validate(&self) -> Result<JointLaw, SimError> {
        if self.population_size == 0 {
            return Err(SimError::InvalidField { field: "population_size", constraint: "must be positive".into() });
        }
        if self.replicates == 0 {
            return Err(SimError::InvalidField { field: "replicates", constraint: "must be at least 1".into() });
        }
        if !self.legacy_shift.is_finite() {
            return Err(SimError::InvalidField { field: "legacy_shift", constraint: "must be finite".into() });
        }
        self.design.validate()?;
        JointLaw::new(self)
    }

    /// Effect the trial estimates, from the true rates and concordance.
    pub fn true_effect(&self) -> f64 {
        design::implied_effect(&self.rates, self.cr12)
    }

    fn plan(&self) -> Result<DesignResult, SimError> {
        Ok(design::plan(&self.design, self.trial == TrialKind::Bridge)?)
    }
}

/// Joint cell of the two model flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlagCell {
    Both,
    LegacyOnly,
    NewOnly,
    Neither,
}

impl FlagCell {
    const ALL: [FlagCell; 4] = [FlagCell::Both, FlagCell::LegacyOnly, FlagCell::NewOnly, FlagCell::Neither];

    fn bit(self) -> u8 {
        match self {
            FlagCell::Both => 1,
            FlagCell::LegacyOnly => 2,
            FlagCell::NewOnly => 4,
            FlagCell::Neither => 8,
        }
    }

    fn flags(self) -> (bool, bool) {
        match self {
            FlagCell::Both => (true, true),
            FlagCell::LegacyOnly => (true, false),
            FlagCell::NewOnly => (false, true),
            FlagCell::Neither => (false, false),
        }
    }
}

/// Set of flag cells a recruiter is looking for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellMask(u8);

impl CellMask {
    pub const LEGACY_FLAGGED: CellMask = CellMask(1 | 2);
    pub const CONCORDANT: CellMask = CellMask(1);
    pub const DISCORDANT: CellMask = CellMask(4);
    pub const NEW_FLAGGED: CellMask = CellMask(1 | 4);
    pub const EMPTY: CellMask = CellMask(0);

    pub fn contains(self, cell: FlagCell) -> bool {
        self.0 & cell.bit() != 0
    }

    fn with(self, cell: FlagCell) -> CellMask {
        CellMask(self.0 | cell.bit())
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// Distribution of one population unit.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLaw {
    /// Probabilities of `FlagCell::ALL`, in order.
    cells: [f64; 4],
    /// `(treated, control)` event rates per cell.
    rates: [[f64; 2]; 4],
}

impl JointLaw {
    pub fn new(s: &SimScenario) -> Result<Self, SimError> {
        if !(s.q > 0.0 && s.q <= 1.0) {
            return Err(SimError::InvalidField { field: "q", constraint: format!("must lie in (0, 1], got {}", s.q) });
        }
        let (cr12, cr21) = (s.cr12.value(), s.cr21.value());
        let both = s.q * cr12;
        let legacy_only = if cr12 == 0.0 {
            0.0
        } else if cr21 == 0.0 {
            return Err(SimError::InconsistentLaw("cr21 = 0 with cr12 > 0 implies an unbounded legacy prevalence".into()));
        } else {
            both * (1.0 / cr21 - 1.0)
        };
        let p_r1 = both + legacy_only;
        if p_r1 > 1.0 + 1e-12 || s.q + legacy_only > 1.0 + 1e-12 {
            return Err(SimError::InconsistentLaw(format!(
                "q * cr12 / cr21 = {p_r1} and P(either flag) = {} must not exceed 1",
                s.q + legacy_only
            )));
        }
        let neither = (1.0 - s.q - legacy_only).max(0.0);
        let r = &s.rates;
        let c = [r.p_c1.value(), r.p_c0.value()];
        let d = [r.p_d1.value(), r.p_d0.value()];
        let e = [s.p_e1.map_or(c[0], Probability::value), s.p_e0.map_or(c[1], Probability::value)];
        Ok(JointLaw { cells: [both, legacy_only, s.q * (1.0 - cr12), neither], rates: [c, e, d, e] })
    }

    pub fn cell_probability(&self, cell: FlagCell) -> f64 {
        self.cells[Self::slot(cell)]
    }

    pub fn p_r1(&self) -> f64 {
        self.cells[0] + self.cells[1]
    }

    fn slot(cell: FlagCell) -> usize {
        match cell {
            FlagCell::Both => 0,
            FlagCell::LegacyOnly => 1,
            FlagCell::NewOnly => 2,
            FlagCell::Neither => 3,
        }
    }

    fn mask_probability(&self, mask: CellMask) -> f64 {
        FlagCell::ALL.iter().filter(|c| mask.contains(**c)).map(|c| self.cells[Self::slot(*c)]).sum()
    }

    /// Rate of arm `arm` in `cell`.
    pub fn rate(&self, cell: FlagCell, arm: Arm) -> f64 {
        let r = self.rates[Self::slot(cell)];
        match arm {
            Arm::Treatment => r[0],
            Arm::Control => r[1],
        }
    }

    fn draw_in(&self, mask: CellMask, index: u64, rng: &mut ChaCha8Rng) -> SimUnit {
        let total = self.mask_probability(mask);
        let mut u = rng.random::<f64>() * total;
        let mut chosen = None;
        for cell in FlagCell::ALL.into_iter().filter(|c| mask.contains(*c) && self.cell_probability(*c) > 0.0) {
            chosen = Some(cell);
            u -= self.cell_probability(cell);
            if u < 0.0 {
                break;
            }
        }
        let cell = chosen.expect("mask has positive probability");
        let latent = [rng.random::<f64>(), rng.random::<f64>()];
        let (r1, r2) = cell.flags();
        SimUnit {
            index,
            r1,
            r2,
            latent,
            y: [latent[0] < self.rate(cell, Arm::Control), latent[1] < self.rate(cell, Arm::Treatment)],
        }
    }
}

/// A population unit with both potential outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimUnit {
    pub index: u64,
    pub r1: bool,
    pub r2: bool,
    /// Latent uniforms indexed by `Arm::index`.
    pub latent: [f64; 2],
    /// Potential outcomes `Y(0)`, `Y(1)`.
    pub y: [bool; 2],
}

impl SimUnit {
    pub fn cell(&self) -> FlagCell {
        match (self.r1, self.r2) {
            (true, true) => FlagCell::Both,
            (true, false) => FlagCell::LegacyOnly,
            (false, true) => FlagCell::NewOnly,
            (false, false) => FlagCell::Neither,
        }
    }

    pub fn potential_outcome(&self, arm: Arm) -> bool {
        self.y[arm.index()]
    }
}

/// Draws `population_size` units.
pub fn generate_population(scenario: &SimScenario, rng: &mut ChaCha8Rng) -> Result<Vec<SimUnit>, SimError> {
    let law = JointLaw::new(scenario)?;
    let all = FlagCell::ALL.into_iter().fold(CellMask::EMPTY, CellMask::with);
    Ok((0..scenario.population_size).map(|i| law.draw_in(all, i, rng)).collect())
}

/// Units in population order, consumed as trials recruit.
pub trait UnitSource {
    /// Next unit whose flag cell is in `mask`; units passed over are consumed.
    fn next_in(&mut self, mask: CellMask) -> Option<SimUnit>;
}

/// A generated population scanned front to back.
#[derive(Debug, Clone)]
pub struct MaterializedPopulation {
    units: Vec<SimUnit>,
    cursor: usize,
}

impl MaterializedPopulation {
    pub fn new(units: Vec<SimUnit>) -> Self {
        MaterializedPopulation { units, cursor: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.cursor
    }
}

impl UnitSource for MaterializedPopulation {
    fn next_in(&mut self, mask: CellMask) -> Option<SimUnit> {
        while self.cursor < self.units.len() {
            let u = self.units[self.cursor];
            self.cursor += 1;
            if mask.contains(u.cell()) {
                return Some(u);
            }
        }
        None
    }
}

/// The same population law generated on demand: the number of passed-over
/// units before the next match is geometric, so sparse recruitment from a
/// large population costs only the matched units.
pub struct LazyPopulation {
    law: JointLaw,
    rng: ChaCha8Rng,
    remaining: u64,
    next_index: u64,
    skips: [Option<Geometric>; 16],
}

impl LazyPopulation {
    pub fn new(law: JointLaw, population_size: u64, rng: ChaCha8Rng) -> Self {
        LazyPopulation { law, rng, remaining: population_size, next_index: 0, skips: [None; 16] }
    }

    pub fn consumed(&self) -> u64 {
        self.next_index
    }
}

impl UnitSource for LazyPopulation {
    fn next_in(&mut self, mask: CellMask) -> Option<SimUnit> {
        let p = self.law.mask_probability(mask);
        if !(p > 0.0) || self.remaining == 0 {
            return None;
        }
        let skip = if p >= 1.0 {
            0
        } else {
            let geo = self.skips[mask.0 as usize].get_or_insert_with(|| Geometric::new(p).expect("p in (0, 1)"));
            geo.sample(&mut self.rng)
        };
        if skip >= self.remaining {
            self.next_index += self.remaining;
            self.remaining = 0;
            return None;
        }
        self.remaining -= skip + 1;
        let index = self.next_index + skip;
        self.next_index = index + 1;
        Some(self.law.draw_in(mask, index, &mut self.rng))
    }
}

/// Assigns arms either independently or to fixed counts.
enum Randomizer {
    Bernoulli { treat_probability: f64 },
    Urn { remaining: [u64; 2] },
}

impl Randomizer {
    fn bernoulli(k: f64) -> Self {
        Randomizer::Bernoulli { treat_probability: k / (k + 1.0) }
    }

    fn urn(treat: u64, control: u64) -> Self {
        Randomizer::Urn { remaining: [control, treat] }
    }

    fn assign(&mut self, rng: &mut ChaCha8Rng) -> Arm {
        match self {
            Randomizer::Bernoulli { treat_probability } => {
                if rng.random::<f64>() < *treat_probability {
                    Arm::Treatment
                } else {
                    Arm::Control
                }
            }
            Randomizer::Urn { remaining } => {
                let total = remaining[0] + remaining[1];
                debug_assert!(total > 0);
                let arm = if rng.random_range(0..total) < remaining[1] { Arm::Treatment } else { Arm::Control };
                remaining[arm.index()] -= 1;
                arm
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegacyRecord {
    pub unit_index: u64,
    /// Whether the new model also flags the unit.
    pub concordant: bool,
    pub arm: Arm,
    pub outcome: bool,
}

impl Observation for LegacyRecord {
    fn unit_label(&self) -> String {
        format!("legacy#{}", self.unit_index)
    }

    fn stratum(&self) -> Option<Stratum> {
        self.concordant.then_some(Stratum::C)
    }

    fn arm(&self) -> Arm {
        self.arm
    }

    fn outcome(&self) -> bool {
        self.outcome
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LegacyDataset {
    /// Records in randomization order.
    pub records: Vec<LegacyRecord>,
    /// Leading records whose follow-up completed.
    pub completed: usize,
}

/// Runs the legacy trial: enrolls `n1` legacy-flagged units, randomizes at
/// `k1` and observes outcomes, shifting concordant-stratum event rates by
/// the scenario's `legacy_shift`.
pub fn run_legacy_trial(
    population: &mut impl UnitSource,
    scenario: &SimScenario,
    law: &JointLaw,
    rng: &mut ChaCha8Rng,
) -> Result<LegacyDataset, SimError> {
    let Some(legacy) = scenario.design.legacy else {
        return Ok(LegacyDataset::default());
    };
    let n1 = legacy.n1;
    let mut randomizer = match scenario.allocation {
        Allocation::Bernoulli => Randomizer::bernoulli(legacy.k1),
        Allocation::Exact => {
            let treat = (n1 as f64 * legacy.k1 / (legacy.k1 + 1.0)).round() as u64;
            Randomizer::urn(treat, n1 - treat)
        }
    };
    let mut records = Vec::with_capacity(n1 as usize);
    for enrolled in 0..n1 {
        let unit = population.next_in(CellMask::LEGACY_FLAGGED).ok_or(SimError::PopulationExhausted {
            what: "legacy",
            enrolled,
            wanted: n1,
        })?;
        let arm = randomizer.assign(rng);
        let outcome = if unit.r2 && scenario.legacy_shift != 0.0 {
            let p = (law.rate(FlagCell::Both, arm) + scenario.legacy_shift).clamp(0.0, 1.0);
            unit.latent[arm.index()] < p
        } else {
            unit.potential_outcome(arm)
        };
        records.push(LegacyRecord { unit_index: unit.index, concordant: unit.r2, arm, outcome });
    }
    let completed = crate::numeric::floor_count(legacy.completion * n1 as f64) as usize;
    Ok(LegacyDataset { records, completed: completed.min(n1 as usize) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FreshRecord {
    unit_index: u64,
    stratum: Stratum,
    arm: Arm,
    outcome: bool,
}

impl Observation for FreshRecord {
    fn unit_label(&self) -> String {
        format!("unit#{}", self.unit_index)
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

/// Result of one simulated new trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub cells: CellTable,
    pub point: Option<PointEstimate>,
    /// Test result; absent when the data were degenerate (empty cell or zero variance).
    pub estimate: Option<DeltaEstimate>,
    /// Variance of the estimator at the true rates and realized cell sizes.
    pub analytic_variance: Option<f64>,
    pub reused: u64,
    pub recruited: u64,
}

/// Runs the new trial against `plan`: reuses completed concordant legacy
/// records per arm in randomization order (up to the plan's reuse counts),
/// then recruits fresh concordant units for any deficit and fresh
/// discordant units for the full discordant requirement.
pub fn run_bridge_trial(
    legacy: &LegacyDataset,
    population: &mut impl UnitSource,
    scenario: &SimScenario,
    law: &JointLaw,
    plan: &DesignResult,
    rng: &mut ChaCha8Rng,
) -> Result<TrialOutcome, SimError> {
    let want = [plan.reuse_control, plan.reuse_treat];
    let mut taken = [0u64; 2];
    let mut reused = Vec::new();
    for rec in legacy.records[..legacy.completed].iter().filter(|r| r.concordant) {
        let a = rec.arm.index();
        if taken[a] < want[a] {
            taken[a] += 1;
            reused.push(*rec);
        }
        if taken == want {
            break;
        }
    }

    let k2 = scenario.design.k2;
    let (c_total, d_total) = (plan.n_c - taken[0] - taken[1], plan.n_d);
    let (mut c_rand, mut d_rand) = match scenario.allocation {
        Allocation::Bernoulli => (Randomizer::bernoulli(k2), Randomizer::bernoulli(k2)),
        Allocation::Exact => (
            Randomizer::urn(plan.n_c_treat - taken[1], plan.n_c_control - taken[0]),
            Randomizer::urn(plan.n_d_treat, plan.n_d_control),
        ),
    };
    let mut left = [c_total, d_total];
    let mut fresh = Vec::with_capacity((c_total + d_total) as usize);
    let wanted = c_total + d_total;
    while left[0] + left[1] > 0 {
        let mut mask = CellMask::EMPTY;
        if left[0] > 0 {
            mask = mask.with(FlagCell::Both);
        }
        if left[1] > 0 {
            mask = mask.with(FlagCell::NewOnly);
        }
        let unit = population.next_in(mask).ok_or(SimError::PopulationExhausted {
            what: "new-trial",
            enrolled: fresh.len() as u64,
            wanted,
        })?;
        let (stratum, randomizer, slot) = if unit.r1 { (Stratum::C, &mut c_rand, 0) } else { (Stratum::D, &mut d_rand, 1) };
        let arm = randomizer.assign(rng);
        left[slot] -= 1;
        fresh.push(FreshRecord { unit_index: unit.index, stratum, arm, outcome: unit.potential_outcome(arm) });
    }

    let cells = estimation::pool_reused_and_new(&reused, &fresh)?;
    let spec = &scenario.design;
    let point = estimation::estimate_delta(&cells.cells(), spec.cr12).ok();
    let estimate = point.as_ref().and_then(|p| {
        estimation::superiority_test(p, spec.cr12, spec.delta_margin, spec.alpha.value(), spec.direction).ok()
    });
    let analytic_variance = analytic_variance(&cells, law, spec.cr12);
    Ok(TrialOutcome {
        cells,
        point,
        estimate,
        analytic_variance,
        reused: reused.len() as u64,
        recruited: fresh.len() as u64,
    })
}

/// Estimator variance at the law's true stratum rates for the realized cell sizes.
pub fn analytic_variance(cells: &CellTable, law: &JointLaw, cr12: Probability) -> Option<f64> {
    let w = cr12.value();
    let mut total = 0.0;
    for (stratum, flag, weight) in [(Stratum::C, FlagCell::Both, w), (Stratum::D, FlagCell::NewOnly, 1.0 - w)] {
        if weight == 0.0 {
            continue;
        }
        for arm in [Arm::Treatment, Arm::Control] {
            let n = cells.get(stratum, arm).n;
            if n == 0 {
                return None;
            }
            let p = law.rate(flag, arm);
            total += weight * weight * p * (1.0 - p) / n as f64;
        }
    }
    Some(total)
}

/// Expected estimator bias from a legacy drift under exact allocation:
/// reused records make up a fraction of each concordant arm, and only that
/// fraction carries the shifted rate.
pub fn expected_drift_bias(scenario: &SimScenario, plan: &DesignResult) -> f64 {
    let frac = |reused: u64, n: u64| if n == 0 { 0.0 } else { reused as f64 / n as f64 };
    scenario.design.cr12.value()
        * scenario.legacy_shift
        * (frac(plan.reuse_treat, plan.n_c_treat) - frac(plan.reuse_control, plan.n_c_control))
}

/// One row of the per-replicate trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub replicate: u64,
    pub delta_hat: Option<f64>,
    pub variance: Option<f64>,
    pub rejected: bool,
    pub reused: u64,
    pub recruited: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub replicates: u64,
    pub degenerate_replicates: u64,
    pub rejection_rate: Probability,
    pub mc_standard_error: f64,
    pub true_effect: f64,
    pub mean_delta_hat: f64,
    pub bias: f64,
    /// Monte Carlo standard error of `mean_delta_hat`.
    pub delta_hat_standard_error: f64,
    pub empirical_variance: f64,
    pub mean_analytic_variance: f64,
    pub mean_estimated_variance: f64,
    pub mean_n2_prime: f64,
    pub mean_reused: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub characteristics: OperatingCharacteristics,
    pub trace: Vec<TraceRow>,
}

const POPULATION_STREAM: u64 = 1;
const LEGACY_STREAM: u64 = 2;
const RECRUIT_STREAM: u64 = 3;

/// Runs replicate `replicate` with its own streams.
pub fn run_replicate(
    scenario: &SimScenario,
    law: &JointLaw,
    plan: &DesignResult,
    replicate: u64,
) -> Result<TrialOutcome, SimError> {
    let stream = RngStream::new(scenario.master_seed, replicate);
    let mut population = LazyPopulation::new(law.clone(), scenario.population_size, stream.substream(POPULATION_STREAM).rng());
    let legacy = if scenario.trial == TrialKind::Bridge && plan.reused() > 0 {
        run_legacy_trial(&mut population, scenario, law, &mut stream.substream(LEGACY_STREAM).rng())?
    } else {
        LegacyDataset::default()
    };
    run_bridge_trial(&legacy, &mut population, scenario, law, plan, &mut stream.substream(RECRUIT_STREAM).rng())
}

/// Runs every replicate and aggregates. Replicate `r` always uses stream
/// index `r` and aggregation runs in replicate order, so the result does
/// not depend on `workers`.
pub fn simulate(scenario: &SimScenario, workers: Option<usize>) -> Result<SimulationRun, SimError> {
    let law = scenario.validate()?;
    let plan = scenario.plan()?;
    let run = || -> Result<Vec<TrialOutcome>, SimError> {
        (0..scenario.replicates).into_par_iter().map(|r| run_replicate(scenario, &law, &plan, r)).collect()
    };
    let outcomes = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SimError::Workers(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok(aggregate(scenario, &outcomes))
}

/// Operating characteristics of the scenario's design.
pub fn operating_characteristics(scenario: &SimScenario, workers: Option<usize>) -> Result<OperatingCharacteristics, SimError> {
    Ok(simulate(scenario, workers)?.characteristics)
}

fn aggregate(scenario: &SimScenario, outcomes: &[TrialOutcome]) -> SimulationRun {
    let reps = outcomes.len() as f64;
    let mut trace = Vec::with_capacity(outcomes.len());
    let (mut rejected, mut sum, mut sum_sq, mut sum_analytic, mut sum_est, mut valid) = (0u64, 0.0, 0.0, 0.0, 0.0, 0u64);
    let (mut sum_recruited, mut sum_reused) = (0.0, 0.0);
    let mut analytic_n = 0u64;
    for (r, o) in outcomes.iter().enumerate() {
        let rej = o.estimate.as_ref().is_some_and(|e| e.rejected);
        rejected += rej as u64;
        sum_recruited += o.recruited as f64;
        sum_reused += o.reused as f64;
        if let Some(p) = &o.point {
            valid += 1;
            sum += p.delta_hat;
            sum_sq += p.delta_hat * p.delta_hat;
            sum_est += p.variance;
        }
        if let Some(v) = o.analytic_variance {
            analytic_n += 1;
            sum_analytic += v;
        }
        trace.push(TraceRow {
            replicate: r as u64,
            delta_hat: o.point.as_ref().map(|p| p.delta_hat),
            variance: o.point.as_ref().map(|p| p.variance),
            rejected: rej,
            reused: o.reused,
            recruited: o.recruited,
        });
    }
    let rate = rejected as f64 / reps;
    let vf = valid as f64;
    let mean = if valid > 0 { sum / vf } else { f64::NAN };
    let empirical_variance = if valid > 1 { (sum_sq - vf * mean * mean) / (vf - 1.0) } else { 0.0 };
    let true_effect = scenario.true_effect();
    let characteristics = OperatingCharacteristics {
        replicates: outcomes.len() as u64,
        degenerate_replicates: outcomes.len() as u64 - outcomes.iter().filter(|o| o.estimate.is_some()).count() as u64,
        rejection_rate: Probability::saturating(rate),
        mc_standard_error: (rate * (1.0 - rate) / reps).sqrt(),
        true_effect,
        mean_delta_hat: mean,
        bias: mean - true_effect,
        delta_hat_standard_error: if valid > 0 { (empirical_variance / vf).sqrt() } else { f64::NAN },
        empirical_variance,
        mean_analytic_variance: if analytic_n > 0 { sum_analytic / analytic_n as f64 } else { f64::NAN },
        mean_estimated_variance: if valid > 0 { sum_est / vf } else { f64::NAN },
        mean_n2_prime: sum_recruited / reps,
        mean_reused: sum_reused / reps,
    };
    SimulationRun { characteristics, trace }
}
