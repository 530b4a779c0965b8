use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bridge_core::concordance::{self, ClusterKey, McNemarMode};
use bridge_core::design::{self, Direction, SweepField};
use bridge_core::diagnostics::{self, ChecklistStatuses};
use bridge_core::estimation;
use bridge_core::io::{self, ScoreSchema};
use bridge_core::simulator;
use bridge_core::{Error, Probability};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bridge", version, about = "Design and analyse trials that reuse legacy-model trial records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Agreement between legacy and new high-risk cohorts.
    Concordance(ConcordanceArgs),
    /// Sample size with and without reuse.
    Design(DesignArgs),
    /// Monte Carlo operating characteristics of a scenario.
    Simulate(SimulateArgs),
    /// Stratified effect estimate and one-sided test from trial records.
    Estimate(EstimateArgs),
    /// Render the reuse validity checklist, optionally with covariate balance.
    Checklist(ChecklistArgs),
}

#[derive(clap::Args)]
struct ConcordanceArgs {
    /// Score CSV with a unit_id column and one column per model.
    #[arg(long)]
    scores: PathBuf,
    /// Legacy model score column.
    #[arg(long)]
    legacy: String,
    /// New model score column.
    #[arg(long = "new")]
    new_model: String,
    /// High-risk fraction.
    #[arg(long)]
    q: f64,
    /// Comma-separated increasing fractions for an overlap curve.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Bootstrap replicates for percentile intervals; requires --seed.
    #[arg(long, requires = "seed")]
    bootstrap: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Resample clusters of rows sharing this column (patient_id, trial_tag or a covariate).
    #[arg(long)]
    cluster_by: Option<String>,
    /// Further legacy score columns; reports concordance with any of them or --legacy.
    #[arg(long, num_args = 1..)]
    union: Vec<String>,
    /// Second legacy column to compare against --legacy with McNemar's test.
    #[arg(long)]
    compare: Option<String>,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the curve as CSV.
    #[arg(long, requires = "grid")]
    curve_csv: Option<PathBuf>,
}

#[derive(clap::Args)]
struct DesignArgs {
    /// Design spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Report the conventional design only.
    #[arg(long)]
    no_reuse: bool,
    /// Re-plan over values of one field instead (cr12, cr21, completion, unit_cost, p_c1, p_c0, p_d1, p_d0).
    #[arg(long, requires = "values")]
    sweep: Option<String>,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    scenario: PathBuf,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Per-replicate CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's replicate count.
    #[arg(long)]
    replicates: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Increase,
    Decrease,
}

#[derive(clap::Args)]
struct EstimateArgs {
    /// Trial-record CSV: unit_id, stratum (C|D), arm (0|1), outcome (0|1)[, source (legacy|new)].
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    cr12: f64,
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    /// One-sided significance level.
    #[arg(long)]
    alpha: f64,
    /// Whether benefit means a higher or lower treated event rate.
    #[arg(long, value_enum, default_value_t = DirectionArg::Increase)]
    direction: DirectionArg,
    /// Output JSON path; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ChecklistArgs {
    /// JSON with "statuses": {item_id: met|unmet|unknown}.
    #[arg(long)]
    items: PathBuf,
    /// Covariate CSVs for the legacy and new groups, comma-separated.
    #[arg(long, value_delimiter = ',', num_args = 1, requires = "covariates")]
    balance: Option<Vec<PathBuf>>,
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Output JSON path; the text summary goes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Concordance(a) => run_concordance(a),
        Command::Design(a) => run_design(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Estimate(a) => run_estimate(a),
        Command::Checklist(a) => run_checklist(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn emit<T: Serialize>(obj: &T, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => {
            io::write_report(obj, path)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{}", io::to_canonical_json(obj)),
    }
    Ok(())
}

#[derive(Serialize)]
struct ConcordanceReport {
    legacy_model: String,
    new_model: String,
    estimate: concordance::ConcordanceEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    curve: Option<Vec<concordance::CurvePoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    union_models: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    union_cr12: Option<Probability>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<concordance::LegacyComparison>,
}

fn run_concordance(a: ConcordanceArgs) -> Result<(), Error> {
    let mut models = vec![a.legacy.clone(), a.new_model.clone()];
    models.extend(a.union.iter().cloned());
    models.extend(a.compare.iter().cloned());
    let mut seen = std::collections::HashSet::new();
    models.retain(|m| seen.insert(m.clone()));
    let records = io::load_scores(&a.scores, &ScoreSchema::with_models(models))?;
    eprintln!("loaded {} records from {}", records.len(), a.scores.display());

    let estimate = match a.bootstrap {
        Some(b) => {
            let key = a.cluster_by.as_deref().map(ClusterKey::parse);
            let seed = a.seed.expect("clap enforces --seed with --bootstrap");
            concordance::bootstrap_ci(&records, &a.legacy, &a.new_model, a.q, b, seed, key.as_ref())?
        }
        None => {
            let legacy = concordance::classify_top_fraction(&records, &a.legacy, a.q)?;
            let new = concordance::classify_top_fraction(&records, &a.new_model, a.q)?;
            concordance::concordance_rates(&legacy, &new)?
        }
    };
    let curve = match &a.grid {
        Some(grid) => Some(concordance::overlap_curve(&records, &a.legacy, &a.new_model, grid)?),
        None => None,
    };
    let new = concordance::classify_top_fraction(&records, &a.new_model, a.q)?;
    let (union_models, union_cr12) = if a.union.is_empty() {
        (None, None)
    } else {
        let mut names = vec![a.legacy.clone()];
        names.extend(a.union.iter().cloned());
        let labelings = names
            .iter()
            .map(|m| concordance::classify_top_fraction(&records, m, a.q))
            .collect::<Result<Vec<_>, _>>()?;
        (Some(names), Some(concordance::union_concordance(&labelings, &new)?))
    };
    let comparison = match &a.compare {
        Some(other) => {
            let la = concordance::classify_top_fraction(&records, &a.legacy, a.q)?;
            let lb = concordance::classify_top_fraction(&records, other, a.q)?;
            Some(concordance::compare_legacies(&la, &lb, &new, McNemarMode::Auto)?)
        }
        None => None,
    };
    eprintln!("cr12 = {:.4}, cr21 = {:.4}", estimate.cr12.value(), estimate.cr21.value());
    if let (Some(path), Some(curve)) = (&a.curve_csv, &curve) {
        io::write_curve_csv(curve, path)?;
    }
    let report = ConcordanceReport {
        legacy_model: a.legacy,
        new_model: a.new_model,
        estimate,
        curve,
        union_models,
        union_cr12,
        comparison,
    };
    emit(&report, Some(&a.out))
}

#[derive(Serialize)]
struct SweepReport {
    field: &'static str,
    points: Vec<design::SensitivityPoint>,
}

fn run_design(a: DesignArgs) -> Result<(), Error> {
    let spec = io::load_design_spec(&a.spec)?;
    if let (Some(name), Some(values)) = (&a.sweep, &a.values) {
        let field =
            SweepField::parse(name).ok_or_else(|| Error::Usage(format!("unsupported sweep field '{name}'")))?;
        let points = design::sensitivity(&spec, field, values)?;
        return emit(&SweepReport { field: field.name(), points }, Some(&a.out));
    }
    let result = design::plan(&spec, !a.no_reuse)?;
    eprint!("{}", result.render_table());
    emit(&result, Some(&a.out))
}

fn run_simulate(a: SimulateArgs) -> Result<(), Error> {
    let mut scenario = io::load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        scenario.master_seed = seed;
    }
    if let Some(r) = a.replicates {
        scenario.replicates = r;
    }
    eprintln!("simulating {} replicates (seed {})", scenario.replicates, scenario.master_seed);
    let run = simulator::simulate(&scenario, a.workers)?;
    let oc = &run.characteristics;
    eprintln!(
        "rejection rate {:.4} (MC SE {:.4}), mean estimate {:.6}",
        oc.rejection_rate.value(),
        oc.mc_standard_error,
        oc.mean_delta_hat
    );
    if let Some(path) = &a.trace {
        io::write_trace_csv(&run.trace, path)?;
    }
    emit(oc, Some(&a.out))
}

fn run_estimate(a: EstimateArgs) -> Result<(), Error> {
    let records = io::load_trial_records(&a.data)?;
    let cr12 = Probability::new(a.cr12)?;
    let cells = estimation::pool_records(&records)?;
    let point = estimation::estimate_delta(&cells.cells(), cr12)?;
    let direction = match a.direction {
        DirectionArg::Increase => Direction::Increase,
        DirectionArg::Decrease => Direction::Decrease,
    };
    let result = estimation::superiority_test(&point, cr12, a.margin, a.alpha, direction)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    emit(&result, a.out.as_deref())
}

fn run_checklist(a: ChecklistArgs) -> Result<(), Error> {
    let statuses: ChecklistStatuses = io::load_checklist_statuses(&a.items)?;
    let items = statuses.apply()?;
    let balance = match (&a.balance, &a.covariates) {
        (Some(paths), Some(names)) => {
            let [legacy, new] = paths.as_slice() else {
                return Err(Error::Usage(format!("--balance takes two files (legacy,new), got {}", paths.len())));
            };
            let legacy = io::load_covariates(legacy)?;
            let new = io::load_covariates(new)?;
            Some(diagnostics::balance_report(&legacy, &new, names)?)
        }
        _ => None,
    };
    let report = diagnostics::render_checklist(&items, balance.as_ref());
    match &a.out {
        Some(path) => {
            print!("{}", report.summary);
            emit(&report, Some(path))
        }
        None => emit(&report, None),
    }
}
