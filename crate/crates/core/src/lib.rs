//! Designing randomized trials of an updated risk model that reuse records
//! from a completed trial of its predecessor.
//!
//! Patients flagged high-risk by the new model fall into a concordant
//! stratum (also flagged by the legacy model) and a discordant one. Legacy
//! records from the concordant stratum can stand in for new recruits,
//! shrinking prospective enrollment. The crate covers estimating the model
//! agreement, sizing the trial with and without reuse, the stratified
//! estimator and test, Monte Carlo verification of operating
//! characteristics, and an exchangeability checklist.

pub mod concordance;
pub mod design;
pub mod diagnostics;
pub mod estimation;
pub mod io;
pub mod numeric;
pub mod simulator;

pub use concordance::{ConcordanceError, ConcordanceEstimate, RiskRecord};
pub use design::{DesignError, DesignResult, DesignSpec, StrataRates};
pub use diagnostics::DiagnosticsError;
pub use estimation::{Arm, EstimationError, Stratum};
pub use io::IoError;
pub use numeric::{NumericError, Probability, RngStream};
pub use simulator::{SimError, SimScenario};

use thiserror::Error;

/// Any failure raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Concordance(#[from] ConcordanceError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Io(#[from] IoError),
    /// Inconsistent command or request arguments.
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// True for file-system failures, as opposed to invalid content or domain errors.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(e) if e.is_file_error())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
