//! Error type shared across the core library.

use alloc::string::String;

/// Everything that can go wrong inside the core library.
///
/// Audit violations are deliberately NOT errors; they are data returned by
/// the audit module. Errors here mean a caller broke a contract.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Privacy budgets must be positive and finite.
    #[error("invalid budget: epsilon = {0}")]
    InvalidBudget(f64),
    /// Domain index outside `[0, d)`.
    #[error("index {index} out of range for domain size {d}")]
    IndexOutOfRange { index: usize, d: usize },
    /// Estimation needs at least one report.
    #[error("empty cohort: nothing to estimate from")]
    EmptyCohort,
    /// True frequencies must lie in `[0, 1]`.
    #[error("invalid frequency: {0}")]
    InvalidFrequency(f64),
    /// Histograms must share one domain size.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    /// Report counts must sum to the report total.
    #[error("report counts sum to {sum}, expected {n}")]
    CountMismatch { sum: u64, n: u64 },
    /// Snapshots must arrive with consecutive 1-based timestamps.
    #[error("out-of-order timestamp: expected {expected}, got {got}")]
    OutOfOrderTimestamp { expected: u64, got: u64 },
    /// A snapshot must cover exactly the registered population.
    #[error("snapshot covers {got} users, population is {expected}")]
    PopulationMismatch { expected: u64, got: u64 },
    /// A cohort request exceeded the available pool. By the window-recycling
    /// argument this cannot happen when the ledgers are correct, so it
    /// signals an accounting bug rather than a recoverable condition.
    #[error("user pool exhausted: need {need}, available {available}")]
    PoolExhausted { need: u64, available: u64 },
    /// A structural invariant of the configuration is violated.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// Generator or metric parameters outside their valid range.
    #[error("invalid params: {0}")]
    InvalidParams(String),
    /// The monitored true series has no spread, so the event threshold
    /// is undefined.
    #[error("degenerate series: monitored true values are constant")]
    DegenerateSeries,
}
