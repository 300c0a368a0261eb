//! Chance-level Monte Carlo estimation, cross-task aggregation, and report
//! assembly.

pub mod chance;
pub mod report;

pub use chance::{estimate_chance, percentile, simulate_scores, ChanceEstimate, ChancePolicy};
pub use report::{
    aggregate, overall_mean, published_chance_reference, ChanceFlag, ReportSection, SessionRow,
    SuiteReport,
};
