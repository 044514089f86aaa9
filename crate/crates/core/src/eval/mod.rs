//! Official-semantics SQuAD scoring, evaluation modes, probability
//! statistics and the threshold baseline.

mod metrics;
mod report;
mod stats;

pub use metrics::{exact_match, f1_score, normalize_answer};
pub use report::{score, EvalMode, EvalReport, ExampleRecord, Prediction};
pub use stats::{
    best_span, probability_stats, sweep_threshold, threshold_baseline, BaselineStatistic, GroupStats, ProbabilityStats,
    SweepResult,
};
