//! Objective metrics, best-of-N selection, frequency profiles and reports.

pub mod best_of_n;
pub mod evaluate;
pub mod metrics;
pub mod peaq;
pub mod profile;
pub mod report;

pub use best_of_n::{best_of_n, sample_candidates, select, select_candidate, Candidate, Selection};
pub use evaluate::{evaluate_system, excerpt_seed, excerpts, Excerpt};
pub use metrics::{excerpt_metrics, lsd, mse_root_power, snr, Metric, Metrics, LSD_FLOOR};
pub use peaq::{parse_peaq_output, peaq_scores, run_peaq, PeaqConfig, PeaqScores, PEAQ_ENV};
pub use profile::{
    frequency_profile, profile_consistency, profile_distance, restored_profile, signal_profile,
    FrequencyProfile, ProfileConsistency,
};
pub use report::{
    mean_std, Aggregate, ExcerptRecord, MetricReport, Protocol, System, REPORT_COLUMNS, REPORT_FILE,
    REPORT_HEADER, SUMMARY_FILE, SUMMARY_JSON, SUMMARY_METRICS,
};
