//! Statistics for benchmarking quality metrics against human ratings:
//! correlation coefficients, the five-parameter logistic mapping, bootstrap
//! intervals, and scoring of error maps as detectors of visible differences.

mod bootstrap;
mod classify;
mod fit;
mod report;
mod simplex;
mod stats;

pub use bootstrap::{bootstrap_ci, bootstrap_intervals, BootstrapConfig, Statistic};
pub use classify::{
    auc_roc, gain_gamma, gain_gamma_fit, mcc, mcc_sweep, visibility_labels, GAMMA_RANGE, MCC_STEPS,
    VISIBILITY_CUTOFF,
};
pub use fit::{apply_fit, logistic_fit, logistic_fit_from, FitParams, SLOPE_GRID};
pub use report::{benchmark, format_reports, metric_report, Interval, MetricReport, Rating, ScoreRow};
pub use stats::{fractional_ranks, krcc, plcc, rmse, srcc};
