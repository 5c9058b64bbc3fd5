//! Jump-penalized clustering of mixed-type time series.
//!
//! The crate fits a hard-clustering model to a time series whose features may
//! be continuous or categorical and possibly missing. Cluster assignments are
//! regularized by a per-switch penalty `lambda`, which favours persistent
//! regimes; distances between observations and cluster centroids use the
//! Gower metric so that continuous and categorical features combine on a
//! common [0, 1] scale. Missing cells are re-imputed from the current
//! centroids inside the fitting loop.
//!
//! Modules:
//! - [`dataset`]: mixed-type series container, schema parsing, CSV loading.
//! - [`gower`]: the distance and its per-feature contributions.
//! - [`jump`]: the coordinate-descent estimator and its dynamic-programming
//!   state decoder.
//! - [`selection`]: information-criterion and oracle-based hyperparameter
//!   selection.
//! - [`simulate`]: regime-switching data generators and the Monte Carlo
//!   benchmark harness.
//! - [`airquality`]: feature engineering, AQI computation, and the daily
//!   regime-decoding pipeline.

pub mod airquality;
pub mod dataset;
pub mod error;
pub mod gower;
pub mod jump;
pub mod selection;
pub mod simulate;

pub(crate) mod util;

pub use airquality::{
    add_indicators, aqi, conditional_stats, continuous_column, default_holidays,
    holidays_from_file, label_states, parse_holidays, partial_correlations, rolling_correlation,
    rolling_mean, run_pipeline, write_daily_table, write_report, AqiCategory, AqiReading,
    BreakpointSegment, PipelineConfig, PollutantBreakpoints, RegimeReport, StateSummary,
};
pub use dataset::{
    default_missing_tokens, load_csv, Column, ColumnSpec, FeatureKind, MixedSeries, Schema,
    TimeAxis, Value,
};
pub use error::{Error, Result};
pub use gower::{feature_contribution, gower_distance, GowerContext, Scale};
pub use jump::{
    decode_states, evaluate_objective, fit, fit_centroids, imputation_error, impute_step,
    CentroidMethod, Centroids, FitOptions, FitResult, StateSequence,
};
pub use selection::{
    bcd, gic, gic_from_parts, parse_gic_report, select, select_by_ari, write_gic_report,
    AriSelection, GicReport, GicRow, SelectOptions,
};
pub use simulate::{
    ari, default_lambda_grid, discretize, inject_missing, run_benchmark, simulate_chain,
    simulate_gaussian, simulate_mixed, BenchCell, BenchResult, MissingScheme, MissingSpec,
    Scenario, SimConfig,
};
