//! Forensic re-analysis of positivity-ratio studies.
//!
//! * [`stats`]: pooled two-sample t (forward and inverted), support bounds,
//!   normal tail fractions and Student-t p-values.
//! * [`forensics`]: audits published two-group summaries against a
//!   claimed critical ratio.
//! * [`regression`]: polynomial least squares with inference, and the
//!   ratio/fraction reparameterization.
//! * [`changepoint`] and [`claims`]: the claim ladder, from a discontinuity
//!   at 2.9013 down to "no association".
//! * [`simulation`]: synthetic cohorts and dichotomized-design power.
//! * [`io`]: CSV ingestion and versioned JSON reports.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod changepoint;
pub mod claims;
pub mod error;
pub mod forensics;
pub mod io;
pub mod regression;
pub mod rng;
pub mod simulation;
pub mod special;
pub mod stats;

pub use changepoint::{scan_changepoint, ChangepointConfig, ChangepointScan};
pub use claims::{
    evaluate_all, test_correlation, test_inflection, test_nonlinearity, ClaimReport, ClaimVerdict,
    ClaimsConfig, Decision, ThresholdMode, LOWER_CRITICAL_RATIO, UPPER_CRITICAL_RATIO,
};
pub use error::{Error, Result};
pub use forensics::{audit, equal_variance_sensitivity, ForensicsConfig, ForensicsReport, Verdict};
pub use io::{load_records, AnalysisReport, LabeledSummary, Loaded, PositivityRecord, ReportResults};
pub use regression::{
    fit_polynomial, fraction_from_counts, fraction_to_ratio, inflection_point, predict,
    ratio_to_fraction, RegressionFit, ScatterData, XKind,
};
pub use simulation::{
    dichotomize_and_test, generate, power_comparison, DichotomyExperiment, GeneratorSpec,
    PowerConfig, PowerTable, Shape, XDist,
};
pub use stats::{
    normal_cdf, pooled_sd_from_t, student_t_sf, support_lower_bound, tail_fraction_above,
    two_sample_t, SummaryStats, TailEstimate,
};
