//! Internal-consistency audit of a published two-group comparison against
//! a claimed critical ratio.
//!
//! From `(n1, n2, mean1, mean2, t)` alone the pipeline recovers the pooled
//! SD, bounds the support of the nonflourishing group, estimates how much of
//! that group lies above the threshold under normality, and recomputes the
//! p-value of the reported t. If more than the impurity allowance of the
//! nonflourishing group sits above the threshold, the data contradict a
//! tipping point there.

use serde::{Deserialize, Serialize};

use crate::claims::LOWER_CRITICAL_RATIO;
use crate::error::{invalid, Error, Result};
use crate::stats::{
    pooled_sd_from_t, student_t_sf, student_t_two_tailed, support_lower_bound,
    tail_fraction_above, SummaryStats, TailEstimate,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForensicsConfig {
    pub threshold: f64,
    /// Largest share of nonflourishers above the threshold still treated as
    /// measurement impurity.
    pub impurity_allowance: f64,
    /// Allowances the report additionally prints verdicts for.
    pub reported_allowances: Vec<f64>,
    /// SD ratios (flourishing / nonflourishing) for the sensitivity table.
    pub sd_ratios: Vec<f64>,
}

impl Default for ForensicsConfig {
    fn default() -> Self {
        Self {
            threshold: LOWER_CRITICAL_RATIO,
            impurity_allowance: 0.10,
            reported_allowances: vec![0.05, 0.10, 0.20],
            sd_ratios: vec![0.5, 0.75, 1.0, 1.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConsistentWithTipping,
    InconsistentWithTipping,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecomputedP {
    pub df: f64,
    pub one_tailed: f64,
    pub two_tailed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllowanceVerdict {
    pub allowance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForensicsReport {
    pub input: SummaryStats,
    pub threshold: f64,
    pub implied_sd: Option<f64>,
    /// Minimal upper support of the nonflourishing group.
    pub support_bound: Option<f64>,
    pub tail: Option<TailEstimate>,
    pub recomputed_p: RecomputedP,
    pub impurity_allowance: f64,
    pub verdict: Verdict,
    pub verdicts_by_allowance: Vec<AllowanceVerdict>,
    pub assumptions: Vec<String>,
    pub diagnostics: Vec<String>,
}

fn classify(tail: Option<&TailEstimate>, allowance: f64) -> Verdict {
    match tail {
        None => Verdict::Indeterminate,
        Some(t) if t.fraction_above > allowance => Verdict::InconsistentWithTipping,
        Some(_) => Verdict::ConsistentWithTipping,
    }
}

fn assumptions() -> Vec<String> {
    vec![
        "both groups share one standard deviation (pooled-variance t-test)".into(),
        "degrees of freedom n1 + n2 - 2, the pooled-variance convention".into(),
        "nonflourishing ratios treated as normal; an approximation, since ratios are nonnegative".into(),
        "only group means, sizes and t were published; no distributional facts beyond these are used".into(),
    ]
}

/// Runs the full chain on one published comparison. Degenerate statistics
/// yield an `Indeterminate` report with a diagnostic instead of an error.
pub fn audit(stats: &SummaryStats, config: &ForensicsConfig) -> Result<ForensicsReport> {
    stats.validate()?;
    if !(0.0..=1.0).contains(&config.impurity_allowance) {
        return Err(invalid("impurity allowance", "must lie in [0, 1]"));
    }
    let df = stats.df();
    let recomputed_p = RecomputedP {
        df,
        one_tailed: student_t_sf(stats.t_stat.abs(), df)?,
        two_tailed: student_t_two_tailed(stats.t_stat, df)?,
    };

    let mut diagnostics = Vec::new();
    let (implied_sd, support_bound, tail) = match pooled_sd_from_t(stats) {
        Ok(sd) => {
            let bound = match support_lower_bound(stats.mean2, sd) {
                Ok(m) => Some(m),
                Err(e) => {
                    diagnostics.push(format!("support bound unavailable: {e}"));
                    None
                }
            };
            (Some(sd), bound, Some(tail_fraction_above(stats.mean2, sd, config.threshold)?))
        }
        Err(e @ (Error::DegenerateStatistics(_) | Error::InconsistentSummary(_))) => {
            diagnostics.push(e.to_string());
            (None, None, None)
        }
        Err(e) => return Err(e),
    };
    if let Some(m) = support_bound {
        if m > config.threshold {
            diagnostics.push(format!(
                "nonflourishing support must reach at least {m:.4}, above the threshold {}",
                config.threshold
            ));
        }
    }

    let verdicts_by_allowance = config
        .reported_allowances
        .iter()
        .map(|&allowance| AllowanceVerdict {
            allowance,
            verdict: classify(tail.as_ref(), allowance),
        })
        .collect();

    Ok(ForensicsReport {
        input: *stats,
        threshold: config.threshold,
        implied_sd,
        support_bound,
        verdict: classify(tail.as_ref(), config.impurity_allowance),
        tail,
        recomputed_p,
        impurity_allowance: config.impurity_allowance,
        verdicts_by_allowance,
        assumptions: assumptions(),
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    /// Assumed SD(flourishing) / SD(nonflourishing).
    pub sd_ratio: f64,
    pub feasible: bool,
    pub sd_flourishing: Option<f64>,
    pub sd_nonflourishing: Option<f64>,
    pub tail: Option<TailEstimate>,
    pub note: Option<String>,
}

fn infeasible(sd_ratio: f64, note: String) -> SensitivityEntry {
    SensitivityEntry {
        sd_ratio,
        feasible: false,
        sd_flourishing: None,
        sd_nonflourishing: None,
        tail: None,
        note: Some(note),
    }
}

/// Drops the equal-SD assumption. For each assumed ratio `k` of group SDs,
/// solves the pooled-variance identity
/// `(n1-1) k^2 s2^2 + (n2-1) s2^2 = (n1+n2-2) s^2` for the nonflourishing
/// SD `s2` and recomputes the tail share above the threshold.
pub fn equal_variance_sensitivity(
    stats: &SummaryStats,
    sd_ratios: &[f64],
    threshold: f64,
) -> Result<Vec<SensitivityEntry>> {
    let pooled = pooled_sd_from_t(stats)?;
    let n1m = f64::from(stats.n1) - 1.0;
    let n2m = f64::from(stats.n2) - 1.0;
    let df = stats.df();
    Ok(sd_ratios
        .iter()
        .map(|&k| {
            if !(k > 0.0) || !k.is_finite() {
                return infeasible(k, format!("SD ratio must be positive and finite, got {k}"));
            }
            let factor = df / (n1m * k * k + n2m);
            let sd2 = pooled * factor.sqrt();
            let sd1 = k * sd2;
            if !(sd2 > 0.0) || !sd2.is_finite() || !sd1.is_finite() {
                return infeasible(k, format!("no positive finite group SDs for ratio {k}"));
            }
            match tail_fraction_above(stats.mean2, sd2, threshold) {
                Ok(tail) => SensitivityEntry {
                    sd_ratio: k,
                    feasible: true,
                    sd_flourishing: Some(sd1),
                    sd_nonflourishing: Some(sd2),
                    tail: Some(tail),
                    note: None,
                },
                Err(e) => infeasible(k, e.to_string()),
            }
        })
        .collect())
}
