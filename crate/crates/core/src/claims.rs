//! Verdicts for the ladder of successively weaker claims about how an
//! outcome depends on the positivity ratio, plus the two linear/null
//! alternatives.
//!
//! | id | claim                                                        |
//! |----|--------------------------------------------------------------|
//! | 1  | discontinuous jump at the configured threshold (2.9013)      |
//! | 2  | discontinuous jump somewhere inside the window around 3      |
//! | 3  | rapid change inside the window                               |
//! | 4  | inflection point inside the window                           |
//! | 5  | inflection point somewhere in the observed range             |
//! | 6  | some nonlinearity                                            |
//! | 7  | positive, essentially linear association                     |
//! | 8  | no association                                               |
//!
//! Stronger rungs imply weaker ones; [`evaluate_all`] enforces
//! 1,2 ⇒ 3 and 4 ⇒ 5 ⇒ 6 when it assembles a report.

use serde::{Deserialize, Serialize};

use crate::changepoint::{scan_changepoint, ChangepointConfig, ChangepointScan};
use crate::error::{invalid, Error, Result};
use crate::regression::{
    coefficient_floor, fit_polynomial, inflection_point, ratio_to_fraction, RegressionFit, ScatterData, XKind,
};
use crate::stats::student_t_two_tailed;

pub const LOWER_CRITICAL_RATIO: f64 = 2.9013;
pub const UPPER_CRITICAL_RATIO: f64 = 11.6346;

pub const MIN_POINTS_NONLINEARITY: usize = 10;
pub const MIN_POINTS_INFLECTION: usize = 15;
pub const MIN_POINTS_CORRELATION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Claim 1 requires the breakpoint within tolerance of `threshold`.
    Fixed,
    /// Claim 1 accepts a discontinuity at any sample-specific location.
    SampleSpecific,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClaimsConfig {
    pub alpha: f64,
    pub threshold: f64,
    pub threshold_tolerance: f64,
    pub threshold_mode: ThresholdMode,
    /// Centre of the "somewhere around" window used by claims 2-4.
    pub window_center: f64,
    pub window_half_width: f64,
    /// Claim 3 needs the steepest local slope to exceed this multiple of the
    /// median local slope.
    pub steepness_factor: f64,
    /// Fraction of the points in each local-line window of the smoother.
    pub smoothing_span: f64,
    pub changepoint: ChangepointConfig,
}

impl Default for ClaimsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            threshold: LOWER_CRITICAL_RATIO,
            threshold_tolerance: 0.1,
            threshold_mode: ThresholdMode::Fixed,
            window_center: 3.0,
            window_half_width: 1.0,
            steepness_factor: 4.0,
            smoothing_span: 0.3,
            changepoint: ChangepointConfig::default(),
        }
    }
}

impl ClaimsConfig {
    /// The same battery re-centred on another critical value.
    pub fn for_threshold(&self, threshold: f64) -> Self {
        Self {
            threshold,
            window_center: threshold,
            ..*self
        }
    }

    /// Converts the ratio-valued threshold and windows to the fraction
    /// scale. Intervals map through their endpoints, so a symmetric ratio
    /// window becomes the symmetric hull of its image.
    pub fn in_fraction_units(&self) -> Result<Self> {
        let map = |lo: f64, hi: f64| -> Result<(f64, f64)> {
            let (a, b) = (ratio_to_fraction(lo.max(0.0))?, ratio_to_fraction(hi)?);
            Ok(((a + b) / 2.0, (b - a) / 2.0))
        };
        let threshold = ratio_to_fraction(self.threshold)?;
        let (tc, th) = map(self.threshold - self.threshold_tolerance, self.threshold + self.threshold_tolerance)?;
        let (wc, wh) = map(
            self.window_center - self.window_half_width,
            self.window_center + self.window_half_width,
        )?;
        Ok(Self {
            threshold,
            threshold_tolerance: (threshold - (tc - th)).max(tc + th - threshold),
            window_center: wc,
            window_half_width: wh,
            ..*self
        })
    }

    fn in_window(&self, x: f64) -> bool {
        (x - self.window_center).abs() <= self.window_half_width
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.threshold_tolerance >= 0.0) || !(self.window_half_width >= 0.0) {
            return Err(invalid("window", "tolerances must be >= 0"));
        }
        if !(self.smoothing_span > 0.0 && self.smoothing_span <= 1.0) {
            return Err(invalid("smoothing span", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Supported,
    NotSupported,
    #[serde(rename = "untestable-with-this-data")]
    Untestable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub claim_id: u8,
    pub description: String,
    pub procedure: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub decision: Decision,
    pub details: String,
}

pub fn claim_description(id: u8) -> &'static str {
    match id {
        1 => "discontinuous jump exactly at the critical threshold",
        2 => "discontinuous jump somewhere near the critical value",
        3 => "rapid change somewhere near the critical value",
        4 => "inflection point near the critical value",
        5 => "inflection point somewhere in the observed range",
        6 => "some nonlinearity somewhere",
        7 => "positive, essentially linear association",
        8 => "no association",
        _ => "unknown claim",
    }
}

fn verdict(id: u8, procedure: &str) -> ClaimVerdict {
    ClaimVerdict {
        claim_id: id,
        description: claim_description(id).to_string(),
        procedure: procedure.to_string(),
        statistic: None,
        p_value: None,
        decision: Decision::Untestable,
        details: String::new(),
    }
}

fn untestable(id: u8, procedure: &str, reason: &str) -> ClaimVerdict {
    ClaimVerdict {
        details: reason.to_string(),
        ..verdict(id, procedure)
    }
}

fn decide(flag: bool) -> Decision {
    if flag {
        Decision::Supported
    } else {
        Decision::NotSupported
    }
}

const PROC_SEGMENTED: &str = "segmented-line F scan, residual permutation, cubic comparison";
const PROC_STEEPNESS: &str = "local-line smoother slope ratio";
const PROC_CUBIC: &str = "cubic term t-test and inflection location";
const PROC_QUADRATIC: &str = "quadratic term t-test";
const PROC_PEARSON: &str = "Pearson correlation t-test";

fn quadratic_verdict(fit: &RegressionFit, alpha: f64) -> ClaimVerdict {
    let b2 = fit.coeffs[2];
    let floor = coefficient_floor(fit, 2);
    let p = fit.p_values[2];
    let supported = p < alpha && b2.abs() > floor;
    let details = if b2.abs() <= floor {
        format!("b2 = {b2:.6e} is below the numerical floor {floor:.3e}")
    } else {
        format!(
            "b2 = {:.6} ± {:.6} (t = {:.4}, df = {}), {} curvature",
            b2,
            fit.std_errors[2],
            fit.t_stats[2],
            fit.df,
            if b2 < 0.0 { "concave" } else { "convex" }
        )
    };
    ClaimVerdict {
        statistic: Some(fit.t_stats[2]),
        p_value: Some(p),
        decision: decide(supported),
        details,
        ..verdict(6, PROC_QUADRATIC)
    }
}

fn nonlinearity_with_fit(data: &ScatterData, config: &ClaimsConfig) -> Result<(ClaimVerdict, RegressionFit)> {
    if data.len() < MIN_POINTS_NONLINEARITY {
        return Err(Error::InsufficientData {
            what: "nonlinearity test",
            needed: MIN_POINTS_NONLINEARITY,
            got: data.len(),
        });
    }
    let fit = fit_polynomial(data, 2)?;
    Ok((quadratic_verdict(&fit, config.alpha), fit))
}

/// Claim 6: significance of the quadratic term.
pub fn test_nonlinearity(data: &ScatterData, config: &ClaimsConfig) -> Result<ClaimVerdict> {
    config.validate()?;
    nonlinearity_with_fit(data, config).map(|(v, _)| v)
}

fn inflection_with_fit(
    data: &ScatterData,
    config: &ClaimsConfig,
) -> Result<([ClaimVerdict; 2], RegressionFit)> {
    if data.len() < MIN_POINTS_INFLECTION {
        return Err(Error::InsufficientData {
            what: "inflection test",
            needed: MIN_POINTS_INFLECTION,
            got: data.len(),
        });
    }
    let fit = fit_polynomial(data, 3)?;
    let p = fit.p_values[3];
    let significant = p < config.alpha;
    let ip = inflection_point(&fit)?;
    let (claim5, claim4, details) = match ip {
        None => (
            false,
            false,
            format!(
                "cubic term {:.6e} below numerical floor; no inflection",
                fit.coeffs[3]
            ),
        ),
        Some(ip) => {
            let c5 = significant && ip.within_range;
            let c4 = c5 && config.in_window(ip.x);
            let where_ = if ip.within_range { "inside" } else { "outside" };
            (
                c5,
                c4,
                format!(
                    "b3 = {:.6} ± {:.6}, inflection at x = {:.6} ({where_} observed range [{:.6}, {:.6}])",
                    fit.coeffs[3], fit.std_errors[3], ip.x, fit.x_min, fit.x_max
                ),
            )
        }
    };
    let mk = |id: u8, ok: bool| ClaimVerdict {
        statistic: Some(fit.t_stats[3]),
        p_value: Some(p),
        decision: decide(ok),
        details: details.clone(),
        ..verdict(id, PROC_CUBIC)
    };
    Ok(([mk(4, claim4), mk(5, claim5)], fit))
}

/// Claims 4 and 5, in that order.
pub fn test_inflection(data: &ScatterData, config: &ClaimsConfig) -> Result<[ClaimVerdict; 2]> {
    config.validate()?;
    inflection_with_fit(data, config).map(|(v, _)| v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub t: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn pearson(data: &ScatterData) -> Result<Correlation> {
    let n = data.len();
    if n < MIN_POINTS_CORRELATION {
        return Err(Error::InsufficientData {
            what: "correlation",
            needed: MIN_POINTS_CORRELATION,
            got: n,
        });
    }
    let xs = data.xs();
    let ys = data.ys();
    let xm = xs.iter().sum::<f64>() / n as f64;
    let ym = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - xm) * (x - xm);
        syy += (y - ym) * (y - ym);
        sxy += (x - xm) * (y - ym);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(format!(
            "zero variance in the {} column",
            if sxx == 0.0 { "predictor" } else { "outcome" }
        )));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    // Perfect correlation: keep t finite so reports stay serializable.
    let t = r * (df / (1.0 - r * r).max(1e-300)).sqrt();
    let p_value = student_t_two_tailed(t, df)?;
    Ok(Correlation { r, t, p_value, n })
}

fn correlation_verdicts(corr: &Correlation, config: &ClaimsConfig, claim6_supported: bool) -> [ClaimVerdict; 2] {
    let significant = corr.p_value < config.alpha;
    let s7 = significant && corr.r > 0.0 && !claim6_supported;
    let s8 = !significant;
    let mut details = format!("r = {:.6}, n = {}", corr.r, corr.n);
    if significant && corr.r < 0.0 {
        details.push_str("; significant negative correlation");
    }
    if significant && corr.r > 0.0 && claim6_supported {
        details.push_str("; positive but nonlinear (claim 6 supported)");
    }
    let mk = |id: u8, ok: bool| ClaimVerdict {
        statistic: Some(corr.t),
        p_value: Some(corr.p_value),
        decision: decide(ok),
        details: details.clone(),
        ..verdict(id, PROC_PEARSON)
    };
    [mk(7, s7), mk(8, s8)]
}

/// Scenarios 7 and 8. Scenario 7 also needs claim 6 unsupported; it is
/// evaluated here when the sample is large enough and treated as
/// unsupported otherwise.
pub fn test_correlation(data: &ScatterData, config: &ClaimsConfig) -> Result<[ClaimVerdict; 2]> {
    config.validate()?;
    let corr = pearson(data)?;
    let claim6 = if data.len() >= MIN_POINTS_NONLINEARITY {
        match test_nonlinearity(data, config) {
            Ok(v) => v.decision == Decision::Supported,
            Err(Error::SingularFit(_)) => false,
            Err(e) => return Err(e),
        }
    } else {
        false
    };
    Ok(correlation_verdicts(&corr, config, claim6))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Steepness {
    pub ratio: f64,
    pub steepest_x: f64,
    pub max_slope: f64,
    pub median_slope: f64,
}

/// Local-line smoother: for each sorted point, the least-squares slope over
/// a window holding `span` of the data. Returns the ratio of the steepest
/// absolute slope to the median absolute slope.
pub fn steepness(data: &ScatterData, span: f64) -> Option<Steepness> {
    let mut pts = data.points.clone();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len();
    let w = ((span * n as f64).ceil() as usize).clamp(5, n);
    if n < 5 {
        return None;
    }
    let mut slopes: Vec<(f64, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let start = i.saturating_sub(w / 2).min(n - w);
        let win = &pts[start..start + w];
        let m = w as f64;
        let xm = win.iter().map(|p| p.0).sum::<f64>() / m;
        let ym = win.iter().map(|p| p.1).sum::<f64>() / m;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for p in win {
            sxx += (p.0 - xm) * (p.0 - xm);
            sxy += (p.0 - xm) * (p.1 - ym);
        }
        if sxx > 0.0 {
            slopes.push((pts[i].0, (sxy / sxx).abs()));
        }
    }
    if slopes.is_empty() {
        return None;
    }
    let (steepest_x, max_slope) = slopes
        .iter()
        .copied()
        .fold((f64::NAN, -1.0), |acc, s| if s.1 > acc.1 { s } else { acc });
    let mut mags: Vec<f64> = slopes.iter().map(|s| s.1).collect();
    mags.sort_by(f64::total_cmp);
    let median_slope = crate::changepoint::quantile_sorted(&mags, 0.5);
    let ratio = if max_slope == 0.0 {
        0.0
    } else {
        max_slope / median_slope.max(max_slope * 1e-12)
    };
    Some(Steepness {
        ratio,
        steepest_x,
        max_slope,
        median_slope,
    })
}

/// Why a dataset cannot speak to claims 1-6 at all, if it cannot.
///
/// An outcome with at most two levels whose classes overlap in the
/// predictor is a dichotomized design; so is a binary outcome observed at
/// fewer distinct predictor values than the changepoint scan needs (group
/// summaries).
pub fn dichotomized_reason(data: &ScatterData) -> Option<String> {
    let mut ys = data.ys();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    if ys.len() > 2 {
        return None;
    }
    if ys.len() == 1 {
        return Some("outcome is constant".into());
    }
    let (lo_y, hi_y) = (ys[0], ys[1]);
    let range = |level: f64| {
        data.points
            .iter()
            .filter(|p| p.1 == level)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)))
    };
    let (lo_min, lo_max) = range(lo_y);
    let (hi_min, hi_max) = range(hi_y);
    let overlap = lo_max >= hi_min && hi_max >= lo_min;
    if overlap {
        return Some("two-level outcome with overlapping classes: a dichotomized design carries no information about the shape of the relation".into());
    }
    if data.distinct_x() < crate::changepoint::MIN_DISTINCT_X {
        return Some(format!(
            "two-level outcome observed at only {} distinct predictor values (group summaries)",
            data.distinct_x()
        ));
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub x_kind: XKind,
    pub n: usize,
    pub threshold: f64,
    /// Ordered claims 1 through 8.
    pub verdicts: Vec<ClaimVerdict>,
    pub changepoint: Option<ChangepointScan>,
    pub steepness: Option<Steepness>,
    pub quadratic: Option<RegressionFit>,
    pub cubic: Option<RegressionFit>,
    pub correlation: Option<Correlation>,
    /// Operational choices that are conventions rather than estimates.
    pub conventions: Vec<String>,
}

impl ClaimReport {
    pub fn verdict(&self, id: u8) -> &ClaimVerdict {
        &self.verdicts[usize::from(id) - 1]
    }

    pub fn supported(&self) -> Vec<u8> {
        self.verdicts
            .iter()
            .filter(|v| v.decision == Decision::Supported)
            .map(|v| v.claim_id)
            .collect()
    }
}

/// Converts the "cannot test this" errors into `None`, keeping the reason.
fn testable<T>(r: Result<T>) -> Result<std::result::Result<T, String>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e @ (Error::InsufficientData { .. } | Error::SingularFit(_) | Error::UndefinedCorrelation(_))) => {
            Ok(Err(e.to_string()))
        }
        Err(e) => Err(e),
    }
}

fn implied(mut v: ClaimVerdict, by: u8) -> ClaimVerdict {
    if v.decision != Decision::Supported {
        let own = match v.decision {
            Decision::NotSupported => "own test not significant",
            _ => "own test not applicable",
        };
        v.details = format!("implied by claim {by} ({own}; {})", v.details);
        v.decision = Decision::Supported;
    }
    v
}

/// Runs the full battery and returns verdicts for claims 1-8 in order.
pub fn evaluate_all(data: &ScatterData, config: &ClaimsConfig) -> Result<ClaimReport> {
    config.validate()?;
    data.validate()?;

    let mut report = ClaimReport {
        x_kind: data.x_kind,
        n: data.len(),
        threshold: config.threshold,
        verdicts: Vec::with_capacity(8),
        changepoint: None,
        steepness: None,
        quadratic: None,
        cubic: None,
        correlation: None,
        conventions: vec![
            format!(
                "claim 3 'rapid change' means a local slope above {} x the median local slope",
                config.steepness_factor
            ),
            match config.threshold_mode {
                ThresholdMode::Fixed => format!(
                    "claim 1 requires the break within {} of {}",
                    config.threshold_tolerance, config.threshold
                ),
                ThresholdMode::SampleSpecific => "claim 1 accepts a break at any location".into(),
            },
        ],
    };

    let (c7, c8);
    if let Some(reason) = dichotomized_reason(data) {
        let mut v: Vec<ClaimVerdict> = (1..=6)
            .map(|id| {
                let procedure = match id {
                    1 | 2 => PROC_SEGMENTED,
                    3 => PROC_STEEPNESS,
                    4 | 5 => PROC_CUBIC,
                    _ => PROC_QUADRATIC,
                };
                untestable(id, procedure, &reason)
            })
            .collect();
        match testable(pearson(data))? {
            Ok(corr) => {
                let [a, b] = correlation_verdicts(&corr, config, false);
                report.correlation = Some(corr);
                c7 = a;
                c8 = b;
            }
            Err(why) => {
                c7 = untestable(7, PROC_PEARSON, &why);
                c8 = untestable(8, PROC_PEARSON, &why);
            }
        }
        v.push(c7);
        v.push(c8);
        report.verdicts = v;
        return Ok(report);
    }

    // Claims 4-6 first: the cubic fit is also the smooth alternative the
    // discontinuity claims must beat.
    let (c4, mut c5) = match testable(inflection_with_fit(data, config))? {
        Ok(([v4, v5], fit)) => {
            report.cubic = Some(fit);
            (v4, v5)
        }
        Err(why) => (untestable(4, PROC_CUBIC, &why), untestable(5, PROC_CUBIC, &why)),
    };
    let mut c6 = match testable(nonlinearity_with_fit(data, config))? {
        Ok((v, fit)) => {
            report.quadratic = Some(fit);
            v
        }
        Err(why) => untestable(6, PROC_QUADRATIC, &why),
    };

    let scan = testable(scan_changepoint(data, &config.changepoint))?;
    let (c1, c2, mut c3) = match &scan {
        Err(why) => (
            untestable(1, PROC_SEGMENTED, why),
            untestable(2, PROC_SEGMENTED, why),
            untestable(3, PROC_STEEPNESS, why),
        ),
        Ok(scan) => {
            let significant = scan.p_value < config.alpha;
            let smooth_rss = report.cubic.as_ref().map(|f| f.rss);
            let beats_smooth = smooth_rss.is_none_or(|rss| scan.rss_segmented < rss);
            let discontinuous = significant && beats_smooth;
            let at_threshold = match config.threshold_mode {
                ThresholdMode::Fixed => (scan.best_x - config.threshold).abs() <= config.threshold_tolerance,
                ThresholdMode::SampleSpecific => true,
            };
            let near = config.in_window(scan.best_x);
            let details = format!(
                "best break at x = {:.6}, jump {:.6}, F = {:.6}, segmented RSS {:.6e} vs cubic RSS {}",
                scan.best_x,
                scan.jump,
                scan.improvement_stat,
                scan.rss_segmented,
                smooth_rss.map_or("n/a".to_string(), |r| format!("{r:.6e}")),
            );
            let mk = |id: u8, ok: bool| ClaimVerdict {
                statistic: Some(scan.improvement_stat),
                p_value: Some(scan.p_value),
                decision: decide(ok),
                details: details.clone(),
                ..verdict(id, PROC_SEGMENTED)
            };
            let c1 = mk(1, discontinuous && at_threshold);
            let c2 = mk(2, discontinuous && near);

            let c3 = match steepness(data, config.smoothing_span) {
                Some(st) => {
                    report.steepness = Some(st);
                    let ok = significant && st.ratio > config.steepness_factor && config.in_window(st.steepest_x);
                    ClaimVerdict {
                        statistic: Some(st.ratio),
                        p_value: Some(scan.p_value),
                        decision: decide(ok),
                        details: format!(
                            "steepest local slope {:.6} at x = {:.6}, {:.4}x the median slope {:.6}",
                            st.max_slope, st.steepest_x, st.ratio, st.median_slope
                        ),
                        ..verdict(3, PROC_STEEPNESS)
                    }
                }
                None => untestable(3, PROC_STEEPNESS, "too few points for the smoother"),
            };
            (c1, c2, c3)
        }
    };
    report.changepoint = scan.ok();

    if c1.decision == Decision::Supported {
        c3 = implied(c3, 1);
    } else if c2.decision == Decision::Supported {
        c3 = implied(c3, 2);
    }
    if c4.decision == Decision::Supported {
        c5 = implied(c5, 4);
    }
    if c5.decision == Decision::Supported {
        c6 = implied(c6, 5);
    }

    let claim6 = c6.decision == Decision::Supported;
    match testable(pearson(data))? {
        Ok(corr) => {
            let [a, b] = correlation_verdicts(&corr, config, claim6);
            report.correlation = Some(corr);
            c7 = a;
            c8 = b;
        }
        Err(why) => {
            c7 = untestable(7, PROC_PEARSON, &why);
            c8 = untestable(8, PROC_PEARSON, &why);
        }
    }

    report.verdicts = vec![c1, c2, c3, c4, c5, c6, c7, c8];
    Ok(report)
}
