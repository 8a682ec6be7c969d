//! Elementary statistical operations on published summary statistics:
//! the pooled two-sample t-test (forward and inverted), the variance bound
//! for nonnegative bounded variables, normal tail fractions and Student-t
//! p-values.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::special::{erfc, regularized_incomplete_beta};

/// Group-level statistics of a published two-group comparison.
///
/// Group 1 is the "flourishing" group and group 2 the "nonflourishing" one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n1: u32,
    pub n2: u32,
    pub mean1: f64,
    pub mean2: f64,
    pub t_stat: f64,
}

impl SummaryStats {
    pub fn new(n1: u32, n2: u32, mean1: f64, mean2: f64, t_stat: f64) -> Result<Self> {
        let stats = Self {
            n1,
            n2,
            mean1,
            mean2,
            t_stat,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 < 2 || self.n2 < 2 {
            return Err(invalid(
                "group sizes",
                format!("need n1, n2 >= 2, got {} and {}", self.n1, self.n2),
            ));
        }
        ensure_finite("mean1", self.mean1)?;
        ensure_finite("mean2", self.mean2)?;
        ensure_finite("t statistic", self.t_stat)?;
        if self.mean1 < 0.0 || self.mean2 < 0.0 {
            return Err(invalid(
                "group means",
                "positivity ratios are nonnegative, so means must be >= 0",
            ));
        }
        Ok(())
    }

    /// Degrees of freedom of the pooled-variance test, `n1 + n2 - 2`.
    pub fn df(&self) -> f64 {
        f64::from(self.n1) + f64::from(self.n2) - 2.0
    }

    /// `sqrt(1/n1 + 1/n2)`
    fn size_factor(&self) -> f64 {
        (1.0 / f64::from(self.n1) + 1.0 / f64::from(self.n2)).sqrt()
    }
}

/// Normal-theory estimate of the share of a group lying above a cut value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub mu: f64,
    pub sigma: f64,
    pub threshold: f64,
    pub fraction_above: f64,
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> Result<f64> {
    ensure_finite("z", z)?;
    Ok(0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2))
}

/// Standard normal survival function `1 - Φ(z)`, without cancellation in
/// the upper tail.
pub fn normal_sf(z: f64) -> Result<f64> {
    ensure_finite("z", z)?;
    Ok(0.5 * erfc(z * std::f64::consts::FRAC_1_SQRT_2))
}

/// One-tailed upper p-value `P(T > t)` for Student's t with `df` degrees of
/// freedom.
pub fn student_t_sf(t: f64, df: f64) -> Result<f64> {
    ensure_finite("t", t)?;
    if !(df >= 1.0) || !df.is_finite() {
        return Err(invalid("degrees of freedom", format!("need df >= 1, got {df}")));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    let tail = 0.5 * regularized_incomplete_beta(x, y, 0.5 * df, 0.5);
    Ok(if t > 0.0 { tail } else { 1.0 - tail })
}

/// Two-tailed p-value `P(|T| > |t|)`: twice the one-tailed value.
pub fn student_t_two_tailed(t: f64, df: f64) -> Result<f64> {
    Ok((2.0 * student_t_sf(t.abs(), df)?).min(1.0))
}

/// The `t` for which `student_t_sf(t, df) == p`.
pub fn student_t_upper_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("probability", format!("need 0 < p < 1, got {p}")));
    }
    if p > 0.5 {
        return Ok(-student_t_upper_quantile(1.0 - p, df)?);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while student_t_sf(hi, df)? > p {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_sf(mid, df)? > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pooled-variance two-sample t statistic for a common SD estimate `s`:
/// `(mean1 - mean2) / (s * sqrt(1/n1 + 1/n2))`.
pub fn two_sample_t(stats: &SummaryStats, s: f64) -> Result<f64> {
    stats.validate()?;
    ensure_finite("pooled SD", s)?;
    if s <= 0.0 {
        return Err(invalid("pooled SD", format!("must be > 0, got {s}")));
    }
    Ok((stats.mean1 - stats.mean2) / (s * stats.size_factor()))
}

/// Inverts [`two_sample_t`]: the common SD implied by a reported t.
pub fn pooled_sd_from_t(stats: &SummaryStats) -> Result<f64> {
    stats.validate()?;
    let diff = stats.mean1 - stats.mean2;
    if stats.t_stat == 0.0 {
        return Err(Error::DegenerateStatistics(
            "t = 0 implies an unbounded pooled SD".into(),
        ));
    }
    if diff == 0.0 {
        return Err(Error::InconsistentSummary(format!(
            "equal means cannot produce t = {}",
            stats.t_stat
        )));
    }
    if diff.signum() != stats.t_stat.signum() {
        return Err(Error::InconsistentSummary(format!(
            "mean difference {diff} and t = {} have opposite signs",
            stats.t_stat
        )));
    }
    Ok(diff / (stats.t_stat * stats.size_factor()))
}

/// Smallest upper end `M` of a support `[0, M]` compatible with mean `mu`
/// and SD `sigma`: from `sigma^2 <= mu (M - mu)`, `M >= mu + sigma^2 / mu`.
pub fn support_lower_bound(mu: f64, sigma: f64) -> Result<f64> {
    ensure_finite("mu", mu)?;
    ensure_finite("sigma", sigma)?;
    if mu <= 0.0 {
        return Err(invalid("mu", format!("must be > 0, got {mu}")));
    }
    if sigma < 0.0 {
        return Err(invalid("sigma", format!("must be >= 0, got {sigma}")));
    }
    Ok(mu + sigma * sigma / mu)
}

/// Share of a normal population `N(mu, sigma^2)` lying above `threshold`.
pub fn tail_fraction_above(mu: f64, sigma: f64, threshold: f64) -> Result<TailEstimate> {
    ensure_finite("mu", mu)?;
    ensure_finite("sigma", sigma)?;
    ensure_finite("threshold", threshold)?;
    if sigma <= 0.0 {
        return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
    }
    let fraction_above = normal_sf((threshold - mu) / sigma)?;
    Ok(TailEstimate {
        mu,
        sigma,
        threshold,
        fraction_above,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample1() -> SummaryStats {
        SummaryStats::new(36, 51, 3.2, 2.3, 2.32).unwrap()
    }

    fn sample2() -> SummaryStats {
        SummaryStats::new(9, 92, 3.4, 2.1, 1.62).unwrap()
    }

    #[test]
    fn normal_cdf_examples() {
        assert_eq!(normal_cdf(0.0).unwrap(), 0.5);
        assert!((normal_cdf(8.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(normal_cdf(f64::NAN).is_err());
        assert!(normal_cdf(f64::INFINITY).is_err());
    }

    #[test]
    fn student_t_examples() {
        let p = student_t_sf(1.62, 99.0).unwrap();
        assert!((p - 0.0542).abs() < 0.0005, "p = {p}");
        for df in [1.0, 3.0, 99.0, 1e4] {
            assert_eq!(student_t_sf(0.0, df).unwrap(), 0.5);
        }
        assert!((student_t_sf(1.0, 1.0).unwrap() - 0.25).abs() < 1e-14);
        assert!(student_t_sf(1.0, 0.5).is_err());
        assert!(student_t_sf(f64::NAN, 5.0).is_err());
    }

    #[test]
    fn student_t_negative_argument_is_complement() {
        let up = student_t_sf(1.3, 7.0).unwrap();
        let down = student_t_sf(-1.3, 7.0).unwrap();
        assert!((up + down - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_tailed_doubles() {
        let one = student_t_sf(1.62, 99.0).unwrap();
        assert!((student_t_two_tailed(-1.62, 99.0).unwrap() - 2.0 * one).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_sf() {
        for (p, df) in [(0.025, 47.0), (0.05, 3.0), (0.3, 1.0), (0.9, 12.0)] {
            let t = student_t_upper_quantile(p, df).unwrap();
            assert!((student_t_sf(t, df).unwrap() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn inversion_reproduces_published_sds() {
        let s1 = pooled_sd_from_t(&sample1()).unwrap();
        let s2 = pooled_sd_from_t(&sample2()).unwrap();
        assert!((s1 - 1.78).abs() < 0.01, "s1 = {s1}");
        assert!((s2 - 2.30).abs() < 0.01, "s2 = {s2}");
    }

    #[test]
    fn forward_t_examples() {
        let t1 = two_sample_t(&sample1(), 1.782).unwrap();
        let t2 = two_sample_t(&sample2(), 2.298).unwrap();
        assert!((t1 - 2.32).abs() < 0.005, "t1 = {t1}");
        assert!((t2 - 1.62).abs() < 0.005, "t2 = {t2}");
        let equal = SummaryStats::new(10, 12, 2.0, 2.0, 0.0).unwrap();
        assert_eq!(two_sample_t(&equal, 1.3).unwrap(), 0.0);
        assert!(two_sample_t(&equal, 0.0).is_err());
        assert!(two_sample_t(&equal, -1.0).is_err());
    }

    #[test]
    fn inversion_errors() {
        let zero_t = SummaryStats::new(10, 10, 3.0, 2.0, 0.0).unwrap();
        assert!(matches!(
            pooled_sd_from_t(&zero_t),
            Err(Error::DegenerateStatistics(_))
        ));
        let flipped = SummaryStats::new(10, 10, 3.0, 2.0, -1.5).unwrap();
        assert!(matches!(
            pooled_sd_from_t(&flipped),
            Err(Error::InconsistentSummary(_))
        ));
        let same_means = SummaryStats::new(10, 10, 2.0, 2.0, 1.5).unwrap();
        assert!(matches!(
            pooled_sd_from_t(&same_means),
            Err(Error::InconsistentSummary(_))
        ));
    }

    #[test]
    fn summary_stats_invariants() {
        assert!(SummaryStats::new(1, 10, 1.0, 1.0, 1.0).is_err());
        assert!(SummaryStats::new(10, 10, -1.0, 1.0, 1.0).is_err());
        assert!(SummaryStats::new(10, 10, f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn support_bound_examples() {
        assert!((support_lower_bound(2.3, 1.782).unwrap() - 3.68).abs() < 0.01);
        assert!((support_lower_bound(2.1, 2.298).unwrap() - 4.61).abs() < 0.01);
        assert_eq!(support_lower_bound(2.7, 0.0).unwrap(), 2.7);
        assert!(support_lower_bound(0.0, 1.0).is_err());
        assert!(support_lower_bound(1.0, -1.0).is_err());
    }

    #[test]
    fn tail_examples() {
        let a = tail_fraction_above(2.3, 1.782, 2.9013).unwrap();
        let b = tail_fraction_above(2.1, 2.298, 2.9013).unwrap();
        assert!((a.fraction_above - 0.368).abs() < 0.0005, "{a:?}");
        assert!((b.fraction_above - 0.364).abs() < 0.0005, "{b:?}");
        assert_eq!(tail_fraction_above(1.7, 0.4, 1.7).unwrap().fraction_above, 0.5);
        assert!(tail_fraction_above(1.0, 0.0, 2.0).is_err());
    }

    /// Two-point law on {0, M} with mean mu: P(M) = mu / M.
    #[test]
    fn support_bound_attained_by_two_point_law() {
        for &(mu, m) in &[(2.3, 3.68), (1.0, 10.0), (0.4, 0.5)] {
            let p = mu / m;
            let mean = p * m;
            let var = p * m * m - mean * mean;
            let bound = support_lower_bound(mean, var.sqrt()).unwrap();
            assert!((bound - m).abs() < 1e-12 * m);
            // Any smaller support is too narrow for this variance.
            assert!(var > mean * (0.999 * m - mean));
        }
    }

    proptest! {
        #[test]
        fn normal_cdf_symmetry(z in -40.0f64..40.0) {
            let s = normal_cdf(z).unwrap() + normal_cdf(-z).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn normal_cdf_monotone(z in -10.0f64..10.0, dz in 0.0f64..1.0) {
            prop_assert!(normal_cdf(z + dz).unwrap() >= normal_cdf(z).unwrap());
        }

        #[test]
        fn student_t_decreasing(t in -20.0f64..20.0, dt in 1e-3f64..2.0, df in 1.0f64..500.0) {
            // Near 1 the upper tail saturates in f64, so strictness is checked
            // on whichever tail is the small one.
            let (a, b) = (student_t_sf(t, df).unwrap(), student_t_sf(t + dt, df).unwrap());
            prop_assert!(b <= a);
            if t >= 0.0 {
                prop_assert!(b < a);
            } else if t + dt <= 0.0 {
                let (ca, cb) = (student_t_sf(-t, df).unwrap(), student_t_sf(-t - dt, df).unwrap());
                prop_assert!(ca < cb);
            }
        }

        #[test]
        fn student_t_normal_limit(t in -6.0f64..6.0) {
            let gap = (student_t_sf(t, 1e6).unwrap() - normal_sf(t).unwrap()).abs();
            prop_assert!(gap < 1e-4);
        }

        #[test]
        fn inversion_round_trip(
            n1 in 2u32..500, n2 in 2u32..500,
            mean2 in 0.0f64..10.0, diff in 0.01f64..5.0, t in 0.05f64..20.0,
        ) {
            let stats = SummaryStats::new(n1, n2, mean2 + diff, mean2, t).unwrap();
            let s = pooled_sd_from_t(&stats).unwrap();
            prop_assert!(s > 0.0);
            let back = two_sample_t(&stats, s).unwrap();
            prop_assert!(((back - t) / t).abs() < 1e-10);
        }

        #[test]
        fn tail_monotone(mu in 0.0f64..5.0, sigma in 0.1f64..5.0, dx in 0.0f64..3.0, step in 0.01f64..1.0) {
            let x = mu + dx + 0.01;
            let base = tail_fraction_above(mu, sigma, x).unwrap().fraction_above;
            prop_assert!((0.0..=1.0).contains(&base));
            let further = tail_fraction_above(mu, sigma, x + step).unwrap().fraction_above;
            prop_assert!(further <= base);
            let wider = tail_fraction_above(mu, sigma + step, x).unwrap().fraction_above;
            prop_assert!(wider >= base);
        }
    }
}
