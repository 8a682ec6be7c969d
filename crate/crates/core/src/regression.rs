//! Least-squares polynomial fits with coefficient inference, and the
//! conversions between the positivity ratio `P/N` and the positivity
//! fraction `P/(P+N)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::stats::student_t_two_tailed;

/// How the predictor column of a [`ScatterData`] should be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XKind {
    /// Positivity ratio `P/N`, unbounded above.
    Ratio,
    /// Positivity fraction `P/(P+N)`, in `[0, 1]`.
    Fraction,
    Raw,
}

impl std::fmt::Display for XKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            XKind::Ratio => "ratio",
            XKind::Fraction => "fraction",
            XKind::Raw => "raw",
        })
    }
}

/// Paired observations of a predictor `x` and an outcome `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterData {
    pub points: Vec<(f64, f64)>,
    pub x_kind: XKind,
}

impl ScatterData {
    pub fn new(points: Vec<(f64, f64)>, x_kind: XKind) -> Result<Self> {
        let data = Self { points, x_kind };
        data.validate()?;
        Ok(data)
    }

    pub fn from_xy(xs: &[f64], ys: &[f64], x_kind: XKind) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(invalid(
                "scatter data",
                format!("{} x values but {} y values", xs.len(), ys.len()),
            ));
        }
        Self::new(xs.iter().copied().zip(ys.iter().copied()).collect(), x_kind)
    }

    pub fn validate(&self) -> Result<()> {
        for &(x, y) in &self.points {
            ensure_finite("x", x)?;
            ensure_finite("y", y)?;
            if self.x_kind == XKind::Fraction && !(0.0..=1.0).contains(&x) {
                return Err(invalid(
                    "positivity fraction",
                    format!("{x} lies outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn x_range(&self) -> Option<(f64, f64)> {
        self.points.iter().fold(None, |acc, &(x, _)| match acc {
            None => Some((x, x)),
            Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
        })
    }

    pub fn distinct_x(&self) -> usize {
        let mut xs = self.xs();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    }

    /// Re-expresses ratio data in the fraction parameterization.
    pub fn to_fraction(&self) -> Result<Self> {
        match self.x_kind {
            XKind::Fraction => Ok(self.clone()),
            XKind::Ratio => {
                let points = self
                    .points
                    .iter()
                    .map(|&(x, y)| ratio_to_fraction(x).map(|f| (f, y)))
                    .collect::<Result<Vec<_>>>()?;
                Self::new(points, XKind::Fraction)
            }
            XKind::Raw => Err(invalid("x kind", "raw predictors have no fraction form")),
        }
    }

    /// Re-expresses fraction data as ratios. Points with fraction 1 (no
    /// negative emotions) have no finite ratio and are dropped; the number
    /// dropped is returned alongside.
    pub fn to_ratio(&self) -> Result<(Self, usize)> {
        match self.x_kind {
            XKind::Ratio => Ok((self.clone(), 0)),
            XKind::Fraction => {
                let mut dropped = 0;
                let mut points = Vec::with_capacity(self.points.len());
                for &(f, y) in &self.points {
                    if f >= 1.0 {
                        dropped += 1;
                    } else {
                        points.push((fraction_to_ratio(f)?, y));
                    }
                }
                Ok((Self::new(points, XKind::Ratio)?, dropped))
            }
            XKind::Raw => Err(invalid("x kind", "raw predictors have no ratio form")),
        }
    }
}

/// `r / (1 + r)`: maps a ratio in `[0, inf)` onto `[0, 1)`.
pub fn ratio_to_fraction(r: f64) -> Result<f64> {
    ensure_finite("positivity ratio", r)?;
    if r < 0.0 {
        return Err(invalid("positivity ratio", format!("must be >= 0, got {r}")));
    }
    Ok(r / (1.0 + r))
}

/// `f / (1 - f)`, the inverse of [`ratio_to_fraction`].
pub fn fraction_to_ratio(f: f64) -> Result<f64> {
    ensure_finite("positivity fraction", f)?;
    if !(0.0..1.0).contains(&f) {
        return Err(invalid(
            "positivity fraction",
            format!("ratio is defined only for 0 <= f < 1, got {f}"),
        ));
    }
    Ok(f / (1.0 - f))
}

/// `p / (p + n)`, which stays defined when `n == 0`.
pub fn fraction_from_counts(p: f64, n: f64) -> Result<f64> {
    ensure_finite("positive count", p)?;
    ensure_finite("negative count", n)?;
    if p < 0.0 || n < 0.0 {
        return Err(invalid("counts", format!("must be >= 0, got p={p}, n={n}")));
    }
    if p + n == 0.0 {
        return Err(Error::UndefinedFraction);
    }
    Ok(p / (p + n))
}

/// A fitted polynomial `y = b0 + b1 x + ... + bd x^d` with per-coefficient
/// inference. Coefficients are always in the raw predictor basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub degree: usize,
    pub x_kind: XKind,
    pub coeffs: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    /// Two-tailed.
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub n: usize,
    pub df: usize,
    pub rss: f64,
    pub resid_var: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub x_mean: f64,
    pub x_sd: f64,
    pub y_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub x: f64,
    pub y: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inflection {
    pub x: f64,
    pub within_range: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Ordinary least squares fit of a degree-1, 2 or 3 polynomial.
///
/// The predictor is standardized before expansion and the system is solved
/// by Householder QR; coefficients and their covariance are then mapped
/// back to the raw basis.
pub fn fit_polynomial(data: &ScatterData, degree: usize) -> Result<RegressionFit> {
    if !(1..=3).contains(&degree) {
        return Err(invalid("degree", format!("must be 1, 2 or 3, got {degree}")));
    }
    data.validate()?;
    let n = data.len();
    let p = degree + 1;
    if n <= p {
        return Err(Error::InsufficientData {
            what: "polynomial fit with inference",
            needed: p + 1,
            got: n,
        });
    }
    let xs = data.xs();
    let ys = data.ys();
    let x_mean = mean(&xs);
    let x_sd = sample_sd(&xs);
    if x_sd == 0.0 {
        return Err(Error::SingularFit("all predictor values are identical".into()));
    }
    if data.distinct_x() <= degree {
        return Err(Error::SingularFit(format!(
            "{} distinct predictor values cannot identify a degree-{degree} fit",
            data.distinct_x()
        )));
    }

    let design = DMatrix::from_fn(n, p, |i, k| ((xs[i] - x_mean) / x_sd).powi(k as i32));
    let y = DVector::from_column_slice(&ys);
    let qr = design.clone().qr();
    let r = qr.r();
    let diag_max = (0..p).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    if (0..p).any(|k| r[(k, k)].abs() <= 1e-12 * diag_max) {
        return Err(Error::SingularFit("design matrix is rank deficient".into()));
    }
    let qty = qr.q().transpose() * &y;
    let centered = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularFit("triangular solve failed".into()))?;

    let resid = &y - &design * &centered;
    let y_scale = ys.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    // Residuals below rounding level carry no information; flooring keeps
    // standard errors positive for noiseless data.
    let rss_floor = n as f64 * (f64::EPSILON * y_scale).powi(2);
    let rss = resid.norm_squared().max(rss_floor);
    let df = n - p;
    let resid_var = rss / df as f64;

    let y_mean = mean(&ys);
    let tss: f64 = ys.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let r_squared = if tss > 0.0 {
        (1.0 - resid.norm_squared() / tss).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularFit("R factor is not invertible".into()))?;
    let cov_centered = (&r_inv * r_inv.transpose()) * resid_var;

    // b_j = sum_k c_k C(k, j) (-m)^(k-j) / s^k
    let to_raw = DMatrix::from_fn(p, p, |j, k| {
        if j > k {
            0.0
        } else {
            binomial(k, j) * (-x_mean).powi((k - j) as i32) / x_sd.powi(k as i32)
        }
    });
    let coeffs = &to_raw * &centered;
    let cov = &to_raw * cov_centered * to_raw.transpose();

    let std_errors: Vec<f64> = (0..p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    let coeffs: Vec<f64> = coeffs.iter().copied().collect();
    let t_stats: Vec<f64> = coeffs
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| b / se)
        .collect();
    let p_values = t_stats
        .iter()
        .map(|&t| student_t_two_tailed(t, df as f64))
        .collect::<Result<Vec<_>>>()?;
    let (x_min, x_max) = data.x_range().expect("non-empty data");

    Ok(RegressionFit {
        degree,
        x_kind: data.x_kind,
        coeffs,
        std_errors,
        t_stats,
        p_values,
        r_squared,
        n,
        df,
        rss,
        resid_var,
        x_min,
        x_max,
        x_mean,
        x_sd,
        y_sd: sample_sd(&ys),
    })
}

/// Evaluates the fitted polynomial at `x` (Horner).
pub fn predict(fit: &RegressionFit, x: f64) -> Result<f64> {
    ensure_finite("x", x)?;
    Ok(fit.coeffs.iter().rev().fold(0.0, |acc, &b| acc * x + b))
}

/// [`predict`], flagging points outside the range seen at fit time.
pub fn predict_flagged(fit: &RegressionFit, x: f64) -> Result<Prediction> {
    Ok(Prediction {
        x,
        y: predict(fit, x)?,
        extrapolated: x < fit.x_min || x > fit.x_max,
    })
}

/// Magnitude below which a fitted coefficient of order `power` is treated as
/// numerically absent: `1e-3 * sd(y) / sd(x)^power`.
pub fn coefficient_floor(fit: &RegressionFit, power: usize) -> f64 {
    1e-3 * fit.y_sd / fit.x_sd.powi(power as i32)
}

/// Inflection point `-b2 / (3 b3)` of a cubic fit, if the cubic term clears
/// [`coefficient_floor`].
pub fn inflection_point(fit: &RegressionFit) -> Result<Option<Inflection>> {
    if fit.degree != 3 {
        return Err(Error::WrongDegree {
            expected: 3,
            got: fit.degree,
        });
    }
    let b2 = fit.coeffs[2];
    let b3 = fit.coeffs[3];
    if !(b3.abs() > coefficient_floor(fit, 3)) {
        return Ok(None);
    }
    let x = -b2 / (3.0 * b3);
    Ok(Some(Inflection {
        x,
        within_range: x >= fit.x_min && x <= fit.x_max,
    }))
}
