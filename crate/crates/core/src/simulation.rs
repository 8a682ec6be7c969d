//! Synthetic cohorts for the four nonlinear shapes, the dichotomized
//! group-means t-test, and power comparisons between that test and tests
//! run on the full scatter.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{scan_changepoint, ChangepointConfig};
use crate::claims::{test_nonlinearity, ClaimsConfig, Decision};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::regression::{ScatterData, XKind};
use crate::rng::{seeded, stream_id, substream};
use crate::stats::{normal_cdf, student_t_sf, student_t_two_tailed, two_sample_t, SummaryStats};

/// Outcome as a function of the positivity ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Linear { intercept: f64, slope: f64 },
    /// Jump from `low` to `high` at `location`.
    Step { location: f64, low: f64, high: f64 },
    Logistic { center: f64, slope: f64, low: f64, high: f64 },
    /// `peak - curvature * (x - vertex)^2`
    InvertedU { vertex: f64, peak: f64, curvature: f64 },
}

impl Shape {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Shape::Linear { intercept, slope } => intercept + slope * x,
            Shape::Step { location, low, high } => {
                if x < location {
                    low
                } else {
                    high
                }
            }
            Shape::Logistic { center, slope, low, high } => {
                low + (high - low) / (1.0 + (-slope * (x - center)).exp())
            }
            Shape::InvertedU { vertex, peak, curvature } => peak - curvature * (x - vertex).powi(2),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Linear { .. } => "linear",
            Shape::Step { .. } => "step",
            Shape::Logistic { .. } => "logistic",
            Shape::InvertedU { .. } => "inverted_u",
        }
    }

    fn validate(&self) -> Result<()> {
        let params: Vec<f64> = match *self {
            Shape::Linear { intercept, slope } => vec![intercept, slope],
            Shape::Step { location, low, high } => vec![location, low, high],
            Shape::Logistic { center, slope, low, high } => {
                if !(slope > 0.0) {
                    return Err(invalid("logistic slope", format!("must be > 0, got {slope}")));
                }
                vec![center, slope, low, high]
            }
            Shape::InvertedU { vertex, peak, curvature } => vec![vertex, peak, curvature],
        };
        for p in params {
            ensure_finite("shape parameter", p)?;
        }
        Ok(())
    }

    /// Points where the shape is discontinuous.
    fn breaks(&self) -> Vec<f64> {
        match *self {
            Shape::Step { location, .. } => vec![location],
            _ => Vec::new(),
        }
    }
}

/// Predictor distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XDist {
    /// Log-normal with the given median and log-scale SD, truncated to
    /// `(0, x_max]`.
    LogNormal { median: f64, spread: f64, x_max: f64 },
    /// `n` evenly spaced values from `min` to `max`.
    Grid { min: f64, max: f64 },
}

impl Default for XDist {
    fn default() -> Self {
        XDist::LogNormal {
            median: 2.5,
            spread: 0.5,
            x_max: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub shape: Shape,
    pub noise_sd: f64,
    pub n: usize,
    #[serde(default)]
    pub x_dist: XDist,
    #[serde(default = "default_y_min")]
    pub y_min: f64,
    #[serde(default = "default_y_max")]
    pub y_max: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_y_min() -> f64 {
    1.0
}

fn default_y_max() -> f64 {
    5.0
}

impl GeneratorSpec {
    pub fn new(shape: Shape, noise_sd: f64, n: usize) -> Self {
        Self {
            shape,
            noise_sd,
            n,
            x_dist: XDist::default(),
            y_min: default_y_min(),
            y_max: default_y_max(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        ensure_finite("noise SD", self.noise_sd)?;
        if self.noise_sd < 0.0 {
            return Err(invalid("noise SD", format!("must be >= 0, got {}", self.noise_sd)));
        }
        if self.n < 4 {
            return Err(invalid("n", format!("must be >= 4, got {}", self.n)));
        }
        ensure_finite("y_min", self.y_min)?;
        ensure_finite("y_max", self.y_max)?;
        if self.y_min > self.y_max {
            return Err(invalid("outcome range", "y_min exceeds y_max"));
        }
        match self.x_dist {
            XDist::LogNormal { median, spread, x_max } => {
                if !(median > 0.0) || !(spread >= 0.0) || !(x_max > 0.0) || !x_max.is_finite() || !spread.is_finite() {
                    return Err(invalid(
                        "predictor distribution",
                        "need median > 0, spread >= 0 and finite x_max > 0",
                    ));
                }
                if spread == 0.0 && median > x_max {
                    return Err(invalid("predictor distribution", "median exceeds x_max"));
                }
            }
            XDist::Grid { min, max } => {
                ensure_finite("grid min", min)?;
                ensure_finite("grid max", max)?;
                if !(min < max) || min < 0.0 {
                    return Err(invalid("predictor grid", "need 0 <= min < max"));
                }
            }
        }
        Ok(())
    }

    fn clip(&self, y: f64) -> f64 {
        y.clamp(self.y_min, self.y_max)
    }
}

fn sample_x(spec: &GeneratorSpec, rng: &mut impl Rng) -> Vec<f64> {
    match spec.x_dist {
        XDist::Grid { min, max } => (0..spec.n)
            .map(|i| min + (max - min) * i as f64 / (spec.n - 1) as f64)
            .collect(),
        XDist::LogNormal { median, spread, x_max } => {
            let mu = median.ln();
            let z = Normal::new(0.0, 1.0).expect("unit normal");
            (0..spec.n)
                .map(|_| loop {
                    let x = (mu + spread * z.sample(rng)).exp();
                    if x <= x_max {
                        break x;
                    }
                })
                .collect()
        }
    }
}

/// Draws a cohort. Identical specs (including `seed`) give identical data.
pub fn generate(spec: &GeneratorSpec) -> Result<ScatterData> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let xs = sample_x(spec, &mut rng);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let points = xs
        .into_iter()
        .map(|x| {
            let e = if spec.noise_sd > 0.0 {
                spec.noise_sd * noise.sample(&mut rng)
            } else {
                0.0
            };
            (x, spec.clip(spec.shape.eval(x) + e))
        })
        .collect();
    ScatterData::new(points, XKind::Ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DichotomyExperiment {
    pub threshold_y: f64,
    pub n_flourishing: usize,
    pub n_nonflourishing: usize,
    /// Mean predictor value in the (flourishing, nonflourishing) groups.
    pub group_means: (f64, f64),
    pub pooled_sd: f64,
    pub t_stat: f64,
    pub df: f64,
    pub p_one_tailed: f64,
    pub p_two_tailed: f64,
}

/// Splits at `y >= threshold_y` and runs the pooled two-sample t-test on the
/// predictor values of the two groups.
pub fn dichotomize_and_test(data: &ScatterData, threshold_y: f64) -> Result<DichotomyExperiment> {
    ensure_finite("outcome threshold", threshold_y)?;
    let (hi, lo): (Vec<&(f64, f64)>, Vec<_>) = data.points.iter().partition(|p| p.1 >= threshold_y);
    let hi: Vec<f64> = hi.into_iter().map(|p| p.0).collect();
    let lo: Vec<f64> = lo.into_iter().map(|p| p.0).collect();
    if hi.len() < 2 || lo.len() < 2 {
        return Err(Error::DegenerateSplit(format!(
            "{} flourishing and {} nonflourishing points; each group needs at least 2",
            hi.len(),
            lo.len()
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let (m1, m2) = (mean(&hi), mean(&lo));
    let df = (hi.len() + lo.len() - 2) as f64;
    let pooled_sd = ((ss(&hi, m1) + ss(&lo, m2)) / df).sqrt();
    if !(pooled_sd > 0.0) {
        return Err(Error::DegenerateSplit("no predictor variation within groups".into()));
    }
    let stats = SummaryStats::new(hi.len() as u32, lo.len() as u32, m1, m2, 0.0)?;
    let t_stat = two_sample_t(&stats, pooled_sd)?;
    Ok(DichotomyExperiment {
        threshold_y,
        n_flourishing: hi.len(),
        n_nonflourishing: lo.len(),
        group_means: (m1, m2),
        pooled_sd,
        t_stat,
        df,
        p_one_tailed: student_t_sf(t_stat, df)?,
        p_two_tailed: student_t_two_tailed(t_stat, df)?,
    })
}

/// Population-level expectations of the dichotomized design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedSplit {
    /// Probability of landing in the flourishing group.
    pub flourishing_share: f64,
    pub mean_flourishing: f64,
    pub mean_nonflourishing: f64,
}

/// `P(y >= threshold | x)` under the spec's noise and clipping.
fn flourishing_prob(spec: &GeneratorSpec, x: f64, threshold_y: f64) -> f64 {
    if threshold_y <= spec.y_min {
        return 1.0;
    }
    if threshold_y > spec.y_max {
        return 0.0;
    }
    let f = spec.shape.eval(x);
    if spec.noise_sd == 0.0 {
        return if f >= threshold_y { 1.0 } else { 0.0 };
    }
    normal_cdf((f - threshold_y) / spec.noise_sd).unwrap_or(0.0)
}

/// Composite Simpson over `[a, b]`, split at interior `breaks`.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], panels: usize) -> f64 {
    let mut knots = vec![a];
    knots.extend(breaks.iter().copied().filter(|&c| c > a && c < b));
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    let per = (panels / (knots.len() - 1)).max(2) & !1;
    knots
        .windows(2)
        .map(|w| {
            let h = (w[1] - w[0]) / per as f64;
            let mut s = f(w[0]) + f(w[1]);
            for i in 1..per {
                let c = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += c * f(w[0] + i as f64 * h);
            }
            s * h / 3.0
        })
        .sum()
}

/// Expected group share and group means of the predictor, by quadrature
/// over the predictor distribution (grid designs are averaged exactly).
pub fn expected_split(spec: &GeneratorSpec, threshold_y: f64) -> Result<ExpectedSplit> {
    spec.validate()?;
    let (mass, first, total_first) = split_moments(spec, threshold_y)?;
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::DegenerateSplit(format!(
            "expected flourishing share {mass} leaves a group empty"
        )));
    }
    Ok(ExpectedSplit {
        flourishing_share: mass,
        mean_flourishing: first / mass,
        mean_nonflourishing: (total_first - first) / (1.0 - mass),
    })
}

/// `(E[w(x)], E[x w(x)], E[x])` where `w` is the flourishing probability.
fn split_moments(spec: &GeneratorSpec, threshold_y: f64) -> Result<(f64, f64, f64)> {
    Ok(match spec.x_dist {
        XDist::Grid { min, max } => {
            let xs: Vec<f64> = (0..spec.n)
                .map(|i| min + (max - min) * i as f64 / (spec.n - 1) as f64)
                .collect();
            let n = xs.len() as f64;
            let w: Vec<f64> = xs.iter().map(|&x| flourishing_prob(spec, x, threshold_y)).collect();
            (
                w.iter().sum::<f64>() / n,
                xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / n,
                xs.iter().sum::<f64>() / n,
            )
        }
        XDist::LogNormal { median, spread, x_max } => {
            let mu = median.ln();
            if spread == 0.0 {
                let w = flourishing_prob(spec, median, threshold_y);
                (w, w * median, median)
            } else {
                let hi_z = ((x_max.ln() - mu) / spread).min(12.0);
                let lo_z = -12.0;
                let norm = normal_cdf(hi_z)? - normal_cdf(lo_z)?;
                let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let breaks: Vec<f64> = spec
                    .shape
                    .breaks()
                    .into_iter()
                    .filter(|&b| b > 0.0)
                    .map(|b| (b.ln() - mu) / spread)
                    .collect();
                let x_of = |z: f64| (mu + spread * z).exp();
                let panels = 20_000;
                let mass = integrate(|z| phi(z) * flourishing_prob(spec, x_of(z), threshold_y), lo_z, hi_z, &breaks, panels) / norm;
                let first = integrate(
                    |z| phi(z) * x_of(z) * flourishing_prob(spec, x_of(z), threshold_y),
                    lo_z,
                    hi_z,
                    &breaks,
                    panels,
                ) / norm;
                let total = integrate(|z| phi(z) * x_of(z), lo_z, hi_z, &[], panels) / norm;
                (mass, first, total)
            }
        }
    })
}

fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    // f increasing, f(lo) < 0 < f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Linear intercept giving the requested flourishing share at a fixed slope.
fn intercept_for_share(base: &GeneratorSpec, slope: f64, share: f64, threshold_y: f64) -> Result<f64> {
    let share_at = |a: f64| -> Result<f64> {
        let spec = GeneratorSpec {
            shape: Shape::Linear { intercept: a, slope },
            ..*base
        };
        Ok(split_moments(&spec, threshold_y)?.0 - share)
    };
    let mut step = 1.0 + base.noise_sd;
    let (mut lo, mut hi) = (threshold_y - step, threshold_y + step);
    while share_at(lo)? > 0.0 {
        step *= 2.0;
        lo = threshold_y - step;
        if step > 1e9 {
            return Err(invalid("calibration", "cannot lower the flourishing share far enough"));
        }
    }
    step = 1.0 + base.noise_sd;
    while share_at(hi)? < 0.0 {
        step *= 2.0;
        hi = threshold_y + step;
        if step > 1e9 {
            return Err(invalid("calibration", "cannot raise the flourishing share far enough"));
        }
    }
    bisect(lo, hi, share_at)
}

/// A linear generator with the same noise, predictor distribution and
/// outcome range as `target` whose dichotomized design has the same
/// expected flourishing share and group means.
pub fn calibrate_linear(target: &GeneratorSpec, threshold_y: f64) -> Result<GeneratorSpec> {
    let goal = expected_split(target, threshold_y)?;
    let gap = goal.mean_flourishing - goal.mean_nonflourishing;
    if !(gap > 0.0) {
        return Err(invalid(
            "calibration",
            "target must place higher predictor values in the flourishing group",
        ));
    }
    let gap_at = |slope: f64| -> Result<f64> {
        let a = intercept_for_share(target, slope, goal.flourishing_share, threshold_y)?;
        let spec = GeneratorSpec {
            shape: Shape::Linear { intercept: a, slope },
            ..*target
        };
        let s = expected_split(&spec, threshold_y)?;
        Ok(s.mean_flourishing - s.mean_nonflourishing - gap)
    };
    let mut hi = 0.1;
    while gap_at(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(invalid("calibration", "no linear generator reaches the target group gap"));
        }
    }
    let slope = bisect(0.0, hi, gap_at)?;
    let intercept = intercept_for_share(target, slope, goal.flourishing_share, threshold_y)?;
    Ok(GeneratorSpec {
        shape: Shape::Linear { intercept, slope },
        ..*target
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerConfig {
    pub replications: usize,
    pub threshold_y: f64,
    pub alpha: f64,
    pub master_seed: u64,
    pub permutations: usize,
    /// Execution mode only; output is identical either way, so it is not
    /// serialized.
    #[serde(skip, default = "parallel_default")]
    pub parallel: bool,
}

fn parallel_default() -> bool {
    true
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            replications: 1000,
            threshold_y: 3.0,
            alpha: 0.05,
            master_seed: 20_140_328,
            permutations: 999,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub shape: String,
    pub spec: GeneratorSpec,
    pub replications: usize,
    /// Two-tailed dichotomized t-test rejection rate.
    pub dichotomized_t_rate: f64,
    pub dichotomized_t_one_tailed_rate: f64,
    /// Replications where a group had fewer than two members (counted as
    /// non-rejections).
    pub degenerate_splits: usize,
    pub quadratic_rate: f64,
    pub changepoint_rate: f64,
    /// Average group means over valid splits: (flourishing, nonflourishing).
    pub mean_group_means: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub config: PowerConfig,
    pub rows: Vec<PowerRow>,
    pub conventions: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default)]
struct RepOutcome {
    valid_split: bool,
    dich_two: bool,
    dich_one: bool,
    means: (f64, f64),
    quadratic: bool,
    changepoint: bool,
}

fn run_replication(spec: &GeneratorSpec, config: &PowerConfig, shape_idx: usize, rep: usize) -> Result<RepOutcome> {
    let mut rng = substream(config.master_seed, stream_id(shape_idx as u32, rep as u32));
    let data_seed = rng.next_u64();
    let scan_seed = rng.next_u64();
    let data = generate(&GeneratorSpec { seed: data_seed, ..*spec })?;

    let mut out = RepOutcome::default();
    match dichotomize_and_test(&data, config.threshold_y) {
        Ok(exp) => {
            out.valid_split = true;
            out.dich_two = exp.p_two_tailed < config.alpha;
            out.dich_one = exp.p_one_tailed < config.alpha;
            out.means = exp.group_means;
        }
        Err(Error::DegenerateSplit(_)) => {}
        Err(e) => return Err(e),
    }
    let claims_cfg = ClaimsConfig {
        alpha: config.alpha,
        ..Default::default()
    };
    out.quadratic = match test_nonlinearity(&data, &claims_cfg) {
        Ok(v) => v.decision == Decision::Supported,
        Err(Error::SingularFit(_)) => false,
        Err(e) => return Err(e),
    };
    let scan_cfg = ChangepointConfig {
        permutations: config.permutations,
        seed: scan_seed,
        parallel: false,
        ..Default::default()
    };
    out.changepoint = match scan_changepoint(&data, &scan_cfg) {
        Ok(scan) => scan.p_value < config.alpha,
        Err(Error::InsufficientData { .. }) => false,
        Err(e) => return Err(e),
    };
    Ok(out)
}

/// Rejection rates of the dichotomized t-test, the quadratic-term test and
/// the changepoint scan for each generator. Replication `r` of spec `i`
/// draws from its own stream of `master_seed`, so parallel and sequential
/// runs agree exactly.
pub fn power_comparison(specs: &[GeneratorSpec], config: &PowerConfig) -> Result<PowerTable> {
    if config.replications < 100 {
        return Err(invalid(
            "replications",
            format!("need at least 100, got {}", config.replications),
        ));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    for spec in specs {
        spec.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|i| (0..config.replications).map(move |r| (i, r)))
        .collect();
    let run = |&(i, r): &(usize, usize)| run_replication(&specs[i], config, i, r);
    let outcomes: Vec<RepOutcome> = if config.parallel {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };

    let reps = config.replications as f64;
    let rows = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let chunk = &outcomes[i * config.replications..(i + 1) * config.replications];
            let rate = |f: fn(&RepOutcome) -> bool| chunk.iter().filter(|o| f(o)).count() as f64 / reps;
            let valid: Vec<&RepOutcome> = chunk.iter().filter(|o| o.valid_split).collect();
            let nv = valid.len().max(1) as f64;
            PowerRow {
                shape: spec.shape.name().to_string(),
                spec: *spec,
                replications: config.replications,
                dichotomized_t_rate: rate(|o| o.dich_two),
                dichotomized_t_one_tailed_rate: rate(|o| o.dich_one),
                degenerate_splits: chunk.len() - valid.len(),
                quadratic_rate: rate(|o| o.quadratic),
                changepoint_rate: rate(|o| o.changepoint),
                mean_group_means: (
                    valid.iter().map(|o| o.means.0).sum::<f64>() / nv,
                    valid.iter().map(|o| o.means.1).sum::<f64>() / nv,
                ),
            }
        })
        .collect();
    let conventions = vec![
        "predictor distributions are declared conventions, not estimates of real positivity-ratio spread".into(),
        format!("groups split at outcome >= {}", config.threshold_y),
    ];
    Ok(PowerTable { config: *config, rows, conventions })
}

/// The four default shapes, scaled to a 1-5 outcome instrument.
pub fn default_specs() -> Vec<GeneratorSpec> {
    let noise = 0.5;
    let n = 100;
    vec![
        GeneratorSpec::new(Shape::Linear { intercept: 2.4, slope: 0.2 }, noise, n),
        GeneratorSpec::new(Shape::Step { location: 2.9013, low: 2.5, high: 3.5 }, noise, n),
        GeneratorSpec::new(Shape::Logistic { center: 2.9013, slope: 2.0, low: 2.5, high: 3.5 }, noise, n),
        GeneratorSpec::new(Shape::InvertedU { vertex: 4.0, peak: 3.6, curvature: 0.08 }, noise, n),
    ]
}
