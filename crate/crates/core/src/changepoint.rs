//! Single-breakpoint segmented regression scan with a residual-permutation
//! p-value.
//!
//! At each candidate breakpoint `c` the data are split into `x < c` and
//! `x >= c` and an independent line is fitted on each side. The improvement
//! over a single line is measured by
//! `F = ((RSS0 - RSS1) / 2) / (RSS1 / (n - 4))`, and calibrated by refitting
//! the scan on `fitted + permuted residuals` of the single-line model.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::regression::ScatterData;
use crate::rng::substream;

pub const MIN_POINTS: usize = 20;
pub const MIN_DISTINCT_X: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChangepointConfig {
    /// Fraction of the predictor distribution excluded from each end of the
    /// candidate grid.
    pub trim: f64,
    pub permutations: usize,
    pub seed: u64,
    /// Run permutations on the rayon pool. Results are identical either way,
    /// so it is not serialized.
    #[serde(skip)]
    pub parallel: bool,
}

impl Default for ChangepointConfig {
    fn default() -> Self {
        Self {
            trim: 0.1,
            permutations: 999,
            seed: 20_140_328,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub intercept: f64,
    pub slope: f64,
}

impl Line {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangepointScan {
    pub candidate_x: Vec<f64>,
    /// Breakpoint minimizing the two-segment RSS; the right segment starts
    /// at this value.
    pub best_x: f64,
    pub rss_single: f64,
    pub rss_segmented: f64,
    pub improvement_stat: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub left: Line,
    pub right: Line,
    /// `right(best_x) - left(best_x)`
    pub jump: f64,
}

/// Running sums over a sorted, centered sample for O(1) segment fits.
struct PrefixSums {
    n: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    xx: Vec<f64>,
    xy: Vec<f64>,
    yy: Vec<f64>,
}

impl PrefixSums {
    fn new(xs: &[f64]) -> Self {
        let mut n = Vec::with_capacity(xs.len() + 1);
        let mut x = Vec::with_capacity(xs.len() + 1);
        let mut xx = Vec::with_capacity(xs.len() + 1);
        n.push(0.0);
        x.push(0.0);
        xx.push(0.0);
        for (i, &v) in xs.iter().enumerate() {
            n.push((i + 1) as f64);
            x.push(x[i] + v);
            xx.push(xx[i] + v * v);
        }
        Self {
            n,
            x,
            y: vec![0.0; xs.len() + 1],
            xx,
            xy: vec![0.0; xs.len() + 1],
            yy: vec![0.0; xs.len() + 1],
        }
    }

    fn load_y(&mut self, xs: &[f64], ys: &[f64]) {
        for i in 0..ys.len() {
            let (x, y) = (xs[i], ys[i]);
            self.y[i + 1] = self.y[i] + y;
            self.xy[i + 1] = self.xy[i] + x * y;
            self.yy[i + 1] = self.yy[i] + y * y;
        }
    }

    /// Residual sum of squares of a line fitted to points `i..j`.
    fn segment_rss(&self, i: usize, j: usize) -> f64 {
        let m = self.n[j] - self.n[i];
        let sx = self.x[j] - self.x[i];
        let sy = self.y[j] - self.y[i];
        let vx = (self.xx[j] - self.xx[i]) - sx * sx / m;
        let vxy = (self.xy[j] - self.xy[i]) - sx * sy / m;
        let vy = (self.yy[j] - self.yy[i]) - sy * sy / m;
        (vy - vxy / vx * vxy).max(0.0)
    }
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Exact two-pass RSS of a least-squares line.
fn line_rss(xs: &[f64], ys: &[f64]) -> (f64, Line) {
    let m = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
    }
    let slope = sxy / sxx;
    let line = Line {
        intercept: ym - slope * xm,
        slope,
    };
    let rss = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - line.at(x)).powi(2))
        .sum();
    (rss, line)
}

struct Prepared {
    xs: Vec<f64>,
    ys: Vec<f64>,
    x_center: f64,
    y_center: f64,
    /// (candidate value, index of the first point in the right segment)
    candidates: Vec<(f64, usize)>,
}

fn prepare(data: &ScatterData, trim: f64) -> Result<Prepared> {
    data.validate()?;
    if data.len() < MIN_POINTS {
        return Err(Error::InsufficientData {
            what: "changepoint scan (points)",
            needed: MIN_POINTS,
            got: data.len(),
        });
    }
    let distinct = data.distinct_x();
    if distinct < MIN_DISTINCT_X {
        return Err(Error::InsufficientData {
            what: "changepoint scan (distinct predictor values)",
            needed: MIN_DISTINCT_X,
            got: distinct,
        });
    }
    if !(0.0..0.5).contains(&trim) {
        return Err(invalid("trim", format!("must lie in [0, 0.5), got {trim}")));
    }
    let mut pts = data.points.clone();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs_raw: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let lo = quantile_sorted(&xs_raw, trim);
    let hi = quantile_sorted(&xs_raw, 1.0 - trim);

    // Start index of each distinct value.
    let mut starts = vec![0usize];
    for i in 1..xs_raw.len() {
        if xs_raw[i] != xs_raw[i - 1] {
            starts.push(i);
        }
    }
    // Each side needs two distinct predictor values for its line.
    let candidates: Vec<(f64, usize)> = starts
        .iter()
        .enumerate()
        .filter(|&(d, _)| d >= 2 && d + 2 <= starts.len())
        .map(|(_, &i)| (xs_raw[i], i))
        .filter(|&(c, _)| c >= lo && c <= hi)
        .collect();
    if candidates.is_empty() {
        return Err(Error::InsufficientData {
            what: "changepoint scan (interior candidates)",
            needed: 1,
            got: 0,
        });
    }

    let n = pts.len() as f64;
    let x_center = xs_raw.iter().sum::<f64>() / n;
    let y_center = pts.iter().map(|p| p.1).sum::<f64>() / n;
    Ok(Prepared {
        xs: xs_raw.iter().map(|x| x - x_center).collect(),
        ys: pts.iter().map(|p| p.1 - y_center).collect(),
        x_center,
        y_center,
        candidates,
    })
}

/// Best split by prefix sums: (F, candidate position, rss0, rss1).
fn best_split(sums: &PrefixSums, candidates: &[(f64, usize)], n: usize) -> (usize, f64, f64) {
    let rss0 = sums.segment_rss(0, n);
    let mut best = (0, f64::INFINITY);
    for (pos, &(_, k)) in candidates.iter().enumerate() {
        let rss = sums.segment_rss(0, k) + sums.segment_rss(k, n);
        if rss < best.1 {
            best = (pos, rss);
        }
    }
    (best.0, rss0, best.1)
}

fn f_stat(rss0: f64, rss1: f64, n: usize, floor: f64) -> f64 {
    let rss1 = rss1.max(floor);
    (((rss0 - rss1) / 2.0) / (rss1 / (n as f64 - 4.0))).max(0.0)
}

/// Grid search for a single breakpoint with a permutation p-value.
pub fn scan_changepoint(data: &ScatterData, config: &ChangepointConfig) -> Result<ChangepointScan> {
    let prep = prepare(data, config.trim)?;
    let n = prep.xs.len();
    let mut sums = PrefixSums::new(&prep.xs);
    sums.load_y(&prep.xs, &prep.ys);
    let (pos, _, _) = best_split(&sums, &prep.candidates, n);
    let (best_x, k) = prep.candidates[pos];

    // Recompute the observed fit exactly rather than from running sums.
    let (rss0, single) = line_rss(&prep.xs, &prep.ys);
    let (rss_left, left) = line_rss(&prep.xs[..k], &prep.ys[..k]);
    let (rss_right, right) = line_rss(&prep.xs[k..], &prep.ys[k..]);
    let rss1 = rss_left + rss_right;
    let tss: f64 = prep.ys.iter().map(|y| y * y).sum();
    let floor = 1e-12 * tss;

    let uncenter = |l: Line| Line {
        intercept: l.intercept + prep.y_center - l.slope * prep.x_center,
        slope: l.slope,
    };
    let left = uncenter(left);
    let right = uncenter(right);
    let candidate_x: Vec<f64> = prep.candidates.iter().map(|c| c.0).collect();
    let jump = right.at(best_x) - left.at(best_x);

    // A single line that already explains the data leaves nothing to test.
    if rss0 <= 1e-10 * tss || tss == 0.0 {
        return Ok(ChangepointScan {
            candidate_x,
            best_x,
            rss_single: rss0,
            rss_segmented: rss1,
            improvement_stat: 0.0,
            p_value: 1.0,
            permutations: config.permutations,
            left,
            right,
            jump,
        });
    }

    let observed = f_stat(rss0, rss1, n, floor);
    let fitted: Vec<f64> = prep.xs.iter().map(|&x| single.at(x)).collect();
    let resid: Vec<f64> = prep.ys.iter().zip(&fitted).map(|(y, f)| y - f).collect();

    let exceeds = |b: usize| -> bool {
        let mut rng = substream(config.seed, b as u64);
        let mut shuffled = resid.clone();
        shuffled.shuffle(&mut rng);
        let ys: Vec<f64> = fitted.iter().zip(&shuffled).map(|(f, e)| f + e).collect();
        let mut local = PrefixSums::new(&prep.xs);
        local.load_y(&prep.xs, &ys);
        let (_, r0, r1) = best_split(&local, &prep.candidates, n);
        f_stat(r0, r1, n, floor) >= observed
    };
    let hits = if config.parallel {
        (0..config.permutations)
            .into_par_iter()
            .filter(|&b| exceeds(b))
            .count()
    } else {
        (0..config.permutations).filter(|&b| exceeds(b)).count()
    };

    Ok(ChangepointScan {
        candidate_x,
        best_x,
        rss_single: rss0,
        rss_segmented: rss1,
        improvement_stat: observed,
        p_value: (1 + hits) as f64 / (config.permutations + 1) as f64,
        permutations: config.permutations,
        left,
        right,
        jump,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::XKind;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn data(xs: &[f64], f: impl Fn(f64) -> f64) -> ScatterData {
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        ScatterData::from_xy(xs, &ys, XKind::Ratio).unwrap()
    }

    /// Brute-force oracle: fit both lines with the two-pass formula at
    /// every admissible split and keep the smallest RSS.
    fn brute_force_best(xs: &[f64], ys: &[f64], candidates: &[f64]) -> (f64, f64) {
        let mut best = (f64::NAN, f64::INFINITY);
        for &c in candidates {
            let (lx, ly): (Vec<f64>, Vec<f64>) =
                xs.iter().zip(ys).filter(|(x, _)| **x < c).map(|(x, y)| (*x, *y)).unzip();
            let (rx, ry): (Vec<f64>, Vec<f64>) =
                xs.iter().zip(ys).filter(|(x, _)| **x >= c).map(|(x, y)| (*x, *y)).unzip();
            let rss = line_rss(&lx, &ly).0 + line_rss(&rx, &ry).0;
            if rss < best.1 {
                best = (c, rss);
            }
        }
        best
    }

    #[test]
    fn noiseless_step_is_located() {
        let xs = grid(0.5, 6.0, 60);
        let d = data(&xs, |x| if x < 3.0 { 0.0 } else { 1.0 });
        let scan = scan_changepoint(&d, &ChangepointConfig::default()).unwrap();
        let (oracle_x, oracle_rss) = brute_force_best(&xs, &d.ys(), &scan.candidate_x);
        assert_eq!(scan.best_x, oracle_x);
        assert!(oracle_rss < 1e-20);
        assert!((scan.best_x - 3.0).abs() < 0.1);
        assert!(scan.p_value < 0.01);
        assert!((scan.jump - 1.0).abs() < 1e-9);
    }

    #[test]
    fn best_split_matches_brute_force_on_noisy_data() {
        let xs = grid(0.0, 10.0, 41);
        let d = data(&xs, |x| (x * 0.9).sin() + 0.1 * x);
        let scan = scan_changepoint(&d, &ChangepointConfig { permutations: 19, ..Default::default() }).unwrap();
        let (oracle_x, oracle_rss) = brute_force_best(&xs, &d.ys(), &scan.candidate_x);
        assert_eq!(scan.best_x, oracle_x);
        assert!((scan.rss_segmented - oracle_rss).abs() < 1e-9);
    }

    #[test]
    fn exact_line_shows_no_improvement() {
        let xs = grid(1.0, 5.0, 30);
        let scan = scan_changepoint(&data(&xs, |x| 0.5 * x + 2.0), &ChangepointConfig::default()).unwrap();
        assert!(scan.improvement_stat.abs() < 1e-9);
        assert_eq!(scan.p_value, 1.0);
    }

    #[test]
    fn candidates_stay_inside_trimmed_band() {
        let xs = grid(0.0, 10.0, 50);
        let scan = scan_changepoint(&data(&xs, |x| x * x), &ChangepointConfig { permutations: 9, ..Default::default() }).unwrap();
        for &c in &scan.candidate_x {
            assert!((1.0..=9.0).contains(&c), "{c}");
        }
        assert!(scan.best_x > 0.0 && scan.best_x < 10.0);
        assert!(scan.improvement_stat >= 0.0);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let xs = grid(0.0, 10.0, 40);
        let d = data(&xs, |x| (x * 1.3).cos() + 0.05 * x * x);
        let seq = scan_changepoint(&d, &ChangepointConfig { permutations: 199, ..Default::default() }).unwrap();
        let par = scan_changepoint(
            &d,
            &ChangepointConfig { permutations: 199, parallel: true, ..Default::default() },
        )
        .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn insufficient_data_is_rejected() {
        let few = data(&grid(0.0, 1.0, 12), |x| x);
        assert!(matches!(
            scan_changepoint(&few, &ChangepointConfig::default()),
            Err(Error::InsufficientData { .. })
        ));
        let xs: Vec<f64> = (0..30).map(|i| (i % 5) as f64).collect();
        assert!(matches!(
            scan_changepoint(&data(&xs, |x| x), &ChangepointConfig::default()),
            Err(Error::InsufficientData { .. })
        ));
    }
}
