//! Shared statistical utilities: empirical distributions, two-sample tests,
//! binomial intervals, least squares, and a small quadrature routine.

use serde::{Deserialize, Serialize};

/// Empirical distribution function over a sample, stored sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    xs: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn from_samples(mut xs: Vec<f64>) -> Self {
        assert!(!xs.is_empty(), "empty sample");
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        EmpiricalCdf { xs }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.xs
    }

    /// Fraction of the sample at or below x.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.xs.partition_point(|v| *v <= x);
        k as f64 / self.xs.len() as f64
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.xs.len();
        let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.xs[idx]
    }

    pub fn median(&self) -> f64 {
        let n = self.xs.len();
        if n % 2 == 1 {
            self.xs[n / 2]
        } else {
            0.5 * (self.xs[n / 2 - 1] + self.xs[n / 2])
        }
    }
}

/// Median of an unsorted slice (by copy).
pub fn median(xs: &[f64]) -> f64 {
    EmpiricalCdf::from_samples(xs.to_vec()).median()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ks_statistic_sorted(&xs, &ys)
}

/// Same, expecting both inputs sorted ascending.
pub fn ks_statistic_sorted(xs: &[f64], ys: &[f64]) -> f64 {
    let (n, m) = (xs.len(), ys.len());
    assert!(n > 0 && m > 0, "empty sample");
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Asymptotic two-sample KS p-value with the Stephens small-sample
/// correction. Adequate for the sample sizes used here (hundreds up).
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    kolmogorov_q(lambda)
}

/// Q(lambda) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lambda^2).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let t = 2.0 * (j as f64) * (j as f64) * lambda * lambda;
        let term = sign * (-t).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Wilson score interval for a binomial proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilsonInterval {
    pub lo: f64,
    pub hi: f64,
}

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> WilsonInterval {
    assert!(trials > 0, "no trials");
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    WilsonInterval { lo: (center - half).max(0.0), hi: (center + half).min(1.0) }
}

/// Ordinary least squares fit y = intercept + slope x.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

impl OlsFit {
    /// Two-sided confidence interval for the slope at the given t multiple.
    pub fn slope_ci(&self, t: f64) -> (f64, f64) {
        (self.slope - t * self.slope_se, self.slope + t * self.slope_se)
    }
}

pub fn ols_fit(xs: &[f64], ys: &[f64]) -> OlsFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    assert!(xs.len() >= 3, "need at least 3 points for a slope with error");
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let sigma2 = ss_res / (n - 2.0);
    OlsFit { slope, intercept, slope_se: (sigma2 / sxx).sqrt() }
}

/// Two-sided Student t critical value for 95% confidence.
pub fn t_crit_95(df: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let t = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    t.inverse_cdf(0.975)
}

/// Calibrated on surely-flat (Gaussian) and surely-growing (deep heavy
/// tail) anchors; log-units per depth.
pub const FLAT_SLOPE: f64 = 0.02;
pub const GROW_SLOPE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Flat,
    Growing,
    Ambiguous,
}

/// Slope of log median-max per depth over the last half of depths, with a
/// 95% confidence interval and the thresholded verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthVerdict {
    pub slope: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub verdict: Trend,
    pub points_used: usize,
}

/// Classifies a log-trajectory: Flat when the whole CI sits below
/// flat_threshold, Growing when it sits above grow_threshold, else
/// Ambiguous. The fit window is depth >= max_depth / 2.
pub fn classify_growth(
    depths: &[f64],
    ln_values: &[f64],
    flat_threshold: f64,
    grow_threshold: f64,
) -> GrowthVerdict {
    assert_eq!(depths.len(), ln_values.len());
    let d_max = depths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cut = d_max / 2.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = depths
        .iter()
        .zip(ln_values)
        .filter(|(d, v)| **d >= cut && v.is_finite())
        .map(|(d, v)| (*d, *v))
        .unzip();
    if xs.len() < 3 {
        return GrowthVerdict {
            slope: f64::NAN,
            ci_lo: f64::NEG_INFINITY,
            ci_hi: f64::INFINITY,
            verdict: Trend::Ambiguous,
            points_used: xs.len(),
        };
    }
    let fit = ols_fit(&xs, &ys);
    let (ci_lo, ci_hi) = fit.slope_ci(t_crit_95(xs.len() - 2));
    let verdict = if ci_hi < flat_threshold {
        Trend::Flat
    } else if ci_lo > grow_threshold {
        Trend::Growing
    } else {
        Trend::Ambiguous
    };
    GrowthVerdict { slope: fit.slope, ci_lo, ci_hi, verdict, points_used: xs.len() }
}

/// Chi-square independence statistic between two u64 streams, bucketed by
/// their top bits into `bins` x `bins` cells. Returns (statistic, df).
pub fn chi_square_independence(xs: &[u64], ys: &[u64], bins: usize) -> (f64, usize) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let shift = 64 - bins.trailing_zeros(); // bins must be a power of two
    let mut counts = vec![0u64; bins * bins];
    let mut row = vec![0u64; bins];
    let mut col = vec![0u64; bins];
    for (x, y) in xs.iter().zip(ys) {
        let i = (x >> shift) as usize;
        let j = (y >> shift) as usize;
        counts[i * bins + j] += 1;
        row[i] += 1;
        col[j] += 1;
    }
    let mut stat = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let expect = row[i] as f64 * col[j] as f64 / n as f64;
            if expect > 0.0 {
                let diff = counts[i * bins + j] as f64 - expect;
                stat += diff * diff / expect;
            }
        }
    }
    (stat, (bins - 1) * (bins - 1))
}

/// Upper chi-square quantile by the Wilson-Hilferty cube approximation;
/// `z` is the standard normal quantile of the target confidence.
pub fn chi_square_critical(df: usize, z: f64) -> f64 {
    let k = df as f64;
    let t = 1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt();
    k * t * t * t
}

/// Recursive adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol * (1.0 + (left + right).abs()) {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, c, fa, fc, fd, left, tol / 2.0, depth - 1)
            + simpson_step(f, c, b, fc, fb, fe, right, tol / 2.0, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::KeyedStream;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_eval_and_median() {
        let cdf = EmpiricalCdf::from_samples(vec![3.0, 1.0, 2.0, 4.0]);
        assert_eq!(cdf.eval(0.5), 0.0);
        assert_eq!(cdf.eval(1.0), 0.25);
        assert_eq!(cdf.eval(2.5), 0.5);
        assert_eq!(cdf.eval(10.0), 1.0);
        assert_eq!(cdf.median(), 2.5);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
    }

    #[test]
    fn ks_identical_samples_is_zero() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
    }

    #[test]
    fn ks_disjoint_samples_is_one() {
        let a = vec![1.0, 2.0];
        let b = vec![10.0, 20.0];
        assert_eq!(ks_statistic(&a, &b), 1.0);
    }

    #[test]
    fn ks_hand_example() {
        // F_a jumps at 1,2,3; F_b jumps at 2,3,4; max gap is 1/3
        let a = vec![1.0, 2.0, 3.0];
        let b = vec![2.0, 3.0, 4.0];
        assert_relative_eq!(ks_statistic(&a, &b), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn ks_null_p_values_are_large() {
        let mut s = KeyedStream::from_label(3, "ksnull", 0);
        let a: Vec<f64> = (0..4000).map(|_| s.next_f64()).collect();
        let b: Vec<f64> = (0..4000).map(|_| s.next_f64()).collect();
        let d = ks_statistic(&a, &b);
        assert!(ks_p_value(d, 4000, 4000) > 0.01);
        // and a shifted alternative is detected
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        let d2 = ks_statistic(&a, &c);
        assert!(ks_p_value(d2, 4000, 4000) < 1e-6);
    }

    #[test]
    fn kolmogorov_q_endpoints() {
        assert_eq!(kolmogorov_q(0.0), 1.0);
        assert!(kolmogorov_q(0.3) > 0.999);
        assert!(kolmogorov_q(2.0) < 0.001);
        // classical reference value Q(1) ~ 0.26999
        assert_relative_eq!(kolmogorov_q(1.0), 0.26999967, epsilon = 1e-6);
    }

    #[test]
    fn wilson_interval_basics() {
        let w = wilson_interval(0, 10_000, 1.96);
        assert_eq!(w.lo, 0.0);
        // zero successes: upper limit is z^2/(n + z^2)
        assert_relative_eq!(w.hi, 1.96 * 1.96 / (10_000.0 + 1.96 * 1.96), epsilon = 1e-12);
        let w2 = wilson_interval(5000, 10_000, 1.96);
        assert!(w2.lo < 0.5 && 0.5 < w2.hi);
        assert!(w2.hi - w2.lo < 0.03);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let fit = ols_fit(&xs, &ys);
        assert_relative_eq!(fit.slope, 2.5, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, -1.0, epsilon = 1e-10);
        assert!(fit.slope_se < 1e-12);
    }

    #[test]
    fn ols_standard_error_is_calibrated() {
        // across replications, the slope estimate should fall within
        // 2 se of the truth about 95% of the time
        let mut hits = 0;
        let reps = 400;
        for r in 0..reps {
            let mut s = KeyedStream::from_label(10 + r, "ols", 0);
            let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| 0.7 * x + s.next_normal()).collect();
            let fit = ols_fit(&xs, &ys);
            if (fit.slope - 0.7).abs() <= 2.0 * fit.slope_se {
                hits += 1;
            }
        }
        let rate = hits as f64 / reps as f64;
        assert!(rate > 0.90, "coverage {rate}");
    }

    #[test]
    fn chi_square_critical_sane() {
        // df=225, alpha=0.001: reference value ~ 298.0
        let c = chi_square_critical(225, 3.0902);
        assert!((c - 298.0).abs() < 3.0, "critical {c}");
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let f = |x: f64| (-x).exp();
        let got = adaptive_simpson(&f, 0.0, 30.0, 1e-12, 40);
        assert_relative_eq!(got, 1.0, epsilon = 1e-9);
        let g = |x: f64| x * x;
        assert_relative_eq!(adaptive_simpson(&g, 0.0, 3.0, 1e-12, 40), 9.0, epsilon = 1e-10);
    }

    #[test]
    fn t_crit_reference_values() {
        assert_relative_eq!(t_crit_95(11), 2.201, epsilon = 2e-3);
        assert!((t_crit_95(1000) - 1.962).abs() < 2e-3);
    }
}
