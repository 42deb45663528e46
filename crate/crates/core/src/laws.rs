//! Increment and offspring law catalogs.
//!
//! Increment laws expose exact upper tails P(|Y| > x) and samplers driven by
//! keyed streams; the two must agree, and tests hold them to within Monte
//! Carlo error. Offspring laws expose the mean, the probability generating
//! function, and a sampler. Supercriticality (mean > 1) is a construction
//! requirement, not a runtime check.

use crate::rng::KeyedStream;
use crate::stats;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("invalid law parameter: {0}")]
    InvalidParameter(String),
}

/// Absolute-moment query result for E[|Y|^(1/H)].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn is_finite(&self) -> bool {
        matches!(self, Moment::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(*v),
            Moment::Infinite => None,
        }
    }
}

fn default_pareto_xmin() -> f64 {
    1.0
}

fn default_log_pareto_xmin() -> f64 {
    std::f64::consts::E * std::f64::consts::E
}

/// Increment law for the per-vertex displacements.
///
/// Tail conventions: `tail(x)` is P(|Y| > x) for x >= 0, exact per variant.
/// Pareto variants have tail ((x/xmin))^(-1/theta) beyond xmin; the
/// log-perturbed variant multiplies that by (log x / log xmin)^(-beta) and
/// requires xmin > e plus a parameter combination that keeps the tail
/// monotone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IncrementLaw {
    Constant { a: f64 },
    Uniform { lo: f64, hi: f64 },
    Gaussian { sigma: f64 },
    ParetoPositive {
        theta: f64,
        #[serde(default = "default_pareto_xmin")]
        xmin: f64,
    },
    SymPareto {
        theta: f64,
        #[serde(default = "default_pareto_xmin")]
        xmin: f64,
    },
    LogPareto {
        h0: f64,
        beta: f64,
        #[serde(default = "default_log_pareto_xmin")]
        xmin: f64,
    },
    TwoPoint { a: f64 },
}

impl IncrementLaw {
    pub fn constant(a: f64) -> Result<Self, LawError> {
        let law = IncrementLaw::Constant { a };
        law.validate()?;
        Ok(law)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, LawError> {
        let law = IncrementLaw::Uniform { lo, hi };
        law.validate()?;
        Ok(law)
    }

    pub fn gaussian(sigma: f64) -> Result<Self, LawError> {
        let law = IncrementLaw::Gaussian { sigma };
        law.validate()?;
        Ok(law)
    }

    pub fn pareto_positive(theta: f64, xmin: f64) -> Result<Self, LawError> {
        let law = IncrementLaw::ParetoPositive { theta, xmin };
        law.validate()?;
        Ok(law)
    }

    pub fn sym_pareto(theta: f64, xmin: f64) -> Result<Self, LawError> {
        let law = IncrementLaw::SymPareto { theta, xmin };
        law.validate()?;
        Ok(law)
    }

    pub fn log_pareto(h0: f64, beta: f64, xmin: f64) -> Result<Self, LawError> {
        let law = IncrementLaw::LogPareto { h0, beta, xmin };
        law.validate()?;
        Ok(law)
    }

    pub fn two_point(a: f64) -> Result<Self, LawError> {
        let law = IncrementLaw::TwoPoint { a };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<(), LawError> {
        let bad = |m: String| Err(LawError::InvalidParameter(m));
        match *self {
            IncrementLaw::Constant { a } => {
                if !a.is_finite() {
                    return bad(format!("constant a must be finite, got {a}"));
                }
            }
            IncrementLaw::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad(format!("uniform needs lo < hi, got [{lo}, {hi}]"));
                }
            }
            IncrementLaw::Gaussian { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return bad(format!("gaussian sigma must be > 0, got {sigma}"));
                }
            }
            IncrementLaw::ParetoPositive { theta, xmin }
            | IncrementLaw::SymPareto { theta, xmin } => {
                if !(theta.is_finite() && theta > 0.0) {
                    return bad(format!("pareto theta must be > 0, got {theta}"));
                }
                if !(xmin.is_finite() && xmin > 0.0) {
                    return bad(format!("pareto xmin must be > 0, got {xmin}"));
                }
            }
            IncrementLaw::LogPareto { h0, beta, xmin } => {
                if !(h0.is_finite() && h0 > 0.0) {
                    return bad(format!("log_pareto h0 must be > 0, got {h0}"));
                }
                if !beta.is_finite() {
                    return bad(format!("log_pareto beta must be finite, got {beta}"));
                }
                if !(xmin.is_finite() && xmin > std::f64::consts::E) {
                    return bad(format!("log_pareto xmin must exceed e, got {xmin}"));
                }
                // tail monotone iff 1/h0 + beta/log(x) >= 0 for all x >= xmin
                if beta < 0.0 && xmin.ln() <= -beta * h0 {
                    return bad(format!(
                        "log_pareto tail not monotone: need ln(xmin) > -beta*h0, got ln({xmin}) = {} vs {}",
                        xmin.ln(),
                        -beta * h0
                    ));
                }
            }
            IncrementLaw::TwoPoint { a } => {
                if !(a.is_finite() && a > 0.0) {
                    return bad(format!("two_point a must be > 0, got {a}"));
                }
            }
        }
        Ok(())
    }

    /// Exact upper tail P(|Y| > x) for x >= 0.
    pub fn tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match *self {
            IncrementLaw::Constant { a } => {
                if x < a.abs() {
                    1.0
                } else {
                    0.0
                }
            }
            IncrementLaw::Uniform { lo, hi } => {
                let inter = (hi.min(x) - lo.max(-x)).max(0.0);
                1.0 - inter / (hi - lo)
            }
            IncrementLaw::Gaussian { sigma } => {
                statrs::function::erf::erfc(x / (sigma * std::f64::consts::SQRT_2))
            }
            IncrementLaw::ParetoPositive { theta, xmin }
            | IncrementLaw::SymPareto { theta, xmin } => {
                if x < xmin {
                    1.0
                } else {
                    (x / xmin).powf(-1.0 / theta)
                }
            }
            IncrementLaw::LogPareto { h0, beta, xmin } => {
                if x < xmin {
                    1.0
                } else {
                    (x / xmin).powf(-1.0 / h0) * (x.ln() / xmin.ln()).powf(-beta)
                }
            }
            IncrementLaw::TwoPoint { a } => {
                if x < a {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Draws one increment. Draw counts per call are fixed per variant
    /// (couplings in the tests rely on this): constant 0, uniform 1,
    /// gaussian 2, pareto 1, symmetric pareto 2, log-pareto 1, two-point 1.
    #[inline]
    pub fn sample(&self, s: &mut KeyedStream) -> f64 {
        match *self {
            IncrementLaw::Constant { a } => a,
            IncrementLaw::Uniform { lo, hi } => lo + (hi - lo) * s.next_f64(),
            IncrementLaw::Gaussian { sigma } => sigma * s.next_normal(),
            IncrementLaw::ParetoPositive { theta, xmin } => pareto_sample(theta, xmin, s.next_f64()),
            IncrementLaw::SymPareto { theta, xmin } => {
                let mag = pareto_sample(theta, xmin, s.next_f64());
                if s.next_bool() {
                    mag
                } else {
                    -mag
                }
            }
            IncrementLaw::LogPareto { h0, beta, xmin } => {
                log_pareto_quantile(h0, beta, xmin, s.next_f64())
            }
            IncrementLaw::TwoPoint { a } => {
                if s.next_bool() {
                    a
                } else {
                    -a
                }
            }
        }
    }

    /// Raw draws consumed by one sample() call; fixed per variant.
    pub fn draw_count(&self) -> u64 {
        match *self {
            IncrementLaw::Constant { .. } => 0,
            IncrementLaw::Uniform { .. } => 1,
            IncrementLaw::Gaussian { .. } => 2,
            IncrementLaw::ParetoPositive { .. } => 1,
            IncrementLaw::SymPareto { .. } => 2,
            IncrementLaw::LogPareto { .. } => 1,
            IncrementLaw::TwoPoint { .. } => 1,
        }
    }

    /// E[|Y|^(1/h)] with the exact finite/infinite trichotomy.
    ///
    /// Closed forms where they exist; otherwise numeric quadrature of
    /// integral_0^inf p x^(p-1) P(|Y| > x) dx in log space, relative
    /// tolerance 1e-10.
    pub fn moment_1over_h(&self, h: f64) -> Moment {
        assert!(h > 0.0, "H must be positive");
        let p = 1.0 / h;
        match *self {
            IncrementLaw::Constant { a } => Moment::Finite(a.abs().powf(p)),
            IncrementLaw::TwoPoint { a } => Moment::Finite(a.powf(p)),
            IncrementLaw::Uniform { lo, hi } => {
                // antiderivative of |u|^p is sign(u) |u|^(p+1) / (p+1)
                let anti = |u: f64| u.signum() * u.abs().powf(p + 1.0) / (p + 1.0);
                Moment::Finite((anti(hi) - anti(lo)) / (hi - lo))
            }
            IncrementLaw::Gaussian { sigma } => {
                let g = statrs::function::gamma::gamma((p + 1.0) / 2.0);
                Moment::Finite(
                    sigma.powf(p) * 2.0f64.powf(p / 2.0) * g / std::f64::consts::PI.sqrt(),
                )
            }
            IncrementLaw::ParetoPositive { theta, xmin }
            | IncrementLaw::SymPareto { theta, xmin } => {
                let a = 1.0 / theta;
                if p < a * (1.0 - 1e-14) {
                    Moment::Finite(xmin.powf(p) * a / (a - p))
                } else {
                    Moment::Infinite
                }
            }
            IncrementLaw::LogPareto { h0, beta, xmin } => {
                let a = 1.0 / h0;
                if (p - a).abs() <= 1e-14 * a {
                    // critical index: converges only through the log factor
                    if beta > 1.0 {
                        Moment::Finite(xmin.powf(p) * (1.0 + p * xmin.ln() / (beta - 1.0)))
                    } else {
                        Moment::Infinite
                    }
                } else if p < a {
                    Moment::Finite(log_pareto_moment(h0, beta, xmin, p))
                } else {
                    Moment::Infinite
                }
            }
        }
    }

    /// ln P(|Y| > e^ln_x), finite even where e^ln_x overflows an f64.
    /// Returns NEG_INFINITY where the tail is exactly zero. Series code
    /// sums terms of the form m^k * tail(m^(kH)) in log space through this.
    pub fn ln_tail_exp(&self, ln_x: f64) -> f64 {
        match *self {
            IncrementLaw::Constant { a } => {
                if ln_x < a.abs().ln() {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            IncrementLaw::TwoPoint { a } => {
                if ln_x < a.ln() {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            IncrementLaw::Uniform { lo, hi } => {
                let bound = lo.abs().max(hi.abs());
                if ln_x >= bound.ln() {
                    f64::NEG_INFINITY
                } else {
                    self.tail(ln_x.exp()).ln()
                }
            }
            IncrementLaw::Gaussian { sigma } => {
                if ln_x > 700.0 {
                    return f64::NEG_INFINITY;
                }
                let t = ln_x.exp() / (sigma * std::f64::consts::SQRT_2);
                let direct = statrs::function::erf::erfc(t);
                if direct > 1e-300 {
                    direct.ln()
                } else {
                    // asymptotic erfc(t) ~ exp(-t^2)/(t sqrt(pi))
                    -t * t - (t * std::f64::consts::PI.sqrt()).ln()
                }
            }
            IncrementLaw::ParetoPositive { theta, xmin }
            | IncrementLaw::SymPareto { theta, xmin } => {
                let lx = xmin.ln();
                if ln_x < lx {
                    0.0
                } else {
                    -(ln_x - lx) / theta
                }
            }
            IncrementLaw::LogPareto { h0, beta, xmin } => {
                let lx = xmin.ln();
                if ln_x < lx {
                    0.0
                } else {
                    -(ln_x - lx) / h0 - beta * (ln_x / lx).ln()
                }
            }
        }
    }

    /// True when |Y| has bounded support (then every absolute moment is finite).
    pub fn bounded_support(&self) -> bool {
        matches!(
            self,
            IncrementLaw::Constant { .. } | IncrementLaw::Uniform { .. } | IncrementLaw::TwoPoint { .. }
        )
    }

    pub fn is_symmetric(&self) -> bool {
        match *self {
            IncrementLaw::Constant { a } => a == 0.0,
            IncrementLaw::Uniform { lo, hi } => lo == -hi,
            IncrementLaw::Gaussian { .. } => true,
            IncrementLaw::ParetoPositive { .. } => false,
            IncrementLaw::SymPareto { .. } => true,
            IncrementLaw::LogPareto { .. } => false,
            IncrementLaw::TwoPoint { .. } => true,
        }
    }

    /// True when Y >= 0 almost surely.
    pub fn is_nonnegative(&self) -> bool {
        match *self {
            IncrementLaw::Constant { a } => a >= 0.0,
            IncrementLaw::Uniform { lo, .. } => lo >= 0.0,
            IncrementLaw::ParetoPositive { .. } => true,
            IncrementLaw::LogPareto { .. } => true,
            _ => false,
        }
    }

    /// Typical magnitude of one increment, used for underflow guards.
    pub fn scale_hint(&self) -> f64 {
        match *self {
            IncrementLaw::Constant { a } => a.abs().max(1e-12),
            IncrementLaw::Uniform { lo, hi } => lo.abs().max(hi.abs()),
            IncrementLaw::Gaussian { sigma } => sigma,
            IncrementLaw::ParetoPositive { xmin, .. } | IncrementLaw::SymPareto { xmin, .. } => xmin,
            IncrementLaw::LogPareto { xmin, .. } => xmin,
            IncrementLaw::TwoPoint { a } => a,
        }
    }
}

#[inline(always)]
fn pareto_sample(theta: f64, xmin: f64, u: f64) -> f64 {
    // inverse transform of tail (x/xmin)^(-1/theta); u in (0,1]
    if theta == 1.0 {
        xmin / u
    } else {
        xmin * u.powf(-theta)
    }
}

/// Quantile of the log-perturbed Pareto law at tail probability u: solves
/// tail(x) = u via Newton in w = ln(x)/ln(xmin) >= 1, where
/// g(w) = (ln(xmin)/h0) (w - 1) + beta ln(w) = -ln(u).
fn log_pareto_quantile(h0: f64, beta: f64, xmin: f64, u: f64) -> f64 {
    let e = -u.ln();
    if e <= 0.0 {
        return xmin;
    }
    let lx = xmin.ln();
    let slope = lx / h0;
    let mut w = 1.0 + e / slope; // exact when beta = 0
    for _ in 0..64 {
        let g = slope * (w - 1.0) + beta * w.ln() - e;
        let gp = slope + beta / w;
        let step = g / gp;
        w -= step;
        if w < 1.0 {
            w = 1.0;
        }
        if step.abs() <= 1e-14 * w.max(1.0) {
            break;
        }
    }
    (w * lx).exp()
}

/// E[|Y|^p] for the log-perturbed Pareto with p < 1/h0, by quadrature of
/// p xmin^p exp((p - a) s) ((ln xmin + s)/ln xmin)^(-beta) over s in [0, inf).
fn log_pareto_moment(h0: f64, beta: f64, xmin: f64, p: f64) -> f64 {
    let a = 1.0 / h0;
    let lx = xmin.ln();
    let rate = a - p;
    let f = |s: f64| (-rate * s).exp() * ((lx + s) / lx).powf(-beta);
    // extend the window until the integrand is negligible
    let mut hi = 50.0 / rate;
    while f(hi) > 1e-18 {
        hi *= 1.5;
    }
    let integral = stats::adaptive_simpson(&f, 0.0, hi, 1e-12, 40);
    xmin.powf(p) * (1.0 + p * integral)
}

/// Offspring law of the branching process. Mean strictly above 1 is
/// enforced at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffspringLaw {
    Deterministic { m: u32 },
    PoissonShifted { lambda: f64 },
    GeometricShifted { p: f64 },
    CustomPmf { probs: Vec<f64> },
}

impl OffspringLaw {
    pub fn deterministic(m: u32) -> Result<Self, LawError> {
        let law = OffspringLaw::Deterministic { m };
        law.validate()?;
        Ok(law)
    }

    pub fn poisson_shifted(lambda: f64) -> Result<Self, LawError> {
        let law = OffspringLaw::PoissonShifted { lambda };
        law.validate()?;
        Ok(law)
    }

    pub fn geometric_shifted(p: f64) -> Result<Self, LawError> {
        let law = OffspringLaw::GeometricShifted { p };
        law.validate()?;
        Ok(law)
    }

    pub fn custom_pmf(probs: Vec<f64>) -> Result<Self, LawError> {
        let law = OffspringLaw::CustomPmf { probs };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<(), LawError> {
        let bad = |m: String| Err(LawError::InvalidParameter(m));
        match self {
            OffspringLaw::Deterministic { m } => {
                if *m < 2 {
                    return bad(format!("deterministic offspring needs m >= 2, got {m}"));
                }
            }
            OffspringLaw::PoissonShifted { lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return bad(format!("shifted poisson needs lambda > 0, got {lambda}"));
                }
            }
            OffspringLaw::GeometricShifted { p } => {
                if !(p.is_finite() && *p > 0.0 && *p < 1.0) {
                    return bad(format!("shifted geometric needs p in (0,1), got {p}"));
                }
            }
            OffspringLaw::CustomPmf { probs } => {
                if probs.is_empty() {
                    return bad("custom pmf must be nonempty".into());
                }
                if probs.iter().any(|q| !q.is_finite() || *q < 0.0) {
                    return bad("custom pmf entries must be finite and nonnegative".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("custom pmf must sum to 1 within 1e-12, got {total}"));
                }
                let mean: f64 = probs.iter().enumerate().map(|(k, q)| k as f64 * q).sum();
                if mean <= 1.0 {
                    return bad(format!("offspring mean must exceed 1, got {mean}"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            OffspringLaw::Deterministic { m } => *m as f64,
            OffspringLaw::PoissonShifted { lambda } => 1.0 + lambda,
            OffspringLaw::GeometricShifted { p } => 1.0 / p,
            OffspringLaw::CustomPmf { probs } => {
                probs.iter().enumerate().map(|(k, q)| k as f64 * q).sum()
            }
        }
    }

    pub fn p_zero(&self) -> f64 {
        match self {
            OffspringLaw::CustomPmf { probs } => probs[0],
            _ => 0.0,
        }
    }

    /// E[s^Z] for s in [0, 1].
    pub fn pgf(&self, s: f64) -> f64 {
        match self {
            OffspringLaw::Deterministic { m } => s.powi(*m as i32),
            OffspringLaw::PoissonShifted { lambda } => s * (lambda * (s - 1.0)).exp(),
            OffspringLaw::GeometricShifted { p } => s * p / (1.0 - (1.0 - p) * s),
            OffspringLaw::CustomPmf { probs } => {
                let mut acc = 0.0;
                for q in probs.iter().rev() {
                    acc = acc * s + q;
                }
                acc
            }
        }
    }

    /// Every catalog variant has all polynomial moments E[Z^q] finite.
    pub fn has_all_moments(&self) -> bool {
        true
    }

    /// E[Z log Z] is finite for every catalog variant.
    pub fn z_log_z_finite(&self) -> bool {
        true
    }

    #[inline]
    pub fn sample(&self, s: &mut KeyedStream) -> u32 {
        match self {
            OffspringLaw::Deterministic { m } => *m,
            OffspringLaw::PoissonShifted { lambda } => 1 + s.next_poisson(*lambda),
            OffspringLaw::GeometricShifted { p } => 1 + s.next_geometric(*p),
            OffspringLaw::CustomPmf { probs } => {
                let u = s.next_f64();
                let mut acc = 0.0;
                for (k, q) in probs.iter().enumerate() {
                    acc += q;
                    if u <= acc {
                        return k as u32;
                    }
                }
                (probs.len() - 1) as u32
            }
        }
    }
}
