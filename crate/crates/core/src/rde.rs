//! Population-dynamics solver for the max-type recursive distributional
//! equation X = Y + c max_{i<=Z} X_i with c in (0,1), plus two independent
//! verifiers: a functional-integral-equation residual on the fitted CDF and
//! a two-sample comparison against the tree engine.
//!
//! The pool is kept sorted between steps. Resampling indices address order
//! statistics, which makes the update map monotone under common random
//! numbers; the monotonicity and equivariance tests rely on that.

use crate::laws::{IncrementLaw, OffspringLaw};
use crate::rng::KeyedStream;
use crate::stats::{ks_statistic_sorted, EmpiricalCdf};
use crate::tree_sim::{dfs_supremum, SimConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RdeError {
    #[error("invalid rde config: {0}")]
    InvalidConfig(String),
    #[error("fixed-point report is not converged: {0}")]
    NotConverged(String),
}

fn default_pool_size() -> usize {
    100_000
}
fn default_max_iters() -> u32 {
    500
}
fn default_ks_tol() -> f64 {
    2e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdeConfig {
    /// Law of the innovation Y.
    pub increment: IncrementLaw,
    pub offspring: OffspringLaw,
    /// Contraction factor; relates to the walk via c = m^(-H).
    pub c: f64,
    pub seed: u64,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: u32,
    #[serde(default = "default_ks_tol")]
    pub ks_tol: f64,
}

impl RdeConfig {
    pub fn validate(&self) -> Result<(), RdeError> {
        self.increment.validate().map_err(|e| RdeError::InvalidConfig(e.to_string()))?;
        self.offspring.validate().map_err(|e| RdeError::InvalidConfig(e.to_string()))?;
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(RdeError::InvalidConfig(format!("c must lie in (0,1), got {}", self.c)));
        }
        if self.offspring.p_zero() > 0.0 {
            return Err(RdeError::InvalidConfig(
                "offspring law must have P(Z=0) = 0; max over an empty brood is undefined".into(),
            ));
        }
        if self.pool_size < 2 {
            return Err(RdeError::InvalidConfig("pool size must be at least 2".into()));
        }
        if self.max_iters == 0 || !(self.ks_tol > 0.0) {
            return Err(RdeError::InvalidConfig("max_iters and ks_tol must be positive".into()));
        }
        Ok(())
    }

    /// Hurst index implied by c through c = m^(-H).
    pub fn h_implied(&self) -> f64 {
        -self.c.ln() / self.offspring.mean().ln()
    }
}

/// One synchronous update of the whole pool: every new sample is a fresh
/// Y plus c times the max over Z entries resampled (with replacement) from
/// the current pool. The pool stays sorted and keeps its size.
///
/// Per-sample draw order on `stream`: Y, then Z, then Z pick indices.
pub fn population_step(
    pool: &mut Vec<f64>,
    law_y: &IncrementLaw,
    offspring: &OffspringLaw,
    c: f64,
    stream: &mut KeyedStream,
) {
    debug_assert!(pool.windows(2).all(|w| w[0] <= w[1]), "pool must be sorted");
    let n = pool.len();
    let mut next = Vec::with_capacity(n);
    for _ in 0..n {
        let y = law_y.sample(stream);
        let z = offspring.sample(stream);
        debug_assert!(z >= 1);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..z {
            let pick = pool[stream.next_index(n)];
            if pick > best {
                best = pick;
            }
        }
        next.push(y + c * best);
    }
    next.sort_unstable_by(f64::total_cmp);
    *pool = next;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FixStatus {
    Converged { iterations: u32, ks_gap: f64, cdf: EmpiricalCdf },
    Diverged { median_trajectory: Vec<f64> },
    /// Neither rule fired within max_iters; carries the last gap seen.
    Inconclusive { iterations: u32, last_ks_gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub status: FixStatus,
    pub pool_size: usize,
    pub c: f64,
    pub h_implied: f64,
    /// (iteration, ks gap) at each 10-step checkpoint, for diagnostics.
    pub ks_checkpoints: Vec<(u32, f64)>,
}

impl FixedPointReport {
    pub fn converged_cdf(&self) -> Option<&EmpiricalCdf> {
        match &self.status {
            FixStatus::Converged { cdf, .. } => Some(cdf),
            _ => None,
        }
    }
}

const DIVERGE_MEDIAN: f64 = 1e9;
const DIVERGE_MONOTONE_RUN: u32 = 50;
const KS_CHECK_STRIDE: u32 = 10;
const KS_CONSECUTIVE: u32 = 3;

/// Iterates population_step from the all-zeros pool. Converged means the
/// two-sample KS distance between the pools at checkpoints k and k-10
/// stayed within ks_tol three checkpoints in a row. Diverged means the
/// pool median passed 1e9 or rose strictly for 50 straight iterations.
/// Starting at zero targets the minimal nonnegative solution when several
/// exist; see the initialization note in the tests.
pub fn iterate_to_fixpoint(cfg: &RdeConfig) -> Result<FixedPointReport, RdeError> {
    cfg.validate()?;
    let mut pool = vec![0.0f64; cfg.pool_size];
    let mut medians = Vec::with_capacity(cfg.max_iters as usize);
    let mut checkpoints = Vec::new();
    let mut prev_snapshot: Option<Vec<f64>> = None;
    let mut consecutive_ok = 0u32;
    let mut monotone_run = 0u32;
    let mut last_gap = f64::NAN;

    for iter in 1..=cfg.max_iters {
        let mut stream = KeyedStream::from_label(cfg.seed, "rde_step", iter as u64);
        population_step(&mut pool, &cfg.increment, &cfg.offspring, cfg.c, &mut stream);

        let med = pool[cfg.pool_size / 2];
        if let Some(prev) = medians.last() {
            if med > *prev {
                monotone_run += 1;
            } else {
                monotone_run = 0;
            }
        }
        medians.push(med);
        if med > DIVERGE_MEDIAN || monotone_run >= DIVERGE_MONOTONE_RUN {
            return Ok(FixedPointReport {
                status: FixStatus::Diverged { median_trajectory: medians },
                pool_size: cfg.pool_size,
                c: cfg.c,
                h_implied: cfg.h_implied(),
                ks_checkpoints: checkpoints,
            });
        }

        if iter % KS_CHECK_STRIDE == 0 {
            if let Some(prev) = &prev_snapshot {
                let gap = ks_statistic_sorted(prev, &pool);
                checkpoints.push((iter, gap));
                last_gap = gap;
                if gap <= cfg.ks_tol {
                    consecutive_ok += 1;
                } else {
                    consecutive_ok = 0;
                }
                if consecutive_ok >= KS_CONSECUTIVE {
                    return Ok(FixedPointReport {
                        status: FixStatus::Converged {
                            iterations: iter,
                            ks_gap: gap,
                            cdf: EmpiricalCdf::from_samples(pool.clone()),
                        },
                        pool_size: cfg.pool_size,
                        c: cfg.c,
                        h_implied: cfg.h_implied(),
                        ks_checkpoints: checkpoints,
                    });
                }
            }
            prev_snapshot = Some(pool.clone());
        }
    }
    Ok(FixedPointReport {
        status: FixStatus::Inconclusive { iterations: cfg.max_iters, last_ks_gap: last_gap },
        pool_size: cfg.pool_size,
        c: cfg.c,
        h_implied: cfg.h_implied(),
        ks_checkpoints: checkpoints,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieReport {
    pub x_grid: Vec<f64>,
    pub residual: Vec<f64>,
    pub se: Vec<f64>,
    pub max_residual: f64,
    pub mc_samples: u64,
}

/// Residual of the integral equation G(x) = int_0^x f(G((x-y)/c)) dF(y)
/// with f the offspring generating function and F the law of Y >= 0,
/// estimated by Monte Carlo over fresh Y draws shared across the grid.
pub fn fie_residual(
    g: &EmpiricalCdf,
    law_y: &IncrementLaw,
    offspring: &OffspringLaw,
    c: f64,
    x_grid: &[f64],
    mc_samples: u64,
    seed: u64,
) -> Result<FieReport, RdeError> {
    if !law_y.is_nonnegative() {
        return Err(RdeError::InvalidConfig("integral-equation check needs Y >= 0".into()));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(RdeError::InvalidConfig(format!("c must lie in (0,1), got {c}")));
    }
    if g.is_empty() || mc_samples == 0 || x_grid.is_empty() {
        return Err(RdeError::InvalidConfig("empty CDF, grid, or sample budget".into()));
    }
    let mut stream = KeyedStream::from_label(seed, "fie_y", 0);
    let ys: Vec<f64> = (0..mc_samples).map(|_| law_y.sample(&mut stream)).collect();

    let mut residual = Vec::with_capacity(x_grid.len());
    let mut se = Vec::with_capacity(x_grid.len());
    let mut max_residual = 0.0f64;
    for &x in x_grid {
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for &y in &ys {
            let term = if y <= x { offspring.pgf(g.eval((x - y) / c)) } else { 0.0 };
            sum += term;
            sum2 += term * term;
        }
        let nf = mc_samples as f64;
        let mean = sum / nf;
        let var = (sum2 / nf - mean * mean).max(0.0);
        let r = (g.eval(x) - mean).abs();
        residual.push(r);
        se.push((var / nf).sqrt());
        max_residual = max_residual.max(r);
    }
    Ok(FieReport { x_grid: x_grid.to_vec(), residual, se, max_residual, mc_samples })
}

/// Two-sample KS distance between the converged pool and tree-engine
/// replicas. The pool solves X = Y + c max X_i, whose tree realization
/// carries an innovation at the root; ray maxima from dfs_supremum start
/// below the root, so each tree sample is a fresh Y plus max_signed[N].
pub fn compare_to_simulation(
    report: &FixedPointReport,
    cfg: &SimConfig,
    replicas: u64,
) -> Result<f64, RdeError> {
    let cdf = report
        .converged_cdf()
        .ok_or_else(|| RdeError::NotConverged("compare_to_simulation needs Converged".into()))?;
    if !cfg.increment.is_nonnegative() {
        return Err(RdeError::InvalidConfig(
            "comparison needs Y >= 0 so truncated maxima increase to the sup".into(),
        ));
    }
    let c_tree = (-cfg.h * cfg.m().ln()).exp();
    if (report.c - c_tree).abs() > 1e-12 * report.c.max(c_tree) {
        return Err(RdeError::InvalidConfig(format!(
            "c = {} does not match m^(-H) = {} of the simulation config",
            report.c, c_tree
        )));
    }
    cfg.validate().map_err(|e| RdeError::InvalidConfig(e.to_string()))?;

    let n = cfg.depth as usize;
    let mut samples = Vec::with_capacity(replicas as usize);
    let mut ystream = KeyedStream::from_label(cfg.seed, "rde_cmp_y", 0);
    for rep in 0..replicas {
        let rcfg = cfg.with_replica_seed("rde_compare", rep);
        let t = dfs_supremum(&rcfg);
        samples.push(cfg.increment.sample(&mut ystream) + t.max_signed[n]);
    }
    samples.sort_unstable_by(f64::total_cmp);
    Ok(ks_statistic_sorted(cdf.sorted(), &samples))
}
