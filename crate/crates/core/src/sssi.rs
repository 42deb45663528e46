//! p-adic self-similar skeleton: X_n = sum_{k=1..K} c^k (Y^k_{n mod p^k} -
//! Y^k_0) for n in [0, p^K), the discrete process whose digit structure
//! mirrors a depth-K deterministic p-ary tree with H = -log c / log p.
//!
//! Level arrays are keyed by (seed, level, index) only, so a K-level build
//! is a bitwise prefix of a (K+1)-level build; several invariants below are
//! exact consequences of that and of the mod-p^k periodicity.

use crate::laws::IncrementLaw;
use crate::rng::{split_seed, KeyedStream, VertexKey};
use crate::stats::{classify_growth, ks_p_value, ks_statistic_sorted, median, GrowthVerdict};
use crate::tree_sim::{dfs_supremum, SimConfig};
use crate::laws::OffspringLaw;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SssiError {
    #[error("invalid skeleton config: {0}")]
    InvalidConfig(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
}

/// K * p^K must stay within this many array entries.
const MEMORY_GUARD: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonConfig {
    pub p: u32,
    pub c: f64,
    pub law_y: IncrementLaw,
    /// Number of levels K; indices run over [0, p^K).
    pub levels: u32,
    pub seed: u64,
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl SkeletonConfig {
    pub fn validate(&self) -> Result<(), SssiError> {
        self.law_y.validate().map_err(|e| SssiError::InvalidConfig(e.to_string()))?;
        if !is_prime(self.p) {
            return Err(SssiError::InvalidConfig(format!("p must be prime, got {}", self.p)));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(SssiError::InvalidConfig(format!("c must lie in (0,1), got {}", self.c)));
        }
        if self.levels < 1 {
            return Err(SssiError::InvalidConfig("need at least one level".into()));
        }
        let size = (self.p as u128).checked_pow(self.levels);
        match size {
            Some(s) if s * self.levels as u128 <= MEMORY_GUARD => Ok(()),
            _ => Err(SssiError::BudgetExceeded(format!(
                "K * p^K = {} * {}^{} exceeds the {} entry guard",
                self.levels, self.p, self.levels, MEMORY_GUARD
            ))),
        }
    }

    /// Self-similarity index H = -log c / log p.
    pub fn h(&self) -> f64 {
        -self.c.ln() / (self.p as f64).ln()
    }

    pub fn index_count(&self) -> usize {
        (self.p as u64).pow(self.levels) as usize
    }

    /// Walk config for the matching re-centered p-ary tree.
    pub fn tree_config(&self, depth: u32, seed: u64) -> SimConfig {
        SimConfig {
            increment: self.law_y.clone(),
            offspring: OffspringLaw::deterministic(self.p).expect("p >= 2"),
            h: self.h(),
            depth,
            seed,
            node_budget: 200_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skeleton {
    /// X_n for n in [0, p^K).
    pub x: Vec<f64>,
    /// levels[k-1] holds the p^k i.i.d. entries of Y^k.
    pub levels: Vec<Vec<f64>>,
    pub p: u32,
    pub c: f64,
    /// Report-only majorant of the dropped k > K tail: c^(K+1)/(1-c)
    /// times twice the law's scale hint.
    pub tail_majorant: f64,
}

impl Skeleton {
    /// Contribution of level k (1-based) to X_n, exactly as assembled.
    pub fn level_contribution(&self, k: u32, n: usize) -> f64 {
        let arr = &self.levels[k as usize - 1];
        self.c.powi(k as i32) * (arr[n % arr.len()] - arr[0])
    }

    /// X extended p^K-periodically to any index.
    pub fn x_periodic(&self, n: usize) -> f64 {
        self.x[n % self.x.len()]
    }

    pub fn max_abs(&self) -> f64 {
        self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_signed(&self) -> f64 {
        self.x.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }
}

fn draw_level(cfg: &SkeletonConfig, k: u32) -> Vec<f64> {
    // keyed by (seed, k, n): independent of K, so builds nest bitwise
    let len = (cfg.p as u64).pow(k);
    let mut arr = Vec::with_capacity(len as usize);
    for n in 0..len {
        let mut s = KeyedStream::from_label(cfg.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), "sssi_level", n);
        arr.push(cfg.law_y.sample(&mut s));
    }
    arr
}

/// Assembles X from level arrays: X_n = sum_k c^k (levels[k][n mod p^k] -
/// levels[k][0]). Split out so tests can rebuild with a zeroed level.
pub fn assemble(levels: &[Vec<f64>], c: f64, index_count: usize) -> Vec<f64> {
    let mut x = vec![0.0f64; index_count];
    for (i, arr) in levels.iter().enumerate() {
        let ck = c.powi(i as i32 + 1);
        let len = arr.len();
        let base = arr[0];
        for (n, xn) in x.iter_mut().enumerate() {
            *xn += ck * (arr[n % len] - base);
        }
    }
    x
}

pub fn build_skeleton(cfg: &SkeletonConfig) -> Result<Skeleton, SssiError> {
    cfg.validate()?;
    let levels: Vec<Vec<f64>> = (1..=cfg.levels).map(|k| draw_level(cfg, k)).collect();
    let x = assemble(&levels, cfg.c, cfg.index_count());
    debug_assert_eq!(x[0], 0.0);
    let tail_majorant =
        cfg.c.powi(cfg.levels as i32 + 1) / (1.0 - cfg.c) * 2.0 * cfg.law_y.scale_hint();
    Ok(Skeleton { x, levels, p: cfg.p, c: cfg.c, tail_majorant })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub k_values: Vec<u32>,
    /// Median over replicas of max_n |X_n| at each K.
    pub median_max_abs: Vec<f64>,
    pub replicas: u64,
    pub verdict: GrowthVerdict,
}

/// Running maxima across truncation levels, classified by the shared
/// slope rule on the log medians.
pub fn boundedness_scan(
    cfg: &SkeletonConfig,
    k_range: std::ops::RangeInclusive<u32>,
    replicas: u64,
) -> Result<ScanReport, SssiError> {
    let k_values: Vec<u32> = k_range.collect();
    if k_values.is_empty() || replicas == 0 {
        return Err(SssiError::InvalidConfig("empty K range or zero replicas".into()));
    }
    let mut median_max_abs = Vec::with_capacity(k_values.len());
    for &k in &k_values {
        let mut maxima = Vec::with_capacity(replicas as usize);
        for rep in 0..replicas {
            let rcfg = SkeletonConfig {
                levels: k,
                seed: split_seed(cfg.seed, "sssi_scan", rep),
                ..cfg.clone()
            };
            maxima.push(build_skeleton(&rcfg)?.max_abs());
        }
        median_max_abs.push(median(&maxima));
    }
    let depths: Vec<f64> = k_values.iter().map(|k| *k as f64).collect();
    let ln_meds: Vec<f64> = median_max_abs.iter().map(|m| m.max(1e-300).ln()).collect();
    let verdict = classify_growth(&depths, &ln_meds, crate::stats::FLAT_SLOPE, crate::stats::GROW_SLOPE);
    Ok(ScanReport { k_values, median_max_abs, replicas, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub ks_stat: f64,
    pub p_value: f64,
    pub replicas: u64,
    pub skeleton_median: f64,
    pub tree_median: f64,
}

/// Sum of discounted increments along the all-zeros ray of the keyed tree.
fn zero_ray_sum(cfg: &SimConfig) -> f64 {
    let m = cfg.m();
    let mut key = VertexKey::root(cfg.seed);
    let mut sum = 0.0;
    for depth in 1..=cfg.depth {
        key = key.child(0);
        let mut s = key.stream();
        sum += (-(depth as f64) * cfg.h * m.log2()).exp2() * cfg.increment.sample(&mut s);
    }
    sum
}

/// Distributional match between the skeleton max and the re-centered
/// p-ary tree max: max_n X_n versus max over depth-K rays of the walk
/// minus the all-zeros ray, sampled independently on both sides.
pub fn equivalence_test(cfg: &SkeletonConfig, replicas: u64) -> Result<EquivalenceReport, SssiError> {
    cfg.validate()?;
    if replicas < 2 {
        return Err(SssiError::InvalidConfig("need at least 2 replicas".into()));
    }
    let mut skel = Vec::with_capacity(replicas as usize);
    let mut tree = Vec::with_capacity(replicas as usize);
    for rep in 0..replicas {
        let scfg = SkeletonConfig {
            seed: split_seed(cfg.seed, "sssi_eq_skel", rep),
            ..cfg.clone()
        };
        skel.push(build_skeleton(&scfg)?.max_signed());

        let tcfg = cfg.tree_config(cfg.levels, split_seed(cfg.seed, "sssi_eq_tree", rep));
        let t = dfs_supremum(&tcfg);
        tree.push(t.max_signed[cfg.levels as usize] - zero_ray_sum(&tcfg));
    }
    skel.sort_unstable_by(f64::total_cmp);
    tree.sort_unstable_by(f64::total_cmp);
    let ks_stat = ks_statistic_sorted(&skel, &tree);
    let p_value = ks_p_value(ks_stat, skel.len(), tree.len());
    Ok(EquivalenceReport {
        ks_stat,
        p_value,
        replicas,
        skeleton_median: median(&skel),
        tree_median: median(&tree),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::IncrementLaw;
    use crate::stats::Trend;

    fn cfg(p: u32, c: f64, law: IncrementLaw, levels: u32, seed: u64) -> SkeletonConfig {
        SkeletonConfig { p, c, law_y: law, levels, seed }
    }

    #[test]
    fn x_zero_is_exactly_zero_and_constant_y_collapses() {
        for seed in 0..20 {
            let s = build_skeleton(&cfg(
                2,
                0.25,
                IncrementLaw::gaussian(1.0).unwrap(),
                8,
                seed,
            ))
            .unwrap();
            assert_eq!(s.x[0], 0.0);
        }
        // constant increments cancel at every index
        let s = build_skeleton(&cfg(3, 0.5, IncrementLaw::constant(1.0).unwrap(), 5, 7)).unwrap();
        assert!(s.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn periodicity_kills_low_levels_exactly() {
        let s = build_skeleton(&cfg(
            3,
            0.4,
            IncrementLaw::sym_pareto(1.0, 1.0).unwrap(),
            7,
            11,
        ))
        .unwrap();
        let p = 3usize;
        let count = s.x.len();
        let mut stream = KeyedStream::from_label(5, "pairs", 0);
        let mut checked = 0;
        while checked < 1000 {
            let j = 1 + stream.next_index(5); // agreement depth 1..=5
            let pj = p.pow(j as u32);
            let base = stream.next_index(pj);
            let lift_a = stream.next_index(count / pj);
            let lift_b = stream.next_index(count / pj);
            let n = base + pj * lift_a;
            let n2 = base + pj * lift_b;
            if n == n2 {
                continue;
            }
            // n == n2 mod p^j: every level k <= j contributes bitwise
            // identically to X_n and X_n2
            for k in 1..=j as u32 {
                assert_eq!(
                    s.level_contribution(k, n),
                    s.level_contribution(k, n2),
                    "level {k} differs for {n} vs {n2}"
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn rebuilding_with_zeroed_extra_level_reproduces_x() {
        let base = cfg(2, 0.3, IncrementLaw::gaussian(1.0).unwrap(), 9, 21);
        let s9 = build_skeleton(&base).unwrap();
        let mut wider = base.clone();
        wider.levels = 10;
        let s10 = build_skeleton(&wider).unwrap();
        // keying is independent of K: shared levels are bitwise equal
        for k in 0..9 {
            assert_eq!(s9.levels[k], s10.levels[k]);
        }
        let mut levels = s10.levels.clone();
        for v in levels[9].iter_mut() {
            *v = 0.0;
        }
        let rebuilt = assemble(&levels, 0.3, s10.x.len());
        for n in 0..s9.x.len() {
            assert_eq!(rebuilt[n], s9.x[n], "index {n}");
            assert_eq!(rebuilt[n + s9.x.len()], s9.x[n], "periodic image of {n}");
        }
    }

    #[test]
    fn scale_increments_are_shift_stationary_as_multisets() {
        // X is p^K-periodic, so the multiset of lag-(s p^j) increments
        // over a full period is exactly invariant under any index shift
        let s = build_skeleton(&cfg(
            2,
            0.35,
            IncrementLaw::uniform(-1.0, 2.0).unwrap(),
            8,
            3,
        ))
        .unwrap();
        let period = s.x.len();
        for (j, lag_s, shift) in [(2u32, 3usize, 7usize), (4, 1, 129), (0, 5, 64)] {
            let lag = 2usize.pow(j) * lag_s;
            let mut a: Vec<f64> =
                (0..period).map(|n| s.x_periodic(n + lag) - s.x_periodic(n)).collect();
            let mut b: Vec<f64> = (0..period)
                .map(|n| s.x_periodic(n + shift + lag) - s.x_periodic(n + shift))
                .collect();
            a.sort_unstable_by(f64::total_cmp);
            b.sort_unstable_by(f64::total_cmp);
            assert_eq!(a, b, "j {j} s {lag_s} shift {shift}");
        }
    }

    #[test]
    fn bounded_y_gives_uniform_geometric_majorant() {
        // sup|Y| = 1: max_n |X_n| <= 2 c/(1-c) regardless of K
        let bound = 2.0 * 0.4 / 0.6;
        for k in [4u32, 8, 12] {
            for seed in 0..10 {
                let s = build_skeleton(&cfg(
                    2,
                    0.4,
                    IncrementLaw::two_point(1.0).unwrap(),
                    k,
                    seed,
                ))
                .unwrap();
                assert!(s.max_abs() <= bound + 1e-12, "K {k} seed {seed}: {}", s.max_abs());
            }
        }
    }

    #[test]
    fn boundedness_scan_separates_the_two_anchors() {
        // H = 2: E|Y|^(1/2) finite for theta = 1, sup stays put
        let flat = boundedness_scan(
            &cfg(2, 0.25, IncrementLaw::sym_pareto(1.0, 1.0).unwrap(), 14, 40),
            8..=14,
            32,
        )
        .unwrap();
        assert_eq!(flat.verdict.verdict, Trend::Flat, "{:?}", flat.verdict);

        // H = 1/2: E|Y|^2 infinite, maxima grow geometrically in K
        let grow = boundedness_scan(
            &cfg(
                2,
                std::f64::consts::FRAC_1_SQRT_2,
                IncrementLaw::sym_pareto(1.0, 1.0).unwrap(),
                14,
                41,
            ),
            8..=14,
            32,
        )
        .unwrap();
        assert_eq!(grow.verdict.verdict, Trend::Growing, "{:?}", grow.verdict);
        assert!(grow.verdict.slope > flat.verdict.slope);
    }

    #[test]
    fn single_level_skeleton_matches_tree_exhaustively() {
        // p = 2, K = 1, Y = ±1: max(0, c(Y_1 - Y_0)) lands on {0, 2c},
        // 0 with probability 3/4; the tree side has the same law
        let c = 0.25;
        let mut skel_zero = 0u64;
        let mut tree_zero = 0u64;
        let reps = 4000u64;
        for rep in 0..reps {
            let scfg = cfg(2, c, IncrementLaw::two_point(1.0).unwrap(), 1, 1000 + rep);
            let s = build_skeleton(&scfg).unwrap();
            let sm = s.max_signed();
            assert!(sm == 0.0 || sm == 2.0 * c, "skeleton {sm}");
            skel_zero += (sm == 0.0) as u64;

            let tcfg = scfg.tree_config(1, 5000 + rep);
            let t = dfs_supremum(&tcfg);
            let tm = t.max_signed[1] - zero_ray_sum(&tcfg);
            assert!(tm == 0.0 || tm == 2.0 * c, "tree {tm}");
            tree_zero += (tm == 0.0) as u64;
        }
        let ws = crate::stats::wilson_interval(skel_zero, reps, 3.3);
        let wt = crate::stats::wilson_interval(tree_zero, reps, 3.3);
        assert!(ws.lo <= 0.75 && 0.75 <= ws.hi, "skeleton zero-rate {ws:?}");
        assert!(wt.lo <= 0.75 && 0.75 <= wt.hi, "tree zero-rate {wt:?}");
    }

    #[test]
    fn skeleton_and_recentered_tree_agree_in_distribution() {
        let rep = equivalence_test(
            &cfg(2, 0.5f64.powf(0.7), IncrementLaw::gaussian(1.0).unwrap(), 10, 77),
            200,
        )
        .unwrap();
        assert!(rep.p_value > 0.01, "KS {} p {}", rep.ks_stat, rep.p_value);

        // constant Y: both sides identically zero, distance exactly 0
        let rep =
            equivalence_test(&cfg(2, 0.5, IncrementLaw::constant(3.0).unwrap(), 4, 1), 50).unwrap();
        assert_eq!(rep.ks_stat, 0.0);
    }

    #[test]
    fn config_guards() {
        let law = IncrementLaw::gaussian(1.0).unwrap();
        assert!(cfg(4, 0.5, law.clone(), 3, 0).validate().is_err()); // composite p
        assert!(cfg(2, 1.0, law.clone(), 3, 0).validate().is_err());
        assert!(cfg(2, 0.5, law.clone(), 0, 0).validate().is_err());
        // 2^40 blows the K p^K guard
        assert!(matches!(
            cfg(2, 0.5, law.clone(), 40, 0).validate(),
            Err(SssiError::BudgetExceeded(_))
        ));
        assert!(cfg(3, 0.5, law, 10, 0).validate().is_ok());
        assert!((cfg(2, 0.25, IncrementLaw::constant(0.0).unwrap(), 1, 0).h() - 2.0).abs() < 1e-15);
    }
}
