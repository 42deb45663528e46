//! Streaming simulation of the discounted branching random walk on a
//! Galton-Watson tree truncated at depth N.
//!
//! The tree is never materialized: a depth-first walk draws each vertex's
//! increment and offspring count from that vertex's keyed stream, so any
//! traversal (or re-traversal by another module) reproduces the identical
//! tree. Memory is O(N); each vertex is visited exactly once.

use crate::laws::{IncrementLaw, OffspringLaw};
use crate::rng::{split_seed, VertexKey};
use crate::series::{self, SeriesResult};
use crate::stats::{wilson_interval, WilsonInterval};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

fn default_node_budget() -> u64 {
    200_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub increment: IncrementLaw,
    pub offspring: OffspringLaw,
    pub h: f64,
    /// Truncation depth N.
    pub depth: u32,
    pub seed: u64,
    #[serde(default = "default_node_budget")]
    pub node_budget: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.increment.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        self.offspring.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        if !(self.h > 0.0) {
            return Err(SimError::InvalidConfig(format!("H must be positive, got {}", self.h)));
        }
        if self.depth < 1 {
            return Err(SimError::InvalidConfig("depth N must be at least 1".into()));
        }
        if self.node_budget == 0 {
            return Err(SimError::InvalidConfig("node budget must be positive".into()));
        }
        Ok(())
    }

    /// Mean offspring count; the discount base of the walk.
    pub fn m(&self) -> f64 {
        self.offspring.mean()
    }

    /// Same config pointed at a replica-specific seed.
    pub fn with_replica_seed(&self, experiment_id: &str, replica: u64) -> SimConfig {
        SimConfig { seed: split_seed(self.seed, experiment_id, replica), ..self.clone() }
    }
}

/// Receives the walk vertex by vertex. Methods are called in DFS order:
/// enter(v) at first visit (depth >= 1, after the vertex's increment is
/// drawn), then its children's spans, then leave(v). `committed` in
/// leave() is true when some descendant ray reached depth N, i.e. the
/// vertex lies on a prefix of a realized ray.
pub trait TreeVisitor {
    /// Return false to skip drawing increments; offspring draws stay
    /// aligned because the per-vertex counter is advanced identically.
    fn needs_increments(&self) -> bool {
        true
    }
    fn enter(&mut self, depth: u32, child_index: u32, discounted: f64, raw: f64);
    fn leave(&mut self, depth: u32, committed: bool);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkStats {
    pub nodes_visited: u64,
    /// Tree still alive at depth N.
    pub survived: bool,
    /// Node budget was hit; results cover the visited portion only.
    pub truncated: bool,
    /// Some depth's discount underflowed; those increments contribute 0.
    pub underflow: bool,
}

struct Walker<'a, V: TreeVisitor> {
    increment: &'a IncrementLaw,
    offspring: &'a OffspringLaw,
    n: u32,
    budget: u64,
    /// discount[i] = m^(-iH), zeroed where the underflow guard trips.
    discount: Vec<f64>,
    nodes: u64,
    truncated: bool,
    underflow: bool,
    needs_eta: bool,
    eta_draws: u64,
    visitor: &'a mut V,
}

impl<'a, V: TreeVisitor> Walker<'a, V> {
    fn walk(&mut self, key: VertexKey, depth: u32, child_index: u32) -> bool {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.truncated = true;
            self.nodes = self.budget;
            return false;
        }
        let mut stream = key.stream();
        if depth >= 1 {
            let raw = if self.needs_eta {
                self.increment.sample(&mut stream)
            } else {
                stream.skip(self.eta_draws);
                0.0
            };
            self.visitor.enter(depth, child_index, self.discount[depth as usize] * raw, raw);
            if depth == self.n {
                self.visitor.leave(depth, true);
                return true;
            }
        }
        let z = self.offspring.sample(&mut stream);
        let mut reached = false;
        for c in 0..z {
            if self.truncated {
                break;
            }
            if self.walk(key.child(c), depth + 1, c) {
                reached = true;
            }
        }
        if depth >= 1 {
            self.visitor.leave(depth, reached);
        }
        reached
    }
}

/// Runs the keyed depth-first walk for this config, feeding the visitor.
pub fn walk_tree<V: TreeVisitor>(cfg: &SimConfig, visitor: &mut V) -> WalkStats {
    let m = cfg.m();
    let log2_m = m.log2();
    let scale = 1e3 * cfg.increment.scale_hint();
    let mut underflow = false;
    let mut discount = Vec::with_capacity(cfg.depth as usize + 1);
    discount.push(1.0);
    for i in 1..=cfg.depth {
        let d = (-(i as f64) * cfg.h * log2_m).exp2();
        // double-precision floor: contributions that cannot reach 1e-300
        // even at a 1000x typical increment are pinned to zero
        if d * scale < 1e-300 {
            underflow = true;
            discount.push(0.0);
        } else {
            discount.push(d);
        }
    }
    let needs_eta = visitor.needs_increments();
    let mut w = Walker {
        increment: &cfg.increment,
        offspring: &cfg.offspring,
        n: cfg.depth,
        budget: cfg.node_budget,
        discount,
        nodes: 0,
        truncated: false,
        underflow,
        needs_eta,
        eta_draws: cfg.increment.draw_count(),
        visitor,
    };
    let survived = w.walk(VertexKey::root(cfg.seed), 0, 0);
    WalkStats {
        nodes_visited: w.nodes,
        survived,
        truncated: w.truncated,
        underflow: w.underflow,
    }
}

/// Running maxima of the walk over realized rays, depth by depth.
/// Index 0 is the root (zero sum); entries at depth k cover exactly the
/// vertices lying on rays that reach depth N. An extinct tree reports
/// zeros with survived = false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupTrajectory {
    /// max over rays of the depth-k prefix sum.
    pub max_signed: Vec<f64>,
    /// max over rays and prefixes j <= k of |prefix sum at j|.
    pub max_abs: Vec<f64>,
    pub survived: bool,
    pub nodes_visited: u64,
    pub truncated: bool,
    pub underflow: bool,
}

struct SupVisitor {
    cur_sum: Vec<f64>,
    cur_abs: Vec<f64>,
    max_signed: Vec<f64>,
    max_abs: Vec<f64>,
}

impl TreeVisitor for SupVisitor {
    fn enter(&mut self, depth: u32, _child_index: u32, discounted: f64, _raw: f64) {
        let d = depth as usize;
        self.cur_sum[d] = self.cur_sum[d - 1] + discounted;
        self.cur_abs[d] = self.cur_abs[d - 1].max(self.cur_sum[d].abs());
    }

    fn leave(&mut self, depth: u32, committed: bool) {
        if committed {
            let d = depth as usize;
            self.max_signed[d] = self.max_signed[d].max(self.cur_sum[d]);
            self.max_abs[d] = self.max_abs[d].max(self.cur_abs[d]);
        }
    }
}

pub fn dfs_supremum(cfg: &SimConfig) -> SupTrajectory {
    let n = cfg.depth as usize;
    let mut v = SupVisitor {
        cur_sum: vec![0.0; n + 1],
        cur_abs: vec![0.0; n + 1],
        max_signed: vec![f64::NEG_INFINITY; n + 1],
        max_abs: vec![0.0; n + 1],
    };
    v.max_signed[0] = 0.0;
    let stats = walk_tree(cfg, &mut v);
    if !stats.survived {
        v.max_signed = vec![0.0; n + 1];
        v.max_abs = vec![0.0; n + 1];
    } else {
        // dead side branches may leave gaps only if no ray passed depth k,
        // which cannot happen once some ray reached N
        debug_assert!(v.max_signed.iter().all(|x| x.is_finite()));
    }
    SupTrajectory {
        max_signed: v.max_signed,
        max_abs: v.max_abs,
        survived: stats.survived,
        nodes_visited: stats.nodes_visited,
        truncated: stats.truncated,
        underflow: stats.underflow,
    }
}

/// Kesten-Stigum ratios W_k = #V_k / m^k for k = 0..=N on the same keyed
/// tree the other walks see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WSequence {
    pub w: Vec<f64>,
    pub nodes_visited: u64,
    pub truncated: bool,
}

struct CountVisitor {
    counts: Vec<u64>,
}

impl TreeVisitor for CountVisitor {
    fn needs_increments(&self) -> bool {
        false
    }
    fn enter(&mut self, depth: u32, _child_index: u32, _discounted: f64, _raw: f64) {
        self.counts[depth as usize] += 1;
    }
    fn leave(&mut self, _depth: u32, _committed: bool) {}
}

pub fn track_w(cfg: &SimConfig) -> WSequence {
    let n = cfg.depth as usize;
    let mut v = CountVisitor { counts: vec![0; n + 1] };
    v.counts[0] = 1;
    let stats = walk_tree(cfg, &mut v);
    let m = cfg.m();
    let w = v
        .counts
        .iter()
        .enumerate()
        .map(|(k, c)| *c as f64 / m.powi(k as i32))
        .collect();
    WSequence { w, nodes_visited: stats.nodes_visited, truncated: stats.truncated }
}

/// Counts of vertices whose own discounted increment exceeds u in
/// absolute value, |m^(-H l(v)) eta_v| > u, over the whole realized tree
/// up to depth N. max_per_ray maximizes the count along realized rays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceStats {
    pub threshold: f64,
    pub total_count: u64,
    pub max_per_ray: u32,
    pub witness_depths: Vec<u32>,
    pub survived: bool,
    pub nodes_visited: u64,
    pub truncated: bool,
}

struct ExceedVisitor {
    u: f64,
    n: u32,
    cur_count: Vec<u32>,
    total: u64,
    witness: Option<Vec<u32>>,
    max_per_ray: u32,
}

impl TreeVisitor for ExceedVisitor {
    fn enter(&mut self, depth: u32, _child_index: u32, discounted: f64, _raw: f64) {
        let d = depth as usize;
        let hit = discounted.abs() > self.u;
        if hit {
            self.total += 1;
            if let Some(w) = self.witness.as_mut() {
                w.push(depth);
            }
        }
        self.cur_count[d] = self.cur_count[d - 1] + hit as u32;
    }

    fn leave(&mut self, depth: u32, committed: bool) {
        if committed && depth == self.n {
            self.max_per_ray = self.max_per_ray.max(self.cur_count[depth as usize]);
        }
    }
}

pub fn count_exceedances(cfg: &SimConfig, u: f64) -> ExceedanceStats {
    assert!(u > 0.0, "threshold must be positive");
    let mut v = ExceedVisitor {
        u,
        n: cfg.depth,
        cur_count: vec![0; cfg.depth as usize + 1],
        total: 0,
        witness: Some(Vec::new()),
        max_per_ray: 0,
    };
    let stats = walk_tree(cfg, &mut v);
    ExceedanceStats {
        threshold: u,
        total_count: v.total,
        max_per_ray: v.max_per_ray,
        witness_depths: v.witness.unwrap(),
        survived: stats.survived,
        nodes_visited: stats.nodes_visited,
        truncated: stats.truncated,
    }
}

/// Empirical tail of max_per_ray across replicas, with Wilson intervals
/// and the analytic per-ray bound exp(-r log(r / (alpha P)) + r - alpha P)
/// at alpha = 1, which is sharp for deterministic offspring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayTailReport {
    pub r_values: Vec<u32>,
    pub empirical: Vec<f64>,
    pub wilson: Vec<WilsonInterval>,
    pub bound: Vec<f64>,
    pub p_series: f64,
    pub replicas: u64,
    pub any_truncated: bool,
}

pub fn max_ray_exceedance_tail(
    cfg: &SimConfig,
    u: f64,
    r_values: &[u32],
    replicas: u64,
) -> Result<RayTailReport, SimError> {
    cfg.validate()?;
    assert!(u > 0.0, "threshold must be positive");
    let p = match series::compute_p(&cfg.increment, cfg.m(), cfg.h, series::DEFAULT_TOL) {
        Ok(SeriesResult::Finite { value, .. }) => value,
        Ok(SeriesResult::Divergent { .. }) => {
            return Err(SimError::InvalidConfig(
                "per-ray tail bound needs P finite; this law and H diverge".into(),
            ))
        }
        Err(e) => return Err(SimError::InvalidConfig(e.to_string())),
    };

    let mut maxima = Vec::with_capacity(replicas as usize);
    let mut any_truncated = false;
    for rep in 0..replicas {
        let rcfg = cfg.with_replica_seed("ray_tail", rep);
        let mut v = ExceedVisitor {
            u,
            n: rcfg.depth,
            cur_count: vec![0; rcfg.depth as usize + 1],
            total: 0,
            witness: None,
            max_per_ray: 0,
        };
        let stats = walk_tree(&rcfg, &mut v);
        any_truncated |= stats.truncated;
        maxima.push(v.max_per_ray);
    }

    let mut empirical = Vec::new();
    let mut wilson = Vec::new();
    let mut bound = Vec::new();
    for &r in r_values {
        let hits = maxima.iter().filter(|m| **m >= r).count() as u64;
        empirical.push(hits as f64 / replicas as f64);
        wilson.push(wilson_interval(hits, replicas, 1.96));
        let rf = r as f64;
        // alpha = 1: exp(-r log(r/P) + r - P); values above 1 clamp to 1
        bound.push((-rf * (rf / p).ln() + rf - p).exp().min(1.0));
    }
    Ok(RayTailReport {
        r_values: r_values.to_vec(),
        empirical,
        wilson,
        bound,
        p_series: p,
        replicas,
        any_truncated,
    })
}
