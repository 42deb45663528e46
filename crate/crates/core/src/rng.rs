//! Keyed counter-based random streams.
//!
//! Every random quantity in this crate is a pure function of (run seed, key).
//! A key names a position in the object being simulated (a tree vertex, a
//! skeleton array entry, a replica index), so replaying any subset of the
//! work reproduces identical draws regardless of traversal order or thread
//! count.

/// Weyl increment used by the splitmix64 sequence.
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer; full 64-bit avalanche.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identity of one vertex of the simulated tree: depth plus a 128-bit path
/// digest accumulated root-down. Collisions are negligible at simulation
/// scale (union bound below 2^-64 per run for budgets under 2^30 nodes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VertexKey {
    pub depth: u32,
    pub hi: u64,
    pub lo: u64,
}

impl VertexKey {
    /// Digest of the root vertex. Depends only on the run seed.
    pub fn root(seed: u64) -> Self {
        let lo = mix64(seed ^ 0x243F_6A88_85A3_08D3);
        let hi = mix64(seed.wrapping_add(0x4528_21E6_38D0_1377) ^ lo.rotate_left(17));
        VertexKey { depth: 0, hi, lo }
    }

    /// Digest of the `child_index`-th child. Pure in (self, child_index).
    #[inline(always)]
    pub fn child(&self, child_index: u32) -> Self {
        let t = self.lo ^ mix64(self.hi ^ (child_index as u64).wrapping_mul(GAMMA).wrapping_add(0xD1B5_4A32_D192_ED03));
        let lo = mix64(t.wrapping_add(self.hi));
        let hi = mix64(self.hi ^ lo.rotate_left(29) ^ GAMMA);
        VertexKey { depth: self.depth + 1, hi, lo }
    }

    /// The counter-based stream attached to this vertex.
    #[inline(always)]
    pub fn stream(&self) -> KeyedStream {
        KeyedStream { hi: self.hi, lo: self.lo, ctr: 0 }
    }
}

/// Counter-based generator: output i is mix64(mix64(lo ^ i*GAMMA) + hi).
/// No state evolution beyond the counter, so any draw can be recomputed
/// from (key, i) alone.
#[derive(Debug, Clone)]
pub struct KeyedStream {
    hi: u64,
    lo: u64,
    ctr: u64,
}

impl KeyedStream {
    /// Stream keyed by an arbitrary label, for non-vertex uses (replica
    /// splitting, Monte Carlo sign vectors, resampling indices).
    pub fn from_label(seed: u64, label: &str, index: u64) -> Self {
        let mut h = mix64(seed ^ 0x8CB9_2BA7_2F3D_8DD7);
        for b in label.bytes() {
            h = mix64(h.wrapping_add((b as u64).wrapping_mul(GAMMA)));
        }
        let lo = mix64(h ^ index.wrapping_mul(GAMMA));
        let hi = mix64(h.wrapping_add(index) ^ lo.rotate_left(23));
        KeyedStream { hi, lo, ctr: 0 }
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        let i = self.ctr;
        self.ctr += 1;
        mix64(mix64(self.lo ^ i.wrapping_mul(GAMMA)).wrapping_add(self.hi))
    }

    /// Advances the counter without computing outputs. Lets a traversal
    /// that ignores increments keep later draws aligned with one that
    /// consumes them.
    #[inline(always)]
    pub fn skip(&mut self, n: u64) {
        self.ctr += n;
    }

    /// Uniform on the half-open unit interval, never exactly 0.
    /// Safe under reciprocals and logarithms.
    #[inline(always)]
    pub fn next_f64(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    #[inline(always)]
    pub fn next_bool(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }

    /// Uniform index in [0, n). Modulo bias is below 2^-32 for the pool
    /// sizes used here.
    #[inline(always)]
    pub fn next_index(&mut self, n: usize) -> usize {
        (self.next_u64() % (n as u64)) as usize
    }

    /// Standard normal via Box-Muller. Consumes exactly two raw draws.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Poisson count by Knuth's product method; fine for the moderate
    /// rates used as offspring intensities.
    pub fn next_poisson(&mut self, lambda: f64) -> u32 {
        let l = (-lambda).exp();
        let mut k = 0u32;
        let mut p = 1.0;
        loop {
            p *= self.next_f64();
            if p <= l {
                return k;
            }
            k += 1;
        }
    }

    /// Geometric count of failures before the first success.
    #[inline]
    pub fn next_geometric(&mut self, p: f64) -> u32 {
        let u = self.next_f64();
        let g = (u.ln() / (1.0 - p).ln()).floor();
        if g < 0.0 {
            0
        } else if g >= u32::MAX as f64 {
            u32::MAX
        } else {
            g as u32
        }
    }
}

/// Derives a replica seed from a base seed and an experiment id, so
/// distinct experiments and replicas never share streams.
pub fn split_seed(base_seed: u64, experiment_id: &str, replica: u64) -> u64 {
    KeyedStream::from_label(base_seed, experiment_id, replica).next_u64()
}
