//! Simulation laboratory for geometrically discounted branching random
//! walks: increment/offspring law catalog, keyed tree simulation, series
//! bounds, chaining functionals, distributional fixed points, and a p-adic
//! self-similar skeleton, with a CLI driver on top.

pub mod laws;
pub mod rde;
pub mod rng;
pub mod series;
pub mod sssi;
pub mod stats;
pub mod tree_sim;
