//! Reproducible random instances: connected graphs and positive initial data.
//!
//! Every generator is driven by SplitMix64, and floats are drawn as
//! `(next_u64 >> 11) · 2^{−53}`, so instances can be regenerated from the
//! seed alone in any language.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::graph::{Graph, VertexFunction};

pub const RNG_ALGORITHM: &str = "splitmix64";

pub fn rng(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

pub fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// `n` values uniform in `[lo, hi)`.
pub fn uniform_function(rng: &mut SplitMix64, n: usize, lo: f64, hi: f64) -> VertexFunction {
    (0..n).map(|_| uniform(rng, lo, hi)).collect::<Vec<_>>().into()
}

/// Parameters for [`random_connected_graph`].
#[derive(Debug, Clone, Copy)]
pub struct RandomGraphSpec {
    pub n: usize,
    /// Probability of each extra (non-tree) edge.
    pub density: f64,
    pub weight_range: (f64, f64),
    pub measure_range: (f64, f64),
}

impl RandomGraphSpec {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            density: 0.3,
            weight_range: (0.2, 5.0),
            measure_range: (0.2, 5.0),
        }
    }
}

/// A random spanning tree (each vertex attaches to a uniformly chosen earlier
/// vertex) plus independent extra edges, so the result is always connected.
pub fn random_connected_graph(rng: &mut SplitMix64, spec: &RandomGraphSpec) -> Graph {
    let n = spec.n;
    let (wlo, whi) = spec.weight_range;
    let (mlo, mhi) = spec.measure_range;
    let mu: Vec<f64> = (0..n).map(|_| uniform(rng, mlo, mhi)).collect();
    let mut edges = Vec::new();
    let mut tree = vec![usize::MAX; n];
    for (v, parent) in tree.iter_mut().enumerate().skip(1) {
        *parent = rng.random_range(0..v);
        edges.push((*parent, v, uniform(rng, wlo, whi)));
    }
    for x in 0..n {
        for y in x + 1..n {
            if tree[y] == x {
                continue;
            }
            if rng.random::<f64>() < spec.density {
                edges.push((x, y, uniform(rng, wlo, whi)));
            }
        }
    }
    Graph::from_edges(mu, &edges).expect("indices in range")
}
