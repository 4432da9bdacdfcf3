//! Deterministic random inputs for the sweeps.
//!
//! Each sample index gets its own ChaCha stream under the master seed, so a
//! sweep gives the same samples whether it runs on one worker or many.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hypgeom::TrianglePacking;
use crate::mesh::{corner_gamma, WeightedTriangulation};

pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `exp` of a uniform draw on `[ln lo, ln hi]`.
pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    (a + (b - a) * rng.gen::<f64>()).exp().clamp(lo, hi)
}

/// Weights uniform on `[0, pi)` per edge, redrawn until every corner `gamma` is nonnegative.
pub fn star_weights(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let w = [0; 3].map(|_| rng.gen_range(0.0..PI));
        if (0..3).all(|t| corner_gamma(w, t) >= 0.0) {
            return w;
        }
    }
}

/// Radii log-uniform on `[lo, hi]` with weights from [`star_weights`].
pub fn random_triangle(rng: &mut impl Rng, lo: f64, hi: f64) -> TrianglePacking {
    let radii = [0; 3].map(|_| log_uniform(rng, lo, hi));
    TrianglePacking::new(radii, star_weights(rng))
}

/// Uniform per-edge weights on `[0, pi)`, redrawn until the whole mesh satisfies the weight condition.
pub fn star_mesh_weights(rng: &mut impl Rng, mesh: &WeightedTriangulation) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..mesh.edges().len())
            .map(|_| rng.gen_range(0.0..PI))
            .collect();
        let ok = mesh.faces().iter().all(|f| {
            let phi = f.edges.map(|e| w[e]);
            (0..3).all(|t| corner_gamma(phi, t) >= 0.0)
        });
        if ok {
            return w;
        }
    }
}
