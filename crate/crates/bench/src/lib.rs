//! Shared inputs for the benchmarks.

use afb_core::mesh::MeshSample;
use afb_core::synthetic::{generate, CaseSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform points in the unit square.
pub fn cloud(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.gen(), rng.gen()]).collect()
}

/// Potential-flow cylinder with `m` wall segments (about `21 m` nodes).
pub fn cylinder(m: usize) -> MeshSample {
    let mut spec = CaseSpec::cylinder(1.0, 1.0, 0.5);
    spec.surface_segments = m;
    spec.volume_nodes = 21 * m;
    generate(&spec).expect("valid cylinder spec")
}
