//! Benchmarks live in `benches/`; run them with `cargo bench -p emap-bench`.

use emap_core::geometry::{PointCloud, Seed, Shape, SyntheticSpec};

/// A noisy circle used as the common benchmark input.
pub fn circle(n_points: usize, seed: u64) -> PointCloud {
    SyntheticSpec {
        shape: Shape::Circle { radius: 1.0 },
        n_points,
        noise: 0.05,
        ambient_dim: 3,
    }
    .generate(Seed::new(seed, 0))
    .expect("valid spec")
}
