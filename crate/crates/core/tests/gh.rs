mod common;

use common::{delta_oracle, gh_oracle, random_cloud};
use emap_core::geometry::{PointCloud, Seed};
use emap_core::gh::{
    default_generic_tol, discrete_gh, discrete_gh_checked, lemma1_radius_bound, theorem1_witness, GhMode,
};
use proptest::prelude::*;
use rand::Rng;

fn jitter(cloud: &PointCloud, r: f64, seed: Seed) -> PointCloud {
    let mut rng = seed.rng();
    let rows: Vec<Vec<f64>> = cloud
        .points()
        .map(|p| {
            let dir: Vec<f64> = p.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let len = rng.random_range(0.0..r);
            p.iter().zip(&dir).map(|(a, d)| a + d * len / norm).collect()
        })
        .collect();
    PointCloud::from_rows(&rows).unwrap()
}

#[test]
fn brute_force_matches_permutation_scan() {
    for t in 0..60u64 {
        let n = 2 + (t as usize % 6);
        let x = random_cloud(Seed::new(21, t), n, 2);
        let y = random_cloud(Seed::new(22, t), n, 2);
        let d = discrete_gh(&x, &y, GhMode::BruteForce).unwrap();
        assert_eq!(d.distance, gh_oracle(&x, &y), "trial {t}");
    }
}

#[test]
fn radius_bound_matches_permutation_scan() {
    for t in 0..30u64 {
        let x = random_cloud(Seed::new(23, t), 3 + (t as usize % 4), 3);
        let bound = lemma1_radius_bound(&x).unwrap();
        assert_eq!(bound, delta_oracle(&x, default_generic_tol(&x)) / 4.0);
    }
    let line = PointCloud::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
    assert_eq!(lemma1_radius_bound(&line).unwrap(), delta_oracle(&line, 0.0) / 4.0);
}

#[test]
fn bound_scales_with_the_cloud() {
    let x = random_cloud(Seed::new(24, 0), 5, 3);
    let b = lemma1_radius_bound(&x).unwrap();
    for s in [0.5, 2.0, 8.0] {
        let scaled = PointCloud::new(3, x.coords().iter().map(|v| v * s).collect()).unwrap();
        assert_eq!(lemma1_radius_bound(&scaled).unwrap(), b * s);
    }
}

#[test]
fn fast_path_is_exact_below_the_bound() {
    for t in 0..100u64 {
        let n = 4 + (t as usize % 4);
        let x = random_cloud(Seed::new(25, t), n, 3);
        let bound = lemma1_radius_bound(&x).unwrap();
        let y = jitter(&x, bound * 0.99, Seed::new(26, t));
        let brute = discrete_gh(&x, &y, GhMode::BruteForce).unwrap();
        let fast = discrete_gh(&x, &y, GhMode::IdentityFastPath).unwrap();
        assert_eq!(brute.distance, fast.distance, "trial {t}");
        assert!(brute.optimal_permutation.is_identity());
        assert_eq!(discrete_gh_checked(&x, &y).unwrap().distance, brute.distance);
    }
}

#[test]
fn witness_reaches_r() {
    for t in 0..50u64 {
        let x = random_cloud(Seed::new(27, t), 5, 3);
        let r = lemma1_radius_bound(&x).unwrap() * 0.5;
        let z = theorem1_witness(&x, r).unwrap();
        assert!(gh_oracle(&x, &z) >= r);
        for (a, b) in x.points().zip(z.points()) {
            let moved = emap_core::geometry::euclidean(a, b);
            assert!(moved == 0.0 || (moved - r).abs() <= 1e-12 * r.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn relabelling_y_leaves_distance_unchanged(s in any::<u64>(), n in 2usize..7, rot in 0usize..7) {
        let x = random_cloud(Seed::new(s, 0), n, 2);
        let y = random_cloud(Seed::new(s, 1), n, 2);
        let rows: Vec<&[f64]> = (0..n).map(|i| y.point((i + rot) % n)).collect();
        let shuffled = PointCloud::from_rows(&rows).unwrap();
        let a = discrete_gh(&x, &y, GhMode::BruteForce).unwrap().distance;
        let b = discrete_gh(&x, &shuffled, GhMode::BruteForce).unwrap().distance;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn identity_distortion_is_at_most_r(s in any::<u64>(), n in 2usize..8, r in 0.001f64..0.5) {
        let x = random_cloud(Seed::new(s, 0), n, 3);
        let y = jitter(&x, r, Seed::new(s, 1));
        let fast = discrete_gh(&x, &y, GhMode::IdentityFastPath).unwrap().distance;
        prop_assert!(fast <= r + 1e-12);
    }
}
