mod common;

use common::{bottleneck_oracle, diagram, kruskal, pairs, random_cloud, rips_oracle};
use emap_core::geometry::{PointCloud, Seed};
use emap_core::tda::{bottleneck_distance, rips_persistence, FiltrationParams};
use proptest::prelude::*;
use rand::Rng;

fn full() -> FiltrationParams {
    FiltrationParams::default()
}

#[test]
fn rips_matches_boundary_reduction_on_random_clouds() {
    for t in 0..100u64 {
        let seed = Seed::new(11, t);
        let n = 3 + (t as usize % 10);
        let dim = 2 + (t as usize % 2);
        let cloud = random_cloud(seed, n, dim);
        let threshold = if t % 3 == 0 { 0.8 } else { f64::INFINITY };
        let params = if threshold.is_finite() {
            full().with_max_radius(threshold)
        } else {
            full()
        };
        let d = rips_persistence(&cloud, &params).unwrap();
        let (h0, h1) = rips_oracle(&cloud, threshold);
        assert_eq!(pairs(&d[0]), h0, "H0 of trial {t}");
        assert_eq!(pairs(&d[1]), h1, "H1 of trial {t}");
    }
}

#[test]
fn square_corners() {
    let cloud = PointCloud::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]).unwrap();
    let d = rips_persistence(&cloud, &full()).unwrap();
    let (h0, h1) = rips_oracle(&cloud, f64::INFINITY);
    assert_eq!(pairs(&d[0]), h0);
    assert_eq!(pairs(&d[1]), h1);
    let s = 2f64.sqrt();
    assert_eq!(h1, vec![(s, 2.0)]);
    assert_eq!(h0.len(), 4);
    assert!(h0[..3].iter().all(|p| p.1 == s));
}

#[test]
fn h0_deaths_are_mst_edges() {
    for t in 0..30u64 {
        let cloud = random_cloud(Seed::new(12, t), 25, 3);
        let d = rips_persistence(&cloud, &full().with_max_dimension(0)).unwrap();
        assert_eq!(d[0].len(), 25);
        assert_eq!(d[0].essential_count(), 1);
        let mut deaths: Vec<f64> = d[0].finite().map(|p| p.death).collect();
        deaths.sort_by(f64::total_cmp);
        assert_eq!(deaths, kruskal(&cloud));
    }
}

fn random_diagram<R: Rng>(rng: &mut R, max_points: usize, essential: usize) -> Vec<(f64, f64)> {
    let n = rng.random_range(0..=max_points);
    let mut v: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            // a coarse grid produces ties between candidate costs
            if rng.random_bool(0.3) {
                let b = rng.random_range(0..4) as f64 * 0.5;
                (b, b + rng.random_range(1..4) as f64 * 0.5)
            } else {
                let b = rng.random_range(0.0..2.0);
                (b, b + rng.random_range(0.01..2.0))
            }
        })
        .collect();
    for _ in 0..essential {
        v.push((rng.random_range(0.0..2.0), f64::INFINITY));
    }
    v
}

#[test]
fn bottleneck_matches_exhaustive_matching() {
    let mut rng = Seed::new(13, 0).rng();
    for t in 0..100 {
        let essential = rng.random_range(0..=1);
        let a = random_diagram(&mut rng, 6, essential);
        let b = random_diagram(&mut rng, 6, essential);
        let fast = bottleneck_distance(&diagram(1, &a), &diagram(1, &b)).unwrap();
        assert_eq!(fast, bottleneck_oracle(&a, &b), "pair {t}: {a:?} vs {b:?}");
    }
}

#[test]
fn bottleneck_is_a_pseudometric() {
    let mut rng = Seed::new(14, 0).rng();
    for _ in 0..100 {
        let d: Vec<_> = (0..3).map(|_| diagram(0, &random_diagram(&mut rng, 6, 0))).collect();
        let ab = bottleneck_distance(&d[0], &d[1]).unwrap();
        assert_eq!(ab, bottleneck_distance(&d[1], &d[0]).unwrap());
        let bc = bottleneck_distance(&d[1], &d[2]).unwrap();
        let ac = bottleneck_distance(&d[0], &d[2]).unwrap();
        assert!(ac <= ab + bc + 1e-9);
        assert_eq!(bottleneck_distance(&d[0], &d[0]).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moving_points_by_r_moves_diagrams_by_at_most_2r(
        n in 2usize..30,
        r in 0.001f64..0.3,
        s in any::<u64>(),
    ) {
        let seed = Seed::new(s, 0);
        let cloud = random_cloud(seed, n, 3);
        let mut rng = seed.derive(1).rng();
        let moved: Vec<Vec<f64>> = cloud
            .points()
            .map(|p| {
                let dir: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                let len = rng.random_range(0.0..=r);
                p.iter().zip(&dir).map(|(a, d)| a + d * len / norm).collect()
            })
            .collect();
        let moved = PointCloud::from_rows(&moved).unwrap();
        let d1 = rips_persistence(&cloud, &full()).unwrap();
        let d2 = rips_persistence(&moved, &full()).unwrap();
        for i in 0..2 {
            prop_assert!(bottleneck_distance(&d1[i], &d2[i]).unwrap() <= 2.0 * r + 1e-9);
        }
    }

    #[test]
    fn h0_has_one_bar_per_point(n in 1usize..40, s in any::<u64>()) {
        let cloud = random_cloud(Seed::new(s, 1), n, 2);
        let d = rips_persistence(&cloud, &full()).unwrap();
        prop_assert_eq!(d[0].len(), n);
        prop_assert!(d[1].pairs.iter().all(|p| p.birth < p.death && p.death.is_finite()));
    }
}
