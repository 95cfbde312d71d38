use emap_core::explain::{baseline_perturbations, infidelity_score, lime_explain, Explanation, KernelSpec};
use emap_core::geometry::Seed;
use emap_core::models::{LinearModel, SubprocessModel, DEFAULT_TIMEOUT};
use emap_core::perturb::{PerturbationKind, PerturbationScheme};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn linear(w: &[f64]) -> LinearModel {
    LinearModel::new(DMatrix::from_column_slice(w.len(), 1, w), vec![0.0]).unwrap()
}

fn zero_expl(n: usize) -> Explanation {
    Explanation {
        feature_weights: vec![0.0; n],
        intercept: 0.0,
        kernel_width: 1.0,
        scheme: "none".into(),
        target_class: 0,
    }
}

#[test]
fn infidelity_of_a_zero_explanation_is_the_gaussian_moment() {
    let w = [1.5, -0.5, 2.0, 0.0, -1.0];
    let m = linear(&w);
    let r = 0.4;
    let closed = r * r / w.len() as f64 * w.iter().map(|v| v * v).sum::<f64>();
    for s in 0..5 {
        let inf = infidelity_score(
            &m,
            &[0.1, 0.2, 0.3, 0.4, 0.5],
            &zero_expl(5),
            r,
            10_000,
            Seed::new(61, s),
        )
        .unwrap();
        assert!(
            (inf.mean - closed).abs() < 3.0 * inf.std_error,
            "{} vs {closed} (se {})",
            inf.mean,
            inf.std_error
        );
    }
}

#[test]
fn infidelity_error_shrinks_with_the_square_root_of_draws() {
    let m = linear(&[1.0, 2.0, -1.0]);
    let x0 = [0.0; 3];
    let avg = |n: usize| {
        (0..20)
            .map(|s| {
                infidelity_score(&m, &x0, &zero_expl(3), 0.3, n, Seed::new(62, s))
                    .unwrap()
                    .std_error
            })
            .sum::<f64>()
            / 20.0
    };
    let ratio = avg(100) / avg(10_000);
    assert!((7.0..13.0).contains(&ratio), "{ratio}");
}

#[test]
fn explains_an_external_linear_model() {
    let script = r#"
import sys, json
w = [2.0, -1.0, 0.5, 0.0]
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "probs": [[sum(a * b for a, b in zip(w, p))] for p in req["points"]]}))
"#;
    let cmd: Vec<String> = ["python3", "-u", "-c", script].iter().map(|s| s.to_string()).collect();
    let m = SubprocessModel::spawn(&cmd, Some(4), DEFAULT_TIMEOUT).unwrap();
    let x0 = [0.3, -0.2, 0.9, 1.1];
    let scheme = PerturbationScheme::new(PerturbationKind::Gaussian, 0.5).unwrap();
    let perts = baseline_perturbations(&x0, &scheme, 200, Seed::new(63, 0)).unwrap();
    let e = lime_explain(&m, &x0, &perts, &KernelSpec::uniform(), 0.0, Some(0)).unwrap();
    for (g, w) in e.feature_weights.iter().zip([2.0, -1.0, 0.5, 0.0]) {
        assert!((g - w).abs() < 1e-6, "{g} vs {w}");
    }
}

proptest! {
    #[test]
    fn narrower_kernels_favour_the_nearest_point(
        near in 0.0f64..1.0,
        gap in 0.0f64..2.0,
        s1 in 0.05f64..5.0,
        grow in 1.0f64..10.0,
    ) {
        let d = [near, near + gap];
        let ratio = |s: f64| {
            let (w, _) = KernelSpec::exponential_ambient(Some(s)).weights(&d).unwrap();
            w[1] / w[0]
        };
        prop_assert!(ratio(s1) <= ratio(s1 * grow));
    }
}
