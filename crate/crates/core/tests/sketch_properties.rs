use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softmax_newton::linalg::weighted_gram;
use softmax_newton::problem::{generate_with_reference, ValidationMode};
use softmax_newton::sketch::{certify_sandwich, leverage_scores, subsample};
use softmax_newton::softmax::hessian_decomposed;
use softmax_newton::{SketchConfig, SoftmaxState, SparseDiagonal};

fn random_design(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let dd = DVector::from_fn(n, |_, _| rng.random_range(0.1..5.0));
    (a, dd)
}

#[test]
fn sampled_gram_is_unbiased() {
    let (a, d) = random_design(1, 20, 3);
    let exact = weighted_gram(&a, &d);
    // A small budget so the estimator has visible variance.
    let base = SketchConfig { oversample: 0.01, ..SketchConfig::default() };
    let trials = 1000;
    let mut sum = DMatrix::zeros(3, 3);
    let mut sum_sq = DMatrix::zeros(3, 3);
    for seed in 0..trials {
        let g = subsample(&a, &d, &SketchConfig { seed, ..base }).unwrap().gram(&a);
        sum_sq += g.component_mul(&g);
        sum += g;
    }
    let t = trials as f64;
    let mean = &sum / t;
    for i in 0..3 {
        for j in 0..3 {
            let var = (sum_sq[(i, j)] / t - mean[(i, j)].powi(2)) * t / (t - 1.0);
            let se = (var / t).sqrt();
            let dev = (mean[(i, j)] - exact[(i, j)]).abs();
            assert!(dev <= 3.0 * se, "entry ({i},{j}): |mean - exact| = {dev:e} > 3 se = {:e}", 3.0 * se);
        }
    }
}

#[test]
fn nnz_never_exceeds_budget() {
    let (a, d) = random_design(2, 200, 4);
    for (c, seed) in [(0.001, 1), (0.01, 2), (0.1, 3), (8.0, 4)] {
        let cfg = SketchConfig { oversample: c, seed, ..SketchConfig::default() };
        let dt = subsample(&a, &d, &cfg).unwrap();
        assert!(dt.nnz() <= cfg.budget(200, 4).min(200));
        assert!(dt.entries().iter().all(|&(_, w)| w > 0.0));
    }
}

#[test]
fn solver_diagonal_is_sandwiched() {
    let (inst, x) = generate_with_reference(300, 6, 10.0, 1.0, 0.5, ValidationMode::Sketch, 3).unwrap();
    let s = SoftmaxState::new(&inst, &(x * 2.0)).unwrap();
    let d = hessian_decomposed(&s, &inst).diag_weights();
    let mut failures = 0;
    for seed in 0..20 {
        let cfg = SketchConfig { seed, ..SketchConfig::default() };
        let dt = subsample(inst.a(), &d, &cfg).unwrap();
        failures += usize::from(!certify_sandwich(inst.a(), &d, &dt, 0.1).unwrap().pass);
    }
    assert!(failures <= 1 + 3, "{failures} failures");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn leverage_scores_form_a_projection(seed in any::<u64>(), n in 3usize..40, d in 1usize..4) {
        let (a, dd) = random_design(seed, n, d.min(n));
        let tau = leverage_scores(&a, &dd).unwrap();
        prop_assert!((tau.sum() - d.min(n) as f64).abs() <= 1e-9);
        prop_assert!(tau.iter().all(|&t| (-1e-12..=1.0 + 1e-12).contains(&t)));
    }

    #[test]
    fn sparse_diagonal_text_roundtrip(n in 1usize..50, picks in proptest::collection::btree_map(0usize..50, 1e-300f64..1e300, 0..20)) {
        let entries: Vec<(usize, f64)> = picks.into_iter().filter(|&(i, _)| i < n).collect();
        let s = SparseDiagonal::new(n, entries).unwrap();
        prop_assert_eq!(SparseDiagonal::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn sparse_diagonal_parse_never_panics(text in "\\PC{0,120}") {
        let _ = SparseDiagonal::parse(&text);
    }

    #[test]
    fn subsample_is_deterministic(seed in any::<u64>()) {
        let (a, d) = random_design(7, 25, 3);
        let cfg = SketchConfig { oversample: 0.02, seed, ..SketchConfig::default() };
        prop_assert_eq!(subsample(&a, &d, &cfg).unwrap(), subsample(&a, &d, &cfg).unwrap());
    }
}
