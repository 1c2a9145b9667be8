use cleansel_core::linalg::{softmax_row, DenseMatrix};
use cleansel_core::loss::{CrossEntropy, Discrepancy, Route};
use cleansel_core::nn::{self, ModelParams, ModelShape, Objective, OptimState, ParamGroups, Term};
use cleansel_core::rng::from_seed;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn model(seed: u64) -> ModelParams {
    let shape = ModelShape {
        input_dim: 5,
        hidden: vec![9, 7],
        feature_dim: 6,
        class_count: 4,
    };
    ModelParams::init(&shape, &mut from_seed(seed), &mut from_seed(seed + 1)).unwrap()
}

fn batch(rows: usize, seed: u64) -> DenseMatrix {
    let mut rng = from_seed(seed);
    let data = (0..rows * 5).map(|_| StandardNormal.sample(&mut rng)).collect();
    DenseMatrix::new(rows, 5, data).unwrap()
}

/// Straight-line forward pass with explicit index loops.
fn oracle_probs(m: &ModelParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut h = x.to_vec();
    let depth = m.extractor.len();
    for (li, layer) in m.extractor.iter().enumerate() {
        let mut next = vec![0.0; layer.bias.len()];
        for (k, out) in next.iter_mut().enumerate() {
            let mut acc = layer.bias[k];
            for (j, &hj) in h.iter().enumerate() {
                acc += layer.weight.get(k, j) * hj;
            }
            *out = if li + 1 < depth && acc < 0.0 { 0.0 } else { acc };
        }
        h = next;
    }
    let head = |l: &cleansel_core::nn::Linear| {
        let logits: Vec<f64> = (0..l.bias.len())
            .map(|c| l.bias[c] + (0..h.len()).map(|j| l.weight.get(c, j) * h[j]).sum::<f64>())
            .collect();
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    (head(&m.head1), head(&m.head2))
}

#[test]
fn forward_matches_independent_implementation() {
    for seed in 0..5 {
        let m = model(seed);
        let x = batch(12, seed + 40);
        let f = m.forward(&x).unwrap();
        for i in 0..x.rows() {
            let (p1, p2) = oracle_probs(&m, x.row(i));
            for c in 0..4 {
                assert!((f.probs1.get(i, c) - p1[c]).abs() < 1e-10);
                assert!((f.probs2.get(i, c) - p2[c]).abs() < 1e-10);
            }
            assert!((f.probs1.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

fn loss_terms(x: &DenseMatrix) -> (CrossEntropy, Discrepancy) {
    let labels: Vec<usize> = (0..x.rows()).map(|i| i % 4).collect();
    let d = Discrepancy {
        weights: vec![0.25; x.rows()],
        scale: 0.2,
        route: Route::ExtractorOnly,
    };
    (CrossEntropy::from_labels(&labels, 4), d)
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let mut m = model(3);
    let before = m.clone();
    let x = batch(8, 4);
    let (ce, d) = loss_terms(&x);
    let objs: [&dyn Objective; 2] = [&ce, &d];
    let mut opt = OptimState::new(&m, 0.0, 0.9, 5e-4).unwrap();
    nn::backward_step(&mut m, &mut opt, &[Term { batch: &x, objectives: &objs }], ParamGroups::ALL).unwrap();
    assert_eq!(m, before);
}

#[test]
fn frozen_groups_are_bit_identical() {
    let x = batch(8, 5);
    let (ce, d) = loss_terms(&x);
    let objs: [&dyn Objective; 2] = [&ce, &d];
    for groups in [ParamGroups::HEADS_ONLY, ParamGroups::EXTRACTOR_ONLY] {
        let mut m = model(6);
        let before = m.clone();
        let mut opt = OptimState::new(&m, 0.05, 0.9, 5e-4).unwrap();
        for _ in 0..3 {
            nn::backward_step(&mut m, &mut opt, &[Term { batch: &x, objectives: &objs }], groups).unwrap();
        }
        let zero = before.zeros_like();
        if groups.heads {
            assert_eq!(m.extractor, before.extractor);
            assert_eq!(opt.velocity.extractor, zero.extractor);
            assert_ne!(m.head1, before.head1);
        } else {
            assert_eq!((&m.head1, &m.head2), (&before.head1, &before.head2));
            assert_eq!(opt.velocity.head1, zero.head1);
            assert_ne!(m.extractor, before.extractor);
        }
    }
}

#[test]
fn training_steps_are_deterministic() {
    let run = || {
        let mut m = model(9);
        let mut opt = OptimState::new(&m, 0.05, 0.9, 5e-4).unwrap();
        for step in 0..10 {
            let x = batch(16, 100 + step);
            let (ce, d) = loss_terms(&x);
            let objs: [&dyn Objective; 2] = [&ce, &d];
            nn::backward_step(&mut m, &mut opt, &[Term { batch: &x, objectives: &objs }], ParamGroups::ALL).unwrap();
        }
        (m, opt)
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_loss_names_the_term() {
    let m = model(2);
    let x = batch(2, 1);
    let (mut ce, _) = loss_terms(&x);
    ce.scale = f64::INFINITY;
    let objs: [&dyn Objective; 1] = [&ce];
    match nn::gradient(&m, &[Term { batch: &x, objectives: &objs }]) {
        Err(cleansel_core::Error::NonFinite { term }) => assert_eq!(term, "cross-entropy"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("expected a non-finite error"),
    }
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(z in prop::collection::vec(-50.0f64..50.0, 2..8), c in -100.0f64..100.0) {
        let a = softmax_row(&z);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let b = softmax_row(&shifted);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
