//! Layer forward passes against straight-line reference loops.

mod common;

use common::*;
use convsent::embeddings::InputMatrix;
use convsent::model::Hyperparams;
use convsent::nn::{self, ConvFilterBank, DenseLayer};
use ndarray::{array, Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

#[test]
fn conv_forward_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let d = rng.random_range(1..=5);
        let maxl = rng.random_range(1..=9);
        let m = rng.random_range(1..=maxl);
        let f = rng.random_range(1..=4);
        let bank = ConvFilterBank {
            weights: Array3::from_shape_fn((f, m, d), |_| rng.random_range(-1.0..=1.0)),
            biases: Array1::from_shape_fn(f, |_| rng.random_range(-1.0..=1.0)),
        };
        let x = Array2::from_shape_fn((d, maxl), |_| rng.random_range(-1.0..=1.0));
        let out = nn::conv_forward(&bank, &InputMatrix::new(x.clone(), maxl).unwrap()).unwrap();
        let expected = conv_oracle(&bank.weights, &bank.biases, &x);
        assert_eq!(out.dim(), (f, maxl - m + 1));
        for k in 0..f {
            for j in 0..maxl - m + 1 {
                assert!((out[[k, j]] - expected[k][j]).abs() < TOL);
            }
        }
    }
}

#[test]
fn conv_small_worked_examples() {
    // d = 1, inputs [1, 2, 3], filter width 2 with weights [1, 1].
    let bank = ConvFilterBank {
        weights: Array3::from_shape_vec((1, 2, 1), vec![1.0, 1.0]).unwrap(),
        biases: array![0.0],
    };
    let input = InputMatrix::new(array![[1.0, 2.0, 3.0]], 3).unwrap();
    assert_eq!(nn::conv_forward(&bank, &input).unwrap(), array![[3.0, 5.0]]);

    // Width equal to the input length leaves one position.
    let full = ConvFilterBank {
        weights: Array3::from_shape_vec((1, 3, 1), vec![1.0, -1.0, 2.0]).unwrap(),
        biases: array![0.5],
    };
    assert_eq!(nn::conv_forward(&full, &input).unwrap(), array![[5.5]]);

    // Too wide a filter is an error.
    let wide = ConvFilterBank {
        weights: Array3::zeros((1, 4, 1)),
        biases: array![0.0],
    };
    assert!(nn::conv_forward(&wide, &input).is_err());
}

#[test]
fn dense_forward_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..1000 {
        let n_in = rng.random_range(1..=12);
        let n_out = rng.random_range(1..=8);
        let layer = DenseLayer {
            weights: Array2::from_shape_fn((n_out, n_in), |_| rng.random_range(-1.0..=1.0)),
            biases: Array1::from_shape_fn(n_out, |_| rng.random_range(-1.0..=1.0)),
        };
        let x = Array1::from_shape_fn(n_in, |_| rng.random_range(-1.0..=1.0));
        let out = nn::dense_forward(&layer, &x).unwrap();
        let expected = dense_oracle(&layer.weights, &layer.biases, x.as_slice().unwrap());
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < TOL);
        }
    }
}

#[test]
fn softmax_and_loss_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..1000 {
        let n = rng.random_range(2..=6);
        let scale = [1.0, 10.0, 100.0][rng.random_range(0..3)];
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        let p = nn::softmax(&Array1::from(z.clone()));
        let expected = softmax_oracle(&z);
        for (a, b) in p.iter().zip(&expected) {
            assert!((a - b).abs() < TOL);
        }
        let gold = rng.random_range(0..n);
        let (loss, grad) = nn::cross_entropy_loss(&p, gold);
        let expected_loss = loss_oracle(&expected, gold);
        assert!((loss - expected_loss).abs() < TOL * expected_loss.abs().max(1.0));
        for i in 0..n {
            let onehot = if i == gold { 1.0 } else { 0.0 };
            assert!((grad[i] - (expected[i] - onehot)).abs() < TOL);
        }
    }
}

#[test]
fn softmax_saturates_without_overflow() {
    let p = nn::softmax(&array![1000.0, 0.0, -1000.0]);
    assert!(p.iter().all(|v| v.is_finite()));
    assert!((p[0] - 1.0).abs() < 1e-15);
    let (loss, _) = nn::cross_entropy_loss(&p, 2);
    assert!(loss.is_finite());
    assert!((loss + LOG_EPS.ln()).abs() < 1e-9);
}

#[test]
fn network_forward_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..200 {
        let maxl = rng.random_range(3..=8);
        let hyper = Hyperparams {
            dim: rng.random_range(1..=4),
            maxl,
            filter_sizes: (0..rng.random_range(1..=4))
                .map(|_| rng.random_range(1..=maxl))
                .collect(),
            feature_maps: rng.random_range(1..=4),
            dropout_p: 0.3,
            fc_units: rng.random_range(1..=6),
            classes: 3,
        };
        let model = random_model(&hyper, &mut rng);
        let input = random_input(hyper.dim, hyper.maxl, &mut rng);
        let probs = model.probabilities(&input).unwrap();
        let expected = network_oracle(&model, input.values());
        for (a, b) in probs.iter().zip(&expected) {
            assert!((a - b).abs() < TOL);
        }
    }
}
