//! Layer kernels: forward passes and their analytic gradients.
//!
//! All kernels are pure functions of their arguments. Dropout takes the
//! random generator explicitly.

use ndarray::{Array, Array1, Array2, Array3, ArrayView2, Axis, Dimension, ShapeBuilder, Zip};
use rand::Rng;

use crate::embeddings::InputMatrix;
use crate::error::{Error, Result};

/// Guard added inside the log of the cross-entropy loss.
pub const LOG_EPS: f64 = 1e-12;

/// `f` convolution filters, each spanning `m` tokens and the full embedding
/// depth `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvFilterBank {
    /// Shape `(f, m, d)`.
    pub weights: Array3<f64>,
    /// Length `f`.
    pub biases: Array1<f64>,
}

impl ConvFilterBank {
    pub fn zeros(feature_maps: usize, width: usize, depth: usize) -> Self {
        ConvFilterBank {
            weights: Array3::zeros((feature_maps, width, depth)),
            biases: Array1::zeros(feature_maps),
        }
    }

    pub fn feature_maps(&self) -> usize {
        self.weights.dim().0
    }

    pub fn width(&self) -> usize {
        self.weights.dim().1
    }

    pub fn depth(&self) -> usize {
        self.weights.dim().2
    }

    fn flat_weights(&self) -> ArrayView2<'_, f64> {
        let (f, m, d) = self.weights.dim();
        self.weights
            .view()
            .into_shape_with_order((f, m * d))
            .expect("filter weights are contiguous")
    }

    fn check_input(&self, input: &InputMatrix) -> Result<usize> {
        let (_, m, d) = self.weights.dim();
        if self.biases.len() != self.feature_maps() {
            return Err(Error::Shape(format!(
                "{} biases for {} filters",
                self.biases.len(),
                self.feature_maps()
            )));
        }
        if input.dim() != d {
            return Err(Error::Shape(format!(
                "input depth {} does not match filter depth {d}",
                input.dim()
            )));
        }
        if m == 0 || m > input.maxl() {
            return Err(Error::FilterTooWide {
                width: m,
                len: input.maxl(),
            });
        }
        Ok(input.maxl() - m + 1)
    }
}

/// Rows are the sliding windows of `m` consecutive token columns, flattened
/// in (token offset, depth) order: shape `(maxl - m + 1, m * d)`.
fn windows(input: &InputMatrix, width: usize) -> ArrayView2<'_, f64> {
    let d = input.dim();
    let positions = input.maxl() - width + 1;
    ArrayView2::from_shape((positions, width * d).strides((d, 1)), input.token_major())
        .expect("window view stays inside the input")
}

/// Valid convolution along the token axis. Output shape `(f, maxl - m + 1)`.
pub fn conv_forward(bank: &ConvFilterBank, input: &InputMatrix) -> Result<Array2<f64>> {
    bank.check_input(input)?;
    let mut out = bank.flat_weights().dot(&windows(input, bank.width()).t());
    out += &bank.biases.view().insert_axis(Axis(1));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub weights: Array3<f64>,
    pub biases: Array1<f64>,
    /// Shape `(d, maxl)`.
    pub input: Array2<f64>,
}

fn check_upstream(bank: &ConvFilterBank, upstream: &Array2<f64>, positions: usize) -> Result<()> {
    if upstream.dim() != (bank.feature_maps(), positions) {
        return Err(Error::Shape(format!(
            "upstream gradient {:?}, expected {:?}",
            upstream.dim(),
            (bank.feature_maps(), positions)
        )));
    }
    Ok(())
}

/// Gradients of the filter weights and biases only.
pub fn conv_param_grads(
    bank: &ConvFilterBank,
    input: &InputMatrix,
    upstream: &Array2<f64>,
) -> Result<(Array3<f64>, Array1<f64>)> {
    let positions = bank.check_input(input)?;
    check_upstream(bank, upstream, positions)?;
    // The product's memory order depends on the operand shapes.
    let grad_w = upstream
        .dot(&windows(input, bank.width()))
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order(bank.weights.raw_dim())
        .expect("gradient has filter shape");
    Ok((grad_w, upstream.sum_axis(Axis(1))))
}

pub fn conv_backward(
    bank: &ConvFilterBank,
    input: &InputMatrix,
    upstream: &Array2<f64>,
) -> Result<ConvGrads> {
    let (weights, biases) = conv_param_grads(bank, input, upstream)?;
    let d = input.dim();
    let window_grads = upstream.t().dot(&bank.flat_weights());
    let mut grad_input = vec![0.0; d * input.maxl()];
    for (j, row) in window_grads.outer_iter().enumerate() {
        let span = &mut grad_input[j * d..j * d + row.len()];
        for (g, &w) in span.iter_mut().zip(row.iter()) {
            *g += w;
        }
    }
    let input = Array2::from_shape_vec((d, input.maxl()).f(), grad_input)
        .expect("gradient has input shape");
    Ok(ConvGrads {
        weights,
        biases,
        input,
    })
}

pub fn relu<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(|v| v.max(0.0))
}

/// Passes `upstream` where `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward<D: Dimension>(x: &Array<f64, D>, upstream: &Array<f64, D>) -> Array<f64, D> {
    let mut out = upstream.clone();
    Zip::from(&mut out).and(x).for_each(|g, &v| {
        if v <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

/// Row-wise maximum and the smallest index attaining it.
pub fn global_max_pool(rows: &Array2<f64>) -> (Array1<f64>, Vec<usize>) {
    let mut values = Array1::zeros(rows.nrows());
    let mut argmax = vec![0; rows.nrows()];
    for (k, row) in rows.outer_iter().enumerate() {
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        values[k] = row[best];
        argmax[k] = best;
    }
    (values, argmax)
}

/// Routes `upstream[k]` to column `argmax[k]` of a `(f, width)` matrix.
pub fn pool_backward(argmax: &[usize], upstream: &Array1<f64>, width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((argmax.len(), width));
    for (k, (&j, &g)) in argmax.iter().zip(upstream.iter()).enumerate() {
        out[[k, j]] = g;
    }
    out
}

/// Inverted dropout with drop probability `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidHyperparams(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        Ok(Dropout { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// In training mode each unit is zeroed with probability `p` and the
    /// survivors are scaled by `1 / (1 - p)`. At inference the input is
    /// returned unchanged with an all-true mask.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        x: &Array1<f64>,
        train_mode: bool,
        rng: &mut R,
    ) -> (Array1<f64>, Vec<bool>) {
        if !train_mode {
            return (x.clone(), vec![true; x.len()]);
        }
        let scale = 1.0 / (1.0 - self.p);
        let mask: Vec<bool> = (0..x.len())
            .map(|_| rng.random::<f64>() >= self.p)
            .collect();
        let out = x
            .iter()
            .zip(&mask)
            .map(|(&v, &keep)| if keep { v * scale } else { 0.0 })
            .collect();
        (out, mask)
    }

    pub fn backward(&self, mask: &[bool], upstream: &Array1<f64>) -> Array1<f64> {
        let scale = 1.0 / (1.0 - self.p);
        upstream
            .iter()
            .zip(mask)
            .map(|(&g, &keep)| if keep { g * scale } else { 0.0 })
            .collect()
    }
}

/// Fully connected layer computing `weights . x + biases`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// Shape `(out_dim, in_dim)`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub input: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            weights: Array2::zeros((out_dim, in_dim)),
            biases: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn check(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.in_dim() || self.biases.len() != self.out_dim() {
            return Err(Error::Shape(format!(
                "dense layer {}x{} applied to input of length {}",
                self.out_dim(),
                self.in_dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

pub fn dense_forward(layer: &DenseLayer, x: &Array1<f64>) -> Result<Array1<f64>> {
    layer.check(x)?;
    Ok(layer.weights.dot(x) + &layer.biases)
}

pub fn dense_backward(
    layer: &DenseLayer,
    x: &Array1<f64>,
    upstream: &Array1<f64>,
) -> Result<DenseGrads> {
    layer.check(x)?;
    if upstream.len() != layer.out_dim() {
        return Err(Error::Shape(format!(
            "upstream gradient of length {}, expected {}",
            upstream.len(),
            layer.out_dim()
        )));
    }
    let weights = Array2::from_shape_fn((upstream.len(), x.len()), |(i, j)| upstream[i] * x[j]);
    Ok(DenseGrads {
        weights,
        biases: upstream.clone(),
        input: layer.weights.t().dot(upstream),
    })
}

/// Numerically stable softmax.
pub fn softmax(z: &Array1<f64>) -> Array1<f64> {
    let max = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = z.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Cross-entropy of `probs` against class `gold`, and its gradient with
/// respect to the pre-softmax logits.
pub fn cross_entropy_loss(probs: &Array1<f64>, gold: usize) -> (f64, Array1<f64>) {
    let loss = -(probs[gold] + LOG_EPS).ln();
    let mut grad = probs.clone();
    grad[gold] -= 1.0;
    (loss, grad)
}
