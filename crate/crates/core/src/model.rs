//! The sentence classifier: parallel convolution banks over the embedded
//! tweet, ReLU, global max pooling, concatenation, dropout, a ReLU hidden
//! layer and a softmax output layer.

use ndarray::{s, Array1, Array2, Array3};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embeddings::InputMatrix;
use crate::error::{Error, Result};
use crate::label::{Label, NUM_CLASSES};
use crate::nn::{self, ConvFilterBank, DenseLayer, Dropout};

/// Network shape and regularization settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    /// Embedding width `d`.
    pub dim: usize,
    /// Tweet length `maxl` in tokens; longer tweets are truncated.
    pub maxl: usize,
    /// One convolution bank per entry; repeated widths are distinct banks.
    pub filter_sizes: Vec<usize>,
    /// Filters per bank.
    pub feature_maps: usize,
    pub dropout_p: f64,
    pub fc_units: usize,
    pub classes: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 200,
            maxl: 99,
            filter_sizes: vec![1, 2, 3, 4, 5, 2, 3, 4],
            feature_maps: 50,
            dropout_p: 0.3,
            fc_units: 64,
            classes: NUM_CLASSES,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyperparams(msg));
        if self.dim == 0 || self.maxl == 0 || self.feature_maps == 0 || self.fc_units == 0 {
            return bad("dim, maxl, feature_maps and fc_units must be positive".into());
        }
        if self.filter_sizes.is_empty() {
            return bad("at least one filter size is required".into());
        }
        if let Some(&m) = self.filter_sizes.iter().find(|&&m| m == 0 || m > self.maxl) {
            return bad(format!("filter size {m} outside 1..={}", self.maxl));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        if self.classes != NUM_CLASSES {
            return bad(format!(
                "classes must be {NUM_CLASSES}, got {}",
                self.classes
            ));
        }
        Ok(())
    }

    /// Width of the concatenated pooled vector.
    pub fn pooled_width(&self) -> usize {
        self.filter_sizes.len() * self.feature_maps
    }

    /// Convolution output width for each bank.
    pub fn conv_widths(&self) -> Vec<usize> {
        self.filter_sizes
            .iter()
            .map(|&m| self.maxl - m + 1)
            .collect()
    }
}

/// All learnable tensors of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub banks: Vec<ConvFilterBank>,
    pub fc: DenseLayer,
    pub out: DenseLayer,
    pub init_seed: u64,
}

/// Gradient record with the same layout as [`NetworkParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub banks: Vec<ConvFilterBank>,
    pub fc: DenseLayer,
    pub out: DenseLayer,
}

macro_rules! impl_tensors {
    ($ty:ty) => {
        impl $ty {
            /// Flat views of every tensor in canonical order: each bank's
            /// weights then biases, then the hidden layer, then the output
            /// layer.
            pub fn tensors(&self) -> Vec<&[f64]> {
                let mut v: Vec<&[f64]> = Vec::with_capacity(2 * self.banks.len() + 4);
                for bank in &self.banks {
                    v.push(bank.weights.as_slice().expect("contiguous"));
                    v.push(bank.biases.as_slice().expect("contiguous"));
                }
                for layer in [&self.fc, &self.out] {
                    v.push(layer.weights.as_slice().expect("contiguous"));
                    v.push(layer.biases.as_slice().expect("contiguous"));
                }
                v
            }

            pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
                let mut v: Vec<&mut [f64]> = Vec::with_capacity(2 * self.banks.len() + 4);
                for bank in &mut self.banks {
                    v.push(bank.weights.as_slice_mut().expect("contiguous"));
                    v.push(bank.biases.as_slice_mut().expect("contiguous"));
                }
                for layer in [&mut self.fc, &mut self.out] {
                    v.push(layer.weights.as_slice_mut().expect("contiguous"));
                    v.push(layer.biases.as_slice_mut().expect("contiguous"));
                }
                v
            }

            /// Shapes matching [`Self::tensors`].
            pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
                let mut v = Vec::new();
                for bank in &self.banks {
                    v.push(bank.weights.shape().to_vec());
                    v.push(bank.biases.shape().to_vec());
                }
                for layer in [&self.fc, &self.out] {
                    v.push(layer.weights.shape().to_vec());
                    v.push(layer.biases.shape().to_vec());
                }
                v
            }

            pub fn num_values(&self) -> usize {
                self.tensors().iter().map(|t| t.len()).sum()
            }
        }
    };
}

impl_tensors!(NetworkParams);
impl_tensors!(Gradients);

fn zero_layers(hyper: &Hyperparams) -> (Vec<ConvFilterBank>, DenseLayer, DenseLayer) {
    let banks = hyper
        .filter_sizes
        .iter()
        .map(|&m| ConvFilterBank::zeros(hyper.feature_maps, m, hyper.dim))
        .collect();
    (
        banks,
        DenseLayer::zeros(hyper.pooled_width(), hyper.fc_units),
        DenseLayer::zeros(hyper.fc_units, hyper.classes),
    )
}

impl NetworkParams {
    pub fn zeros(hyper: &Hyperparams) -> Self {
        let (banks, fc, out) = zero_layers(hyper);
        NetworkParams {
            banks,
            fc,
            out,
            init_seed: 0,
        }
    }

    /// Checks that every tensor has the shape `hyper` implies.
    pub fn check_shapes(&self, hyper: &Hyperparams) -> Result<()> {
        let expected = NetworkParams::zeros(hyper).tensor_shapes();
        if self.tensor_shapes() != expected {
            return Err(Error::Shape(
                "parameters do not match hyperparameters".into(),
            ));
        }
        let row_major = self
            .banks
            .iter()
            .all(|b| b.weights.is_standard_layout() && b.biases.is_standard_layout())
            && [&self.fc, &self.out]
                .iter()
                .all(|l| l.weights.is_standard_layout() && l.biases.is_standard_layout());
        if !row_major {
            return Err(Error::Shape(
                "parameter tensors must be in row-major layout".into(),
            ));
        }
        Ok(())
    }
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Gradients {
            banks: params
                .banks
                .iter()
                .map(|b| ConvFilterBank::zeros(b.feature_maps(), b.width(), b.depth()))
                .collect(),
            fc: DenseLayer::zeros(params.fc.in_dim(), params.fc.out_dim()),
            out: DenseLayer::zeros(params.out.in_dim(), params.out.out_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Half-width of the symmetric uniform initialization range.
pub fn uniform_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `(fan_in, fan_out)` for each weight tensor, in initialization order.
/// A bank of `f` filters of width `m` over depth `d` has fan-in `m * d` and
/// fan-out `m * f`.
pub fn weight_fans(hyper: &Hyperparams) -> Vec<(usize, usize)> {
    let mut fans: Vec<(usize, usize)> = hyper
        .filter_sizes
        .iter()
        .map(|&m| (m * hyper.dim, m * hyper.feature_maps))
        .collect();
    fans.push((hyper.pooled_width(), hyper.fc_units));
    fans.push((hyper.fc_units, hyper.classes));
    fans
}

/// Random parameters, fully determined by `seed`. Weights are uniform in
/// `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`; biases start at zero.
pub fn init_params(hyper: &Hyperparams, seed: u64) -> Result<NetworkParams> {
    hyper.validate()?;
    let mut params = NetworkParams::zeros(hyper);
    params.init_seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fans = weight_fans(hyper);

    let mut weights: Vec<&mut [f64]> = params
        .banks
        .iter_mut()
        .map(|b| b.weights.as_slice_mut().expect("contiguous"))
        .collect();
    weights.push(params.fc.weights.as_slice_mut().expect("contiguous"));
    weights.push(params.out.weights.as_slice_mut().expect("contiguous"));

    for (tensor, &(fan_in, fan_out)) in weights.into_iter().zip(&fans) {
        let a = uniform_limit(fan_in, fan_out);
        let dist = Uniform::new_inclusive(-a, a).expect("finite positive range");
        tensor.iter_mut().for_each(|w| *w = dist.sample(&mut rng));
    }
    Ok(params)
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub input: InputMatrix,
    /// Pre-activation convolution output per bank, shape `(f, maxl - m + 1)`.
    pub conv: Vec<Array2<f64>>,
    pub argmax: Vec<Vec<usize>>,
    /// Concatenated pooled features, before dropout.
    pub pooled: Array1<f64>,
    pub mask: Vec<bool>,
    /// Pooled features after dropout.
    pub dropped: Array1<f64>,
    pub hidden_pre: Array1<f64>,
    pub hidden: Array1<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

/// Hyperparameters plus the parameters they describe.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub hyper: Hyperparams,
    pub params: NetworkParams,
}

impl Model {
    pub fn new(hyper: Hyperparams, params: NetworkParams) -> Result<Self> {
        hyper.validate()?;
        params.check_shapes(&hyper)?;
        Ok(Model { hyper, params })
    }

    pub fn init(hyper: Hyperparams, seed: u64) -> Result<Self> {
        let params = init_params(&hyper, seed)?;
        Ok(Model { hyper, params })
    }

    fn dropout(&self) -> Dropout {
        Dropout::new(self.hyper.dropout_p).expect("validated dropout probability")
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &InputMatrix,
        train_mode: bool,
        rng: &mut R,
    ) -> Result<(Array1<f64>, ForwardCache)> {
        if input.dim() != self.hyper.dim || input.maxl() != self.hyper.maxl {
            return Err(Error::Shape(format!(
                "input {}x{}, model expects {}x{}",
                input.dim(),
                input.maxl(),
                self.hyper.dim,
                self.hyper.maxl
            )));
        }
        let f = self.hyper.feature_maps;
        let mut pooled = Array1::zeros(self.hyper.pooled_width());
        let mut conv = Vec::with_capacity(self.params.banks.len());
        let mut argmax = Vec::with_capacity(self.params.banks.len());
        for (i, bank) in self.params.banks.iter().enumerate() {
            let pre = nn::conv_forward(bank, input)?;
            let (values, idx) = nn::global_max_pool(&nn::relu(&pre));
            pooled.slice_mut(s![i * f..(i + 1) * f]).assign(&values);
            conv.push(pre);
            argmax.push(idx);
        }
        let (dropped, mask) = self.dropout().apply(&pooled, train_mode, rng);
        let hidden_pre = nn::dense_forward(&self.params.fc, &dropped)?;
        let hidden = nn::relu(&hidden_pre);
        let logits = nn::dense_forward(&self.params.out, &hidden)?;
        let probs = nn::softmax(&logits);
        let cache = ForwardCache {
            input: input.clone(),
            conv,
            argmax,
            pooled,
            mask,
            dropped,
            hidden_pre,
            hidden,
            logits,
            probs: probs.clone(),
        };
        Ok((probs, cache))
    }

    /// Inference-mode class probabilities.
    pub fn probabilities(&self, input: &InputMatrix) -> Result<Array1<f64>> {
        // The generator is never drawn from at inference.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(input, false, &mut rng)?.0)
    }

    /// Cross-entropy loss and its gradient for every parameter. The input
    /// matrix receives no gradient (embeddings are frozen).
    pub fn backward(&self, cache: &ForwardCache, gold: Label) -> Result<(f64, Gradients)> {
        let f = self.hyper.feature_maps;
        if cache.conv.len() != self.params.banks.len()
            || cache.pooled.len() != self.hyper.pooled_width()
            || cache.mask.len() != cache.pooled.len()
            || cache.hidden.len() != self.params.out.in_dim()
        {
            return Err(Error::Shape(
                "forward cache does not match the model".into(),
            ));
        }
        let (loss, dlogits) = nn::cross_entropy_loss(&cache.probs, gold.index());
        let out = nn::dense_backward(&self.params.out, &cache.hidden, &dlogits)?;
        let dhidden_pre = nn::relu_backward(&cache.hidden_pre, &out.input);
        let fc = nn::dense_backward(&self.params.fc, &cache.dropped, &dhidden_pre)?;
        let dpooled = self.dropout().backward(&cache.mask, &fc.input);

        let mut banks = Vec::with_capacity(self.params.banks.len());
        for (i, bank) in self.params.banks.iter().enumerate() {
            let pre = &cache.conv[i];
            let upstream = dpooled.slice(s![i * f..(i + 1) * f]).to_owned();
            let drelu = nn::pool_backward(&cache.argmax[i], &upstream, pre.ncols());
            let dpre = nn::relu_backward(pre, &drelu);
            let (weights, biases) = nn::conv_param_grads(bank, &cache.input, &dpre)?;
            banks.push(ConvFilterBank { weights, biases });
        }
        let grads = Gradients {
            banks,
            fc: DenseLayer {
                weights: fc.weights,
                biases: fc.biases,
            },
            out: DenseLayer {
                weights: out.weights,
                biases: out.biases,
            },
        };
        Ok((loss, grads))
    }

    pub fn predict(&self, input: &InputMatrix) -> Result<Label> {
        Ok(predict_label(&self.probabilities(input)?))
    }
}

/// Most probable class. Ties go to neutral when it is among the maxima,
/// otherwise to negative over positive.
pub fn predict_label(probs: &Array1<f64>) -> Label {
    let max = probs.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let is_max = |l: Label| probs[l.index()] == max;
    if is_max(Label::Neutral) {
        Label::Neutral
    } else if is_max(Label::Negative) {
        Label::Negative
    } else {
        Label::Positive
    }
}

/// Builds an `(f, m, d)` bank from a closure, handy for tests and tooling.
pub fn bank_from_fn(
    feature_maps: usize,
    width: usize,
    depth: usize,
    mut value: impl FnMut(usize, usize, usize) -> f64,
) -> ConvFilterBank {
    ConvFilterBank {
        weights: Array3::from_shape_fn((feature_maps, width, depth), |(k, a, b)| value(k, a, b)),
        biases: Array1::zeros(feature_maps),
    }
}
