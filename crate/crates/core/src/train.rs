//! Mini-batch training with per-epoch shuffling and best-dev-recall
//! checkpointing.

use std::fmt::Write as _;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embeddings::{build_input_matrix, EmbeddingTable};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::metrics::{confusion, ConfusionMatrix};
use crate::model::{predict_label, Gradients, Hyperparams, Model};
use crate::optim::{NadamConfig, NadamState};
use crate::text::{LabeledExample, Token};

/// Examples per gradient work unit. Gradients are summed inside a unit and
/// then across units in order, so results do not depend on thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 50,
            max_epochs: 20,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidHyperparams(
                "batch_size and max_epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example training loss, with dropout active.
    pub train_loss: f64,
    pub dev_avg_recall: f64,
    pub dev_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Index into `records` of the checkpoint that was kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.get(self.best_epoch)
    }

    pub fn report(&self, provenance: &[(String, String)]) -> String {
        let mut s = String::new();
        for (k, v) in provenance {
            let _ = writeln!(s, "# {k}={v}");
        }
        let _ = writeln!(s, "epoch\ttrain_loss\tdev_avg_recall\tdev_accuracy");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{:.6}\t{:.4}\t{:.4}",
                r.epoch, r.train_loss, r.dev_avg_recall, r.dev_accuracy
            );
        }
        if let Some(best) = self.best() {
            let _ = writeln!(s, "best_epoch\t{}", best.epoch);
            let _ = writeln!(s, "best_dev_avg_recall\t{:.4}", best.dev_avg_recall);
        }
        s
    }
}

fn seed_bytes(parts: [u64; 3], tag: &[u8; 8]) -> [u8; 32] {
    let mut seed = [0u8; 32];
    for (i, p) in parts.iter().enumerate() {
        seed[i * 8..(i + 1) * 8].copy_from_slice(&p.to_le_bytes());
    }
    seed[24..].copy_from_slice(tag);
    seed
}

/// Shuffled index batches for one epoch, determined by `(shuffle_seed,
/// epoch)`. The last batch may be short.
pub fn make_epoch_batches(
    n: usize,
    batch_size: usize,
    epoch: usize,
    shuffle_seed: u64,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::from_seed(seed_bytes([shuffle_seed, epoch as u64, 0], b"shuffle\0"));
    order.shuffle(&mut rng);
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

fn dropout_rng(init_seed: u64, epoch: usize, position: usize) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(seed_bytes(
        [init_seed, epoch as u64, position as u64],
        b"dropout\0",
    ))
}

/// Predictions of one model over a set of examples.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub probs: Vec<Array1<f64>>,
    pub predictions: Vec<Label>,
    pub confusion: ConfusionMatrix,
}

/// Inference-mode class probabilities for each token sequence.
pub fn predict_probs(
    model: &Model,
    table: &EmbeddingTable,
    tokens: &[&[Token]],
) -> Result<Vec<Array1<f64>>> {
    tokens
        .par_iter()
        .map(|toks| {
            let input = build_input_matrix(table, toks, model.hyper.maxl)?;
            model.probabilities(&input)
        })
        .collect()
}

pub fn evaluate(
    model: &Model,
    table: &EmbeddingTable,
    examples: &[LabeledExample],
) -> Result<Evaluation> {
    let tokens: Vec<&[Token]> = examples.iter().map(|e| e.tokens.as_slice()).collect();
    let probs = predict_probs(model, table, &tokens)?;
    let predictions: Vec<Label> = probs.iter().map(predict_label).collect();
    let gold: Vec<Label> = examples.iter().map(|e| e.label).collect();
    let confusion = confusion(&gold, &predictions)?;
    Ok(Evaluation {
        probs,
        predictions,
        confusion,
    })
}

/// Mean cross-entropy over `examples` with dropout disabled.
pub fn mean_loss(
    model: &Model,
    table: &EmbeddingTable,
    examples: &[LabeledExample],
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset("no examples to score"));
    }
    let losses: Vec<f64> = examples
        .par_iter()
        .map(|ex| {
            let input = build_input_matrix(table, &ex.tokens, model.hyper.maxl)?;
            let p = model.probabilities(&input)?;
            Ok(crate::nn::cross_entropy_loss(&p, ex.label.index()).0)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / examples.len() as f64)
}

/// Stateful training loop for one network.
pub struct Trainer<'a> {
    model: Model,
    table: &'a EmbeddingTable,
    train: &'a [LabeledExample],
    config: TrainConfig,
    nadam: NadamConfig,
    state: NadamState,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: Model,
        table: &'a EmbeddingTable,
        train: &'a [LabeledExample],
        config: TrainConfig,
        nadam: NadamConfig,
    ) -> Result<Self> {
        config.validate()?;
        nadam.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyDataset("training set"));
        }
        if table.dim() != model.hyper.dim {
            return Err(Error::InvalidHyperparams(format!(
                "embedding dimension {} does not match dim {}",
                table.dim(),
                model.hyper.dim
            )));
        }
        let state = NadamState::for_tensors(&model.params.tensors());
        Ok(Trainer {
            model,
            table,
            train,
            config,
            nadam,
            state,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    /// Epochs completed so far.
    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Summed loss and gradient of the examples at `positions` of this
    /// epoch's order.
    fn chunk_gradient(&self, batch: &[usize], offset: usize) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(&self.model.params);
        let mut loss = 0.0;
        for (i, &idx) in batch.iter().enumerate() {
            let ex = &self.train[idx];
            let input = build_input_matrix(self.table, &ex.tokens, self.model.hyper.maxl)?;
            let mut rng = dropout_rng(self.model.params.init_seed, self.epoch, offset + i);
            let (_, cache) = self.model.forward(&input, true, &mut rng)?;
            let (l, g) = self.model.backward(&cache, ex.label)?;
            loss += l;
            grads.add_assign(&g);
        }
        Ok((loss, grads))
    }

    /// One pass over the training set. Returns the mean training loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let batches = make_epoch_batches(
            self.train.len(),
            self.config.batch_size,
            self.epoch,
            self.config.shuffle_seed,
        );
        let mut total_loss = 0.0;
        let mut offset = 0;
        for batch in &batches {
            let parts: Vec<(f64, Gradients)> = batch
                .par_chunks(GRAD_CHUNK)
                .enumerate()
                .map(|(c, chunk)| self.chunk_gradient(chunk, offset + c * GRAD_CHUNK))
                .collect::<Result<_>>()?;
            let mut parts = parts.into_iter();
            let (mut loss, mut grads) = parts.next().expect("batches are non-empty");
            for (l, g) in parts {
                loss += l;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            total_loss += loss;
            offset += batch.len();

            let grad_tensors = grads.tensors();
            let mut params = self.model.params.tensors_mut();
            self.state.step(&self.nadam, &mut params, &grad_tensors)?;
        }
        self.epoch += 1;
        Ok(total_loss / self.train.len() as f64)
    }
}

/// Result of a full training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest dev macro-average recall.
    pub best: Model,
    pub history: TrainHistory,
}

pub fn train_network(
    hyper: &Hyperparams,
    table: &EmbeddingTable,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    init_seed: u64,
    config: &TrainConfig,
    nadam: &NadamConfig,
) -> Result<TrainOutcome> {
    if dev.is_empty() {
        return Err(Error::EmptyDataset("dev set"));
    }
    for label in Label::ALL {
        if !dev.iter().any(|e| e.label == label) {
            log::warn!("dev set has no '{label}' examples; its recall counts as 0");
        }
    }
    let model = Model::init(hyper.clone(), init_seed)?;
    let mut trainer = Trainer::new(model, table, train, config.clone(), nadam.clone())?;
    let mut history = TrainHistory::default();
    let mut best: Option<Model> = None;
    for epoch in 0..config.max_epochs {
        let train_loss = trainer.run_epoch()?;
        let eval = evaluate(trainer.model(), table, dev)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            dev_avg_recall: eval.confusion.avg_recall(),
            dev_accuracy: eval.confusion.accuracy(),
        };
        log::debug!(
            "seed {init_seed} epoch {epoch}: loss {:.4} dev recall {:.4}",
            record.train_loss,
            record.dev_avg_recall
        );
        let improved = history
            .best()
            .is_none_or(|b| record.dev_avg_recall > b.dev_avg_recall);
        if improved {
            history.best_epoch = history.records.len();
            best = Some(trainer.model().clone());
        }
        history.records.push(record);
    }
    Ok(TrainOutcome {
        best: best.expect("at least one epoch ran"),
        history,
    })
}
