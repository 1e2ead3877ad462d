//! Convolutional tweet sentiment classification with a voting ensemble.
//!
//! The pipeline:
//!
//! 1. [`text`] tokenizes tweets (emoticon aware) and replaces links and user
//!    mentions with `url` / `uuser`.
//! 2. [`embeddings`] turns each tweet into a `d x maxl` matrix of pre-trained
//!    word vectors, truncating long tweets and zero-padding short ones.
//! 3. [`model`] runs several convolution banks of different widths over the
//!    matrix, max-pools each feature map, and classifies the concatenation
//!    with a small fully connected network. [`nn`] holds the layer kernels.
//! 4. [`train`] fits one network with mini-batch [`optim`] (Nadam) updates,
//!    keeping the epoch with the best dev macro-average recall; [`persist`]
//!    stores it.
//! 5. [`ensemble`] trains a pool of differently seeded networks, keeps the
//!    best-scoring mutually diverse ones, and combines them by majority vote.
//! 6. [`metrics`] scores predictions.

pub mod config;
pub mod embeddings;
pub mod ensemble;
pub mod error;
pub mod label;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod persist;
pub mod synthetic;
pub mod text;
pub mod train;

pub use config::RunConfig;
pub use embeddings::{build_input_matrix, EmbeddingTable, InputMatrix};
pub use ensemble::{
    agreement, ensemble_predict, generate_candidates, majority_vote, select_members, Candidate,
    CandidateConfig, EnsembleManifest, EnsemblePrediction,
};
pub use error::{Error, Result};
pub use label::Label;
pub use metrics::{confusion, ConfusionMatrix};
pub use model::{init_params, predict_label, Gradients, Hyperparams, Model, NetworkParams};
pub use optim::{NadamConfig, NadamState};
pub use persist::{load_model, save_model};
pub use text::{load_dataset, normalize, tokenize, LabeledExample, Token};
pub use train::{make_epoch_batches, train_network, TrainConfig, TrainHistory};
