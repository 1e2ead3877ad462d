//! Flat `key = value` run configuration.
//!
//! Recognized keys (defaults in parentheses):
//!
//! | key              | meaning                                   | default            |
//! |------------------|-------------------------------------------|--------------------|
//! | `dim`            | embedding width                           | 200                |
//! | `maxl`           | tweet length in tokens                    | 99                 |
//! | `filter_sizes`   | comma-separated bank widths               | 1,2,3,4,5,2,3,4    |
//! | `feature_maps`   | filters per bank                          | 50                 |
//! | `dropout_p`      | dropout probability                       | 0.3                |
//! | `fc_units`       | hidden layer width                        | 64                 |
//! | `batch_size`     | examples per update                       | 50                 |
//! | `max_epochs`     | training epochs                           | 20                 |
//! | `shuffle_seed`   | base seed for epoch shuffling             | 0                  |
//! | `lr`             | Nadam learning rate                       | 0.002              |
//! | `beta1`          | first-moment decay                        | 0.9                |
//! | `beta2`          | second-moment decay                       | 0.999              |
//! | `eps`            | denominator guard                         | 1e-8               |
//! | `schedule_decay` | momentum warm-up rate                     | 0.004              |
//! | `k`              | ensemble members                          | 10                 |
//! | `n_candidates`   | candidate pool size                       | 100                |
//! | `threshold`      | max pairwise dev agreement                | 0.95               |
//! | `init_seed`      | init seed for `train`                     | 1                  |
//! | `seed_base`      | first candidate seed for `select`         | 1                  |
//! | `oov_seed`       | seed for unseen-token vectors             | 0                  |
//! | `embeddings`     | embedding table path                      | (none)             |
//! | `train`          | training corpus path                      | (none)             |
//! | `dev`            | dev corpus path                           | (none)             |
//! | `output_dir`     | where models and reports go               | `out`              |

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::optim::NadamConfig;
use crate::train::TrainConfig;

/// Every recognized key, in the order they are echoed.
pub const KEYS: &[&str] = &[
    "dim",
    "maxl",
    "filter_sizes",
    "feature_maps",
    "dropout_p",
    "fc_units",
    "batch_size",
    "max_epochs",
    "shuffle_seed",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "schedule_decay",
    "k",
    "n_candidates",
    "threshold",
    "init_seed",
    "seed_base",
    "oov_seed",
    "embeddings",
    "train",
    "dev",
    "output_dir",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub hyper: Hyperparams,
    pub train: TrainConfig,
    pub nadam: NadamConfig,
    pub k: usize,
    pub n_candidates: usize,
    pub threshold: f64,
    pub init_seed: u64,
    pub seed_base: u64,
    pub oov_seed: u64,
    pub embeddings: Option<PathBuf>,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hyper: Hyperparams::default(),
            train: TrainConfig::default(),
            nadam: NadamConfig::default(),
            k: 10,
            n_candidates: 100,
            threshold: 0.95,
            init_seed: 1,
            seed_base: 1,
            oov_seed: 0,
            embeddings: None,
            train_path: None,
            dev_path: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn path_or_none(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Small network for laptops and CI.
    pub fn desk() -> Self {
        RunConfig {
            hyper: Hyperparams {
                dim: 16,
                maxl: 12,
                filter_sizes: vec![1, 2, 3, 2],
                feature_maps: 6,
                dropout_p: 0.3,
                fc_units: 16,
                ..Hyperparams::default()
            },
            train: TrainConfig {
                batch_size: 10,
                max_epochs: 30,
                shuffle_seed: 0,
            },
            nadam: NadamConfig {
                lr: 0.01,
                ..NadamConfig::default()
            },
            k: 3,
            n_candidates: 6,
            ..RunConfig::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "dim" => self.hyper.dim = parse(key, value)?,
            "maxl" => self.hyper.maxl = parse(key, value)?,
            "filter_sizes" => {
                self.hyper.filter_sizes = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "feature_maps" => self.hyper.feature_maps = parse(key, value)?,
            "dropout_p" => self.hyper.dropout_p = parse(key, value)?,
            "fc_units" => self.hyper.fc_units = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "max_epochs" => self.train.max_epochs = parse(key, value)?,
            "shuffle_seed" => self.train.shuffle_seed = parse(key, value)?,
            "lr" => self.nadam.lr = parse(key, value)?,
            "beta1" => self.nadam.beta1 = parse(key, value)?,
            "beta2" => self.nadam.beta2 = parse(key, value)?,
            "eps" => self.nadam.eps = parse(key, value)?,
            "schedule_decay" => self.nadam.schedule_decay = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "n_candidates" => self.n_candidates = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "init_seed" => self.init_seed = parse(key, value)?,
            "seed_base" => self.seed_base = parse(key, value)?,
            "oov_seed" => self.oov_seed = parse(key, value)?,
            "embeddings" => self.embeddings = path_or_none(value),
            "train" => self.train_path = path_or_none(value),
            "dev" => self.dev_path = path_or_none(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.train.validate()?;
        self.nadam.validate()?;
        if self.k == 0 || self.n_candidates == 0 {
            return Err(Error::Config(
                "k and n_candidates must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        match key {
            "dim" => self.hyper.dim.to_string(),
            "maxl" => self.hyper.maxl.to_string(),
            "filter_sizes" => self
                .hyper
                .filter_sizes
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "feature_maps" => self.hyper.feature_maps.to_string(),
            "dropout_p" => self.hyper.dropout_p.to_string(),
            "fc_units" => self.hyper.fc_units.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "max_epochs" => self.train.max_epochs.to_string(),
            "shuffle_seed" => self.train.shuffle_seed.to_string(),
            "lr" => self.nadam.lr.to_string(),
            "beta1" => self.nadam.beta1.to_string(),
            "beta2" => self.nadam.beta2.to_string(),
            "eps" => self.nadam.eps.to_string(),
            "schedule_decay" => self.nadam.schedule_decay.to_string(),
            "k" => self.k.to_string(),
            "n_candidates" => self.n_candidates.to_string(),
            "threshold" => self.threshold.to_string(),
            "init_seed" => self.init_seed.to_string(),
            "seed_base" => self.seed_base.to_string(),
            "oov_seed" => self.oov_seed.to_string(),
            "embeddings" => path(&self.embeddings),
            "train" => path(&self.train_path),
            "dev" => path(&self.dev_path),
            "output_dir" => self.output_dir.display().to_string(),
            _ => unreachable!("unknown config key {key}"),
        }
    }

    /// All keys with their current values, in [`KEYS`] order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|&k| (k.to_string(), self.value_of(k)))
            .collect()
    }

    /// The configuration as `key = value` text that [`RunConfig::apply_text`]
    /// reads back.
    pub fn to_text(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
