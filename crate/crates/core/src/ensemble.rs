//! Ensemble construction and voting.
//!
//! A pool of candidate networks, identical except for their initialization
//! seed, is trained and scored on the dev set. Members are picked greedily by
//! dev macro-average recall, skipping any candidate whose dev predictions
//! agree too often with an already accepted member. At prediction time each
//! member votes and the plurality label wins.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{build_input_matrix, EmbeddingTable};
use crate::error::{Error, Result};
use crate::label::{class_order_string, Label, NUM_CLASSES};
use crate::model::{predict_label, Hyperparams, Model};
use crate::optim::NadamConfig;
use crate::persist;
use crate::text::{LabeledExample, Token};
use crate::train::{evaluate, train_network, TrainConfig};

pub const MANIFEST_VERSION: u32 = 1;

/// A trained network considered for membership.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub model_path: PathBuf,
    pub init_seed: u64,
    pub dev_recall: f64,
    pub dev_predictions: Vec<Label>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub model_path: PathBuf,
    pub init_seed: u64,
    pub dev_recall: f64,
    /// Highest agreement with any member accepted before this one (0 for the
    /// first member).
    pub max_prior_agreement: f64,
}

/// The selected members plus how they were chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub version: u32,
    pub k: usize,
    pub threshold: f64,
    pub class_order: String,
    /// Set when `k` is even, where plurality ties are more likely.
    pub even_k: bool,
    pub members: Vec<MemberRecord>,
    /// Settings used to build the ensemble, for provenance.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

/// Fraction of positions where `a` and `b` carry the same label.
pub fn agreement(a: &[Label], b: &[Label]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "label sequences of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyDataset("agreement of empty label sequences"));
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

/// Canonical candidate order: dev recall descending, then init seed
/// ascending.
pub fn rank_candidates(candidates: &mut [Candidate]) {
    candidates.sort_by(|a, b| {
        b.dev_recall
            .total_cmp(&a.dev_recall)
            .then(a.init_seed.cmp(&b.init_seed))
    });
}

/// Greedy diversity-constrained selection of `k` members.
pub fn select_members(
    candidates: &[Candidate],
    k: usize,
    threshold: f64,
) -> Result<EnsembleManifest> {
    if k == 0 {
        return Err(Error::InvalidHyperparams(
            "ensemble size k must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidHyperparams(format!(
            "agreement threshold {threshold} outside [0, 1]"
        )));
    }
    let mut ranked = candidates.to_vec();
    rank_candidates(&mut ranked);

    let mut accepted: Vec<(&Candidate, f64)> = Vec::new();
    for cand in &ranked {
        let mut max_agreement: f64 = 0.0;
        let mut diverse = true;
        for (member, _) in &accepted {
            let a = agreement(&cand.dev_predictions, &member.dev_predictions)?;
            max_agreement = max_agreement.max(a);
            if a > threshold {
                diverse = false;
                break;
            }
        }
        if diverse {
            accepted.push((cand, max_agreement));
        }
    }
    if accepted.len() < k {
        return Err(Error::InsufficientCandidates {
            wanted: k,
            selectable: accepted.len(),
        });
    }
    accepted.truncate(k);
    Ok(EnsembleManifest {
        version: MANIFEST_VERSION,
        k,
        threshold,
        class_order: class_order_string(),
        even_k: k.is_multiple_of(2),
        members: accepted
            .into_iter()
            .map(|(c, a)| MemberRecord {
                model_path: c.model_path.clone(),
                init_seed: c.init_seed,
                dev_recall: c.dev_recall,
                max_prior_agreement: a,
            })
            .collect(),
        config: BTreeMap::new(),
    })
}

/// Vote counts per class.
pub fn tally(labels: &[Label]) -> [u32; NUM_CLASSES] {
    let mut votes = [0; NUM_CLASSES];
    for l in labels {
        votes[l.index()] += 1;
    }
    votes
}

/// Plurality vote. Ties on the vote count go to the tied label with the
/// largest summed probability over all members, then to the first label in
/// negative, neutral, positive order.
pub fn majority_vote(labels: &[Label], probs: &[Array1<f64>]) -> Label {
    let votes = tally(labels);
    let top = *votes.iter().max().expect("three classes");
    let tied: Vec<Label> = Label::ALL
        .into_iter()
        .filter(|l| votes[l.index()] == top)
        .collect();
    if tied.len() == 1 {
        return tied[0];
    }
    // Sum in sorted order so the result is independent of member order.
    let mass = |l: Label| {
        let mut values: Vec<f64> = probs.iter().map(|p| p[l.index()]).collect();
        values.sort_by(f64::total_cmp);
        values.iter().sum::<f64>()
    };
    let mut best = tied[0];
    let mut best_mass = mass(best);
    for &l in &tied[1..] {
        let m = mass(l);
        if m > best_mass {
            best = l;
            best_mass = m;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnsemblePrediction {
    pub label: Label,
    pub votes: [u32; NUM_CLASSES],
}

/// Checks that all members agree on the input shape and embedding width.
pub fn check_members(members: &[Model], table: &EmbeddingTable) -> Result<()> {
    let first = members
        .first()
        .ok_or_else(|| Error::MemberMismatch("ensemble has no members".into()))?;
    for (i, m) in members.iter().enumerate() {
        if m.hyper.dim != first.hyper.dim || m.hyper.maxl != first.hyper.maxl {
            return Err(Error::MemberMismatch(format!(
                "member {i} has dim={} maxl={}, member 0 has dim={} maxl={}",
                m.hyper.dim, m.hyper.maxl, first.hyper.dim, first.hyper.maxl
            )));
        }
    }
    if table.dim() != first.hyper.dim {
        return Err(Error::MemberMismatch(format!(
            "embedding dimension {} does not match member dim {}",
            table.dim(),
            first.hyper.dim
        )));
    }
    Ok(())
}

/// Votes every member on every tweet. A tweet with no tokens gets
/// `neutral` with zero votes.
pub fn ensemble_predict(
    members: &[Model],
    table: &EmbeddingTable,
    tweets: &[&[Token]],
) -> Result<Vec<EnsemblePrediction>> {
    check_members(members, table)?;
    let maxl = members[0].hyper.maxl;
    tweets
        .par_iter()
        .map(|tokens| {
            if tokens.is_empty() {
                return Ok(EnsemblePrediction {
                    label: Label::Neutral,
                    votes: [0; NUM_CLASSES],
                });
            }
            let input = build_input_matrix(table, tokens, maxl)?;
            let probs = members
                .iter()
                .map(|m| m.probabilities(&input))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<Label> = probs.iter().map(predict_label).collect();
            Ok(EnsemblePrediction {
                label: majority_vote(&labels, &probs),
                votes: tally(&labels),
            })
        })
        .collect()
}

impl EnsembleManifest {
    /// Serializes with member paths made relative to `path`'s directory
    /// when they live under it.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let mut out = self.clone();
        for m in &mut out.members {
            if let Ok(rel) = m.model_path.strip_prefix(base) {
                m.model_path = rel.to_path_buf();
            }
        }
        let text = toml::to_string(&out).map_err(|e| Error::Manifest(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Parses a manifest; relative member paths resolve against its
    /// directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: EnsembleManifest =
            toml::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        if manifest.class_order != class_order_string() {
            return Err(Error::MemberMismatch(format!(
                "class order '{}' differs from '{}'",
                manifest.class_order,
                class_order_string()
            )));
        }
        if manifest.members.is_empty() || manifest.members.len() != manifest.k {
            return Err(Error::Manifest(format!(
                "k = {} but {} members listed",
                manifest.k,
                manifest.members.len()
            )));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        for m in &mut manifest.members {
            if m.model_path.is_relative() {
                m.model_path = base.join(&m.model_path);
            }
        }
        Ok(manifest)
    }

    /// Loads every member model.
    pub fn load_members(&self) -> Result<Vec<Model>> {
        self.members
            .iter()
            .map(|m| persist::load_model(&m.model_path))
            .collect()
    }
}

/// Everything needed to train a pool of candidates.
#[derive(Clone, Debug)]
pub struct CandidateConfig {
    pub hyper: Hyperparams,
    pub train: TrainConfig,
    pub nadam: NadamConfig,
    pub n_candidates: usize,
    pub seed_base: u64,
    /// Directory receiving one model file per candidate.
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
    /// Written into each model file header.
    pub provenance: Vec<(String, String)>,
}

pub fn candidate_file_name(init_seed: u64) -> String {
    format!("candidate-{init_seed}.svt")
}

fn train_candidate(
    cfg: &CandidateConfig,
    table: &EmbeddingTable,
    train: &[LabeledExample],
    dev: &[LabeledExample],
    index: usize,
) -> Result<Candidate> {
    let init_seed = cfg.seed_base.wrapping_add(index as u64);
    let train_cfg = TrainConfig {
        shuffle_seed: cfg.train.shuffle_seed.wrapping_add(init_seed),
        ..cfg.train.clone()
    };
    let outcome = train_network(
        &cfg.hyper, table, train, dev, init_seed, &train_cfg, &cfg.nadam,
    )?;
    let model_path = cfg.out_dir.join(candidate_file_name(init_seed));
    persist::save_model(&outcome.best, &model_path, &cfg.provenance)?;
    // Score the stored (32-bit) parameters so the recorded recall matches
    // what the saved file produces.
    let stored = persist::load_model(&model_path)?;
    let eval = evaluate(&stored, table, dev)?;
    let candidate = Candidate {
        model_path,
        init_seed,
        dev_recall: eval.confusion.avg_recall(),
        dev_predictions: eval.predictions,
    };
    log::info!(
        "candidate {index} (seed {init_seed}): dev avg recall {:.4}, best epoch {}",
        candidate.dev_recall,
        outcome.history.best_epoch
    );
    Ok(candidate)
}

/// Trains `n_candidates` networks with seeds `seed_base..seed_base + n`,
/// saves each one, and returns them ranked by dev recall.
pub fn generate_candidates(
    cfg: &CandidateConfig,
    table: &EmbeddingTable,
    train: &[LabeledExample],
    dev: &[LabeledExample],
) -> Result<Vec<Candidate>> {
    if cfg.n_candidates == 0 {
        return Err(Error::InvalidHyperparams(
            "n_candidates must be at least 1".into(),
        ));
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let run = || -> Result<Vec<Candidate>> {
        (0..cfg.n_candidates)
            .into_par_iter()
            .map(|i| {
                train_candidate(cfg, table, train, dev, i).map_err(|e| Error::Candidate {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let mut candidates = if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run)?
    } else {
        run()?
    };
    rank_candidates(&mut candidates);
    Ok(candidates)
}
