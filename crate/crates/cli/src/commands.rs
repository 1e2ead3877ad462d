//! Implementations of the subcommands.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use convsent::config::KEYS;
use convsent::ensemble::{candidate_file_name, generate_candidates, select_members};
use convsent::text::{load_dataset, load_gold_labels, load_unlabeled, Token};
use convsent::{
    confusion, ensemble_predict, save_model, train_network, CandidateConfig, EmbeddingTable,
    EnsembleManifest, Error, Label, RunConfig,
};

pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) if e.is_data_error() => 2,
            CliError::Lib(
                Error::Config(_) | Error::InvalidHyperparams(_) | Error::FilterTooWide { .. },
            ) => 1,
            CliError::Lib(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Where the run configuration comes from, beyond the starting point each
/// command picks.
pub struct Settings {
    pub config_file: Option<PathBuf>,
    pub overrides: Vec<(&'static str, String)>,
}

impl Settings {
    /// Applies the config file and then the command-line overrides on top of
    /// `base`.
    fn resolve(&self, mut base: RunConfig) -> Result<RunConfig> {
        if let Some(path) = &self.config_file {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            base.apply_text(&text)?;
        }
        for (key, value) in &self.overrides {
            base.set(key, value)?;
        }
        base.validate()?;
        Ok(base)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e).into())
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    value.as_ref().ok_or_else(|| {
        CliError::Usage(format!(
            "no '{key}' path given (set it in the config file or pass --{key})"
        ))
    })
}

/// Every setting, as written into artifact headers.
fn provenance(config: &RunConfig) -> Vec<(String, String)> {
    config
        .pairs()
        .into_iter()
        .map(|(k, v)| (format!("config.{k}"), v))
        .collect()
}

fn header(config: &RunConfig) -> String {
    config
        .pairs()
        .into_iter()
        .map(|(k, v)| format!("# {k}={v}\n"))
        .collect()
}

fn load_table(config: &RunConfig) -> Result<EmbeddingTable> {
    let path = required(&config.embeddings, "embeddings")?;
    Ok(EmbeddingTable::load(path, config.oov_seed)?)
}

fn create_output_dir(config: &RunConfig) -> Result<()> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e).into())
}

pub fn prep(settings: &Settings, dataset: Option<PathBuf>, report: Option<PathBuf>) -> Result<()> {
    let config = settings.resolve(RunConfig::default())?;
    let path = match dataset {
        Some(p) => p,
        None => required(&config.train_path, "train")?.clone(),
    };
    let data = load_dataset(&path)?;

    let mut per_label = [0usize; 3];
    let mut vocab: HashSet<&str> = HashSet::new();
    let mut occurrences = 0usize;
    let mut max_len = 0usize;
    for ex in &data.examples {
        per_label[ex.label.index()] += 1;
        occurrences += ex.tokens.len();
        max_len = max_len.max(ex.tokens.len());
        vocab.extend(ex.tokens.iter().map(Token::as_str));
    }

    let mut s = format!("# dataset={}\n", path.display());
    s.push_str(&header(&config));
    let _ = writeln!(s, "examples\t{}", data.examples.len());
    let _ = writeln!(s, "skipped_empty\t{}", data.skipped_empty);
    for label in Label::ALL {
        let _ = writeln!(s, "label_{label}\t{}", per_label[label.index()]);
    }
    let _ = writeln!(s, "tokens\t{occurrences}");
    let _ = writeln!(s, "vocabulary\t{}", vocab.len());
    let _ = writeln!(s, "max_tokens\t{max_len}");
    if config.embeddings.is_some() {
        let table = load_table(&config)?;
        let oov_types = vocab.iter().filter(|t| !table.contains(t)).count();
        let oov_tokens: usize = data
            .examples
            .iter()
            .flat_map(|e| &e.tokens)
            .filter(|t| !table.contains(t.as_str()))
            .count();
        let rate = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let _ = writeln!(s, "oov_token_rate\t{:.4}", rate(oov_tokens, occurrences));
        let _ = writeln!(s, "oov_type_rate\t{:.4}", rate(oov_types, vocab.len()));
    }

    match report {
        Some(p) => write_file(&p, &s),
        None => {
            print!("{s}");
            Ok(())
        }
    }
}

pub fn train(settings: &Settings) -> Result<()> {
    let config = settings.resolve(RunConfig::default())?;
    let table = load_table(&config)?;
    let train = load_dataset(required(&config.train_path, "train")?)?.examples;
    let dev = load_dataset(required(&config.dev_path, "dev")?)?.examples;
    create_output_dir(&config)?;

    let outcome = train_network(
        &config.hyper,
        &table,
        &train,
        &dev,
        config.init_seed,
        &config.train,
        &config.nadam,
    )?;
    let provenance = provenance(&config);
    let model_path = config.output_dir.join("model.svt");
    save_model(&outcome.best, &model_path, &provenance)?;
    let history_path = config.output_dir.join("history.tsv");
    write_file(&history_path, &outcome.history.report(&provenance))?;
    log::info!(
        "wrote {} and {}",
        model_path.display(),
        history_path.display()
    );
    Ok(())
}

pub fn select(settings: &Settings, jobs: usize) -> Result<()> {
    let config = settings.resolve(RunConfig::default())?;
    let table = load_table(&config)?;
    let train = load_dataset(required(&config.train_path, "train")?)?.examples;
    let dev = load_dataset(required(&config.dev_path, "dev")?)?.examples;
    create_output_dir(&config)?;

    let candidate_config = CandidateConfig {
        hyper: config.hyper.clone(),
        train: config.train.clone(),
        nadam: config.nadam.clone(),
        n_candidates: config.n_candidates,
        seed_base: config.seed_base,
        out_dir: config.output_dir.clone(),
        jobs,
        provenance: provenance(&config),
    };
    let candidates = generate_candidates(&candidate_config, &table, &train, &dev)?;

    let mut log = header(&config);
    let _ = writeln!(log, "rank\tinit_seed\tdev_avg_recall\tmodel");
    for (rank, c) in candidates.iter().enumerate() {
        let _ = writeln!(
            log,
            "{rank}\t{}\t{:.6}\t{}",
            c.init_seed,
            c.dev_recall,
            candidate_file_name(c.init_seed)
        );
    }
    write_file(&config.output_dir.join("candidates.tsv"), &log)?;

    let mut manifest = select_members(&candidates, config.k, config.threshold)?;
    manifest.config = config.pairs().into_iter().collect::<BTreeMap<_, _>>();
    let manifest_path = config.output_dir.join("manifest.toml");
    manifest.write(&manifest_path)?;
    log::info!(
        "selected {} of {} candidates; wrote {}",
        manifest.members.len(),
        candidates.len(),
        manifest_path.display()
    );
    Ok(())
}

pub fn predict(
    settings: &Settings,
    manifest_path: &Path,
    input: &Path,
    output: Option<PathBuf>,
) -> Result<()> {
    let manifest = EnsembleManifest::read(manifest_path)?;
    // Settings recorded at selection time (notably the embedding table and
    // its OOV seed) apply unless overridden.
    let mut base = RunConfig::default();
    for (key, value) in &manifest.config {
        if KEYS.contains(&key.as_str()) {
            base.set(key, value)?;
        }
    }
    let config = settings.resolve(base)?;
    let members = manifest.load_members()?;
    let table = load_table(&config)?;
    let tweets = load_unlabeled(input)?;
    let tokens: Vec<&[Token]> = tweets.iter().map(|t| t.tokens.as_slice()).collect();
    let predictions = ensemble_predict(&members, &table, &tokens)?;

    let mut s = String::new();
    for (tweet, p) in tweets.iter().zip(&predictions) {
        let _ = writeln!(
            s,
            "{}\t{}\t{},{},{}",
            tweet.id, p.label, p.votes[0], p.votes[1], p.votes[2]
        );
    }
    match output {
        Some(p) => write_file(&p, &s),
        None => std::io::stdout()
            .write_all(s.as_bytes())
            .map_err(|e| CliError::Lib(io_error(Path::new("<stdout>"), e))),
    }
}

pub fn synth(settings: &Settings, dir: &Path, size: usize, seed: u64) -> Result<()> {
    use convsent::synthetic::{corpus_text, embedding_text, separable_corpus};
    let config = settings.resolve(RunConfig::default())?;
    if size == 0 {
        return Err(CliError::Usage("--size must be at least 1".into()));
    }
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let splits = [
        ("train.tsv", size, seed),
        ("dev.tsv", size.div_ceil(2), seed.wrapping_add(1)),
        ("test.tsv", size.div_ceil(2), seed.wrapping_add(2)),
    ];
    for (name, n, split_seed) in splits {
        write_file(
            &dir.join(name),
            &corpus_text(&separable_corpus(n, split_seed)),
        )?;
    }
    write_file(
        &dir.join("embeddings.txt"),
        &embedding_text(config.hyper.dim, seed),
    )?;
    log::info!(
        "wrote demo corpus with {}-wide embeddings to {}",
        config.hyper.dim,
        dir.display()
    );
    Ok(())
}

pub fn evaluate(gold_path: &Path, predictions_path: &Path, report: Option<PathBuf>) -> Result<()> {
    let gold = load_gold_labels(gold_path)?;
    let predicted = load_gold_labels(predictions_path)?;
    for i in 0..gold.len().max(predicted.len()) {
        let mismatch = match (gold.get(i), predicted.get(i)) {
            (Some(g), Some(p)) if g.0 == p.0 => continue,
            (Some(g), Some(p)) => format!(
                "gold id '{}' but prediction id '{}' at entry {}",
                g.0,
                p.0,
                i + 1
            ),
            (Some(g), None) => format!("gold id '{}' has no prediction", g.0),
            (None, Some(p)) => format!("prediction id '{}' has no gold label", p.0),
            (None, None) => unreachable!(),
        };
        return Err(Error::IdMismatch(mismatch).into());
    }
    let gold_labels: Vec<Label> = gold.iter().map(|g| g.1).collect();
    let predicted_labels: Vec<Label> = predicted.iter().map(|p| p.1).collect();
    let text = confusion(&gold_labels, &predicted_labels)?.report();
    print!("{text}");
    if let Some(path) = report {
        let head = format!(
            "# gold={}\n# predictions={}\n",
            gold_path.display(),
            predictions_path.display()
        );
        write_file(&path, &(head + &text))?;
    }
    Ok(())
}
