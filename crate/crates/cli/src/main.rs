//! `convsent` command-line tool.
//!
//! ```text
//! convsent [--config FILE] [--KEY VALUE ...] <prep|train|select|predict|evaluate|synth> [ARGS]
//! ```
//!
//! Settings come from the built-in defaults, then `--config`, then any
//! `--KEY VALUE` override (see `convsent::config` for the key list).
//! Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use convsent::config::KEYS;

use commands::CliError;

fn key_args() -> Vec<Arg> {
    KEYS.iter()
        .map(|&key| {
            let mut arg = Arg::new(key)
                .long(key)
                .value_name("VALUE")
                .action(ArgAction::Set)
                .overrides_with(key)
                .global(true)
                .help_heading("Config overrides");
            let dashed = key.replace('_', "-");
            if dashed != key {
                arg = arg.alias(dashed);
            }
            arg
        })
        .collect()
}

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("FILE")
        .value_parser(value_parser!(PathBuf))
        .help(help)
}

fn cli() -> Command {
    Command::new("convsent")
        .about("Tweet sentiment classification with an ensemble of convolutional networks")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(path_arg("config", "Configuration file of key = value lines").global(true))
        .args(key_args())
        .subcommand(
            Command::new("prep")
                .about("Corpus statistics: counts, labels, vocabulary, OOV rate, max length")
                .arg(
                    Arg::new("dataset")
                        .value_name("DATASET")
                        .value_parser(value_parser!(PathBuf))
                        .help("Labeled corpus (defaults to the `train` setting)"),
                )
                .arg(path_arg(
                    "report",
                    "Write the report here instead of stdout",
                )),
        )
        .subcommand(
            Command::new("train")
                .about("Train one network; writes model.svt and history.tsv to output_dir"),
        )
        .subcommand(
            Command::new("select")
                .about("Train candidates and write the ensemble manifest to output_dir")
                .arg(
                    Arg::new("jobs")
                        .long("jobs")
                        .value_name("N")
                        .value_parser(value_parser!(usize))
                        .default_value("0")
                        .help("Parallel candidate trainings (0 = one per core)"),
                ),
        )
        .subcommand(
            Command::new("predict")
                .about("Label tweets with an ensemble")
                .arg(path_arg("manifest", "Ensemble manifest").required(true))
                .arg(
                    path_arg("input", "Tweets as id<TAB>text or id<TAB>label<TAB>text")
                        .required(true),
                )
                .arg(path_arg("output", "Predictions file (stdout when omitted)")),
        )
        .subcommand(
            Command::new("synth")
                .about("Write a separable demo corpus and a matching embedding table")
                .arg(
                    Arg::new("dir")
                        .value_name("DIR")
                        .required(true)
                        .value_parser(value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("size")
                        .long("size")
                        .value_name("N")
                        .value_parser(value_parser!(usize))
                        .default_value("60")
                        .help("Training examples; dev and test get half as many"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_name("SEED")
                        .value_parser(value_parser!(u64))
                        .default_value("1"),
                ),
        )
        .subcommand(
            Command::new("evaluate")
                .about("Score a predictions file against gold labels")
                .arg(path_arg("gold", "Labeled corpus").required(true))
                .arg(path_arg("predictions", "Output of `predict`").required(true))
                .arg(path_arg("report", "Also write the report here")),
        )
}

/// Explicit `--KEY VALUE` overrides in key order.
fn overrides(matches: &ArgMatches) -> Vec<(&'static str, String)> {
    KEYS.iter()
        .filter_map(|&key| matches.get_one::<String>(key).map(|v| (key, v.clone())))
        .collect()
}

fn run(matches: &ArgMatches) -> Result<(), CliError> {
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let settings = commands::Settings {
        config_file: sub.get_one::<PathBuf>("config").cloned(),
        overrides: overrides(sub),
    };
    let path = |id: &str| sub.get_one::<PathBuf>(id).cloned();
    match name {
        "prep" => commands::prep(&settings, path("dataset"), path("report")),
        "train" => commands::train(&settings),
        "select" => commands::select(
            &settings,
            *sub.get_one::<usize>("jobs").expect("has default"),
        ),
        "predict" => commands::predict(
            &settings,
            &path("manifest").expect("required"),
            &path("input").expect("required"),
            path("output"),
        ),
        "synth" => commands::synth(
            &settings,
            &path("dir").expect("required"),
            *sub.get_one::<usize>("size").expect("has default"),
            *sub.get_one::<u64>("seed").expect("has default"),
        ),
        "evaluate" => commands::evaluate(
            &path("gold").expect("required"),
            &path("predictions").expect("required"),
            path("report"),
        ),
        other => unreachable!("unknown subcommand {other}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
