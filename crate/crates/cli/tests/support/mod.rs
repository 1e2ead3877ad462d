//! Helpers for driving the `convsent` binary in a scratch directory.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use convsent::synthetic::{corpus_text, embedding_text, separable_corpus};

pub const DESK_CONF: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.conf");
pub const PAPER_CONF: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper.conf");

/// A scratch directory holding a demo corpus, with the binary run from it.
pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    /// Demo data written by the library generator: `train.tsv` (`n`
    /// examples), `dev.tsv`, `test.tsv` and a 16-wide `emb.txt`.
    pub fn with_corpus(n: usize, seed: u64) -> Self {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        ws.write("train.tsv", &corpus_text(&separable_corpus(n, seed)));
        ws.write("dev.tsv", &corpus_text(&separable_corpus(n / 2, seed + 1)));
        ws.write("test.tsv", &corpus_text(&separable_corpus(n / 2, seed + 2)));
        ws.write("emb.txt", &embedding_text(16, seed));
        ws
    }

    pub fn empty() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write(&self, name: &str, contents: &str) {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).unwrap();
        }
        fs::write(path, contents).unwrap();
    }

    pub fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    pub fn bytes(&self, name: &str) -> Vec<u8> {
        fs::read(self.path(name)).unwrap()
    }

    /// Runs the binary in the workspace with `args`.
    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_convsent"))
            .current_dir(self.dir.path())
            .env("RUST_LOG", "warn")
            .args(args)
            .output()
            .unwrap()
    }

    /// Runs the binary and panics with its stderr unless it succeeds.
    pub fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "convsent {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

/// Desk settings pointing at the workspace corpus, with fewer epochs.
pub fn desk_args<'a>(epochs: &'a str, output_dir: &'a str) -> Vec<&'a str> {
    vec![
        "--config",
        DESK_CONF,
        "--embeddings",
        "emb.txt",
        "--train",
        "train.tsv",
        "--dev",
        "dev.tsv",
        "--max_epochs",
        epochs,
        "--output_dir",
        output_dir,
    ]
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Value of a `key<TAB>value` report line.
pub fn report_value(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}\t")))
        .unwrap_or_else(|| panic!("no '{key}' in report:\n{report}"))
        .to_string()
}

pub fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}
