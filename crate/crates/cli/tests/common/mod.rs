//! On-disk fixtures for driving the CLI.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fairrank::corpus::{write_authors, write_corpus, write_queries};
use fairrank::synthetic::{generate, SyntheticConfig};

pub struct Files {
    pub dir: tempfile::TempDir,
    pub corpus: PathBuf,
    pub authors: PathBuf,
    pub queries: PathBuf,
}

impl Files {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub fn synthetic(config: &SyntheticConfig) -> Files {
    let data = generate(config);
    let dir = tempfile::tempdir().unwrap();
    let files = Files {
        corpus: dir.path().join("corpus.jsonl"),
        authors: dir.path().join("authors.jsonl"),
        queries: dir.path().join("queries.jsonl"),
        dir,
    };
    write_corpus(&files.corpus, &data.corpus).unwrap();
    write_authors(&files.authors, &data.authors).unwrap();
    write_queries(&files.queries, &data.queries).unwrap();
    files
}

pub fn s(p: &Path) -> String {
    p.display().to_string()
}

/// Runs the CLI in-process and returns its exit code.
pub fn run(args: &[&str]) -> u8 {
    fairrank_cli::main_with_args(std::iter::once("fairrank").chain(args.iter().copied()))
}

pub fn run_owned(args: &[String]) -> u8 {
    fairrank_cli::main_with_args(
        std::iter::once("fairrank".to_string()).chain(args.iter().cloned()),
    )
}
