//! `run.jsonl`: one ranked list per line.
//!
//! ```text
//! {"qid": "...", "weights": [w_r, w_g, w_c], "seed": 0, "ranking": ["doc", ...], "costs": [[rel, klg, klc, total], ...]}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reranker::RankedList;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLine {
    pub qid: String,
    pub weights: [f64; 3],
    pub seed: u64,
    pub ranking: Vec<String>,
    pub costs: Vec<[f64; 4]>,
}

impl RunLine {
    /// Baseline lists carry no weights or costs and cannot be written.
    pub fn from_ranked(list: &RankedList) -> Result<Self> {
        let weights = list.weights.ok_or_else(|| {
            Error::InvalidArgument(format!("ranking for `{}` has no weights", list.query_id))
        })?;
        let costs = list
            .entries
            .iter()
            .map(|e| {
                e.cost.map(|c| c.as_array()).ok_or_else(|| {
                    Error::InvalidArgument(format!("`{}` has no cost breakdown", e.doc_id))
                })
            })
            .collect::<Result<_>>()?;
        Ok(RunLine {
            qid: list.query_id.clone(),
            weights: weights.as_array(),
            seed: list.seed,
            ranking: list.doc_ids(),
            costs,
        })
    }
}

pub fn write_run(path: impl AsRef<Path>, lists: &[RankedList]) -> Result<()> {
    let path = path.as_ref();
    let lines = lists
        .iter()
        .map(RunLine::from_ranked)
        .collect::<Result<Vec<_>>>()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in &lines {
        serde_json::to_writer(&mut w, line).map_err(|e| Error::Format {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_run(path: impl AsRef<Path>) -> Result<Vec<RunLine>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let run: RunLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if run.costs.len() != run.ranking.len() {
            return Err(Error::Validation {
                path: path.to_path_buf(),
                line: i + 1,
                key: run.qid,
                message: "costs and ranking differ in length".into(),
            });
        }
        out.push(run);
    }
    Ok(out)
}
