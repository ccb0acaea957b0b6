//! The `fairrank` command line.
//!
//! Every setting resolves as flag, then `--config` TOML key of the same name,
//! then built-in default. Exit codes: 0 success, 2 usage, 3 invalid input,
//! 4 runtime failure.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use fairrank::attribution::{
    attribute_all_with, load_contacts, GeoTables, NameGenderTable, NoProvider,
};
use fairrank::bm25::{Bm25Index, Bm25Params};
use fairrank::corpus::{
    load_authors, load_corpus, load_queries, write_authors, AuthorTable, Corpus, QueryRecord,
};
use fairrank::eval::{
    self, score_ranking, simplex_grid, write_query_metrics_csv, write_sweep_csv, PoolSource,
    QueryMetrics, SweepConfig,
};
use fairrank::exec::{self, ExecMode};
use fairrank::groups::{impute, GroupProfiles, GroupVariable, ImputationPolicy};
use fairrank::reranker::{rerank_scored, RankedList, Reranker, WeightVector, DEFAULT_POOL_SIZE};
use fairrank::runfile::{read_run, write_run};
use fairrank::textprep::tokenize;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

const DEFAULT_DIVISIONS: u32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "fairrank",
    version,
    about = "Fairness-aware retrieval and re-ranking of academic papers"
)]
pub struct Cli {
    /// TOML file whose keys mirror the long flag names; flags win over it
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads; 1 runs everything sequentially [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and save a BM25 index over titles and abstracts
    Index(IndexArgs),
    /// Attribute gender and economy labels to authors, then impute the rest
    InferGroups(InferArgs),
    /// Rank the whole corpus: BM25 top-k pool, then greedy re-ranking
    Retrieve(RankArgs),
    /// Re-rank each query's provided candidate list
    Rerank(RankArgs),
    /// Utility and unfairness over a weight grid plus bm25 and random baselines
    Sweep(SweepArgs),
    /// Per-query utility and unfairness of a run file
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Pools come from each query's candidate list
    Rerank,
    /// Pools come from the whole corpus
    Retrieve,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Corpus JSONL
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Index file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Term-frequency saturation [default: 1.5]
    #[arg(long)]
    pub k1: Option<f64>,
    /// Length normalization [default: 0.75]
    #[arg(long)]
    pub b: Option<f64>,
    /// Floor for negative idf, as a fraction of the mean positive idf [default: 0.25]
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Author table JSONL
    #[arg(long)]
    pub authors: Option<PathBuf>,
    /// TSV of `name<TAB>male_count<TAB>female_count`
    #[arg(long)]
    pub name_table: Option<PathBuf>,
    /// Geo lookup tables JSON [default: bundled]
    #[arg(long)]
    pub geo_tables: Option<PathBuf>,
    /// Contacts JSONL with `author_id`, `email`, `affiliation`
    #[arg(long)]
    pub contacts: Option<PathBuf>,
    /// Seed for imputing labels that stay unknown [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Labeled author table to write
    #[arg(long)]
    pub out: PathBuf,
    /// Coverage CSV (before imputation)
    #[arg(long)]
    pub coverage_out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// Corpus JSONL
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Author table JSONL; unknown labels are imputed with --seed
    #[arg(long)]
    pub authors: Option<PathBuf>,
    /// Queries JSONL
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Saved index from `fairrank index` [default: built from --corpus]
    #[arg(long)]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Weights `r,g,c` on relevance, gender KL, and country KL [default: 1,0,0]
    #[arg(long)]
    pub weights: Option<WeightVector>,
    /// Candidate pool size [default: 100]
    #[arg(long)]
    pub k: Option<usize>,
    /// Ranked list length, capped at the pool size [default: whole pool]
    #[arg(long)]
    pub l: Option<usize>,
    /// Seed for imputation [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run file to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// File of `r,g,c` lines [default: simplex lattice, see --divisions]
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Lattice steps per axis when no --grid is given [default: 4]
    #[arg(long)]
    pub divisions: Option<u32>,
    /// Pool source [default: rerank]
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    /// Candidate pool size [default: 100]
    #[arg(long)]
    pub k: Option<usize>,
    /// Ranked list length, capped at the pool size [default: whole pool]
    #[arg(long)]
    pub l: Option<usize>,
    /// Seed for imputation and the random baseline [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// NDCG cutoff [default: 10]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Exposure decay per rank, in (0, 1] [default: 0.5]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Sweep CSV to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Run file to score
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// How the run's pools were formed [default: rerank]
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    /// Candidate pool size used for the run [default: 100]
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed for imputation [default: the run file's seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// NDCG cutoff [default: 10]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Exposure decay per rank, in (0, 1] [default: 0.5]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Per-query metrics CSV to write
    #[arg(long)]
    pub out: PathBuf,
}

/// Values accepted in `--config`. Keys use the long flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Config {
    pub corpus: Option<PathBuf>,
    pub authors: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub run: Option<PathBuf>,
    pub name_table: Option<PathBuf>,
    pub geo_tables: Option<PathBuf>,
    pub contacts: Option<PathBuf>,
    pub coverage_out: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub weights: Option<String>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub gamma: Option<f64>,
    pub jobs: Option<usize>,
    pub task: Option<Task>,
    pub divisions: Option<u32>,
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub epsilon: Option<f64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| InputError(format!("{}: {e}", path.display())).into())
    }
}

/// Bad flags, config, or input files; maps to exit code 3.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn required(flag: &Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| config.clone())
        .ok_or_else(|| InputError(format!("missing --{name} (flag or config key `{name}`)")).into())
}

fn pick<T: Copy>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

fn positive(value: usize, name: &str) -> Result<usize> {
    if value == 0 {
        return Err(InputError(format!("--{name} must be positive")).into());
    }
    Ok(value)
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<InputError>().is_some() {
            return EXIT_INPUT;
        }
        if let Some(e) = cause.downcast_ref::<fairrank::Error>() {
            return if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_RUNTIME
            };
        }
    }
    EXIT_RUNTIME
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Diagnostics go to stderr.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let jobs = cli.jobs.or(config.jobs);
    if jobs == Some(0) {
        return Err(InputError("--jobs must be positive".into()).into());
    }
    let mode = if jobs == Some(1) {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    };
    with_pool(jobs, || dispatch(&cli.command, &config, mode))
}

#[cfg(feature = "parallel")]
fn with_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    use anyhow::Context;
    match jobs {
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("starting worker pool")?
            .install(f),
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    if jobs.is_some_and(|n| n > 1) {
        eprintln!("note: built without the `parallel` feature; --jobs ignored");
    }
    f()
}

fn dispatch(command: &Command, config: &Config, mode: ExecMode) -> Result<()> {
    match command {
        Command::Index(args) => cmd_index(args, config),
        Command::InferGroups(args) => cmd_infer_groups(args, config, mode),
        Command::Retrieve(args) => cmd_rank(args, config, mode, Task::Retrieve),
        Command::Rerank(args) => cmd_rank(args, config, mode, Task::Rerank),
        Command::Sweep(args) => cmd_sweep(args, config, mode),
        Command::Eval(args) => cmd_eval(args, config, mode),
    }
}

pub fn cmd_index(args: &IndexArgs, config: &Config) -> Result<()> {
    let defaults = Bm25Params::default();
    let params = Bm25Params {
        k1: pick(args.k1, config.k1, defaults.k1),
        b: pick(args.b, config.b, defaults.b),
        epsilon: pick(args.epsilon, config.epsilon, defaults.epsilon),
    };
    let corpus = load_corpus(required(&args.corpus, &config.corpus, "corpus")?)?;
    let index = Bm25Index::build_with(&corpus, params)?;
    index.save(&args.out)?;
    let stats = index.stats();
    println!("documents: {}", stats.documents);
    println!("terms: {}", stats.terms);
    println!("tokens: {}", stats.tokens);
    println!("avg_doc_len: {:.6}", stats.avg_doc_len);
    Ok(())
}

pub fn cmd_infer_groups(args: &InferArgs, config: &Config, mode: ExecMode) -> Result<()> {
    let authors = load_authors(required(&args.authors, &config.authors, "authors")?)?;
    let names = NameGenderTable::load_tsv(required(
        &args.name_table,
        &config.name_table,
        "name-table",
    )?)?;
    let geo = match args.geo_tables.as_ref().or(config.geo_tables.as_ref()) {
        Some(path) => GeoTables::load(path)?,
        None => GeoTables::bundled(),
    };
    let contacts = match args.contacts.as_ref().or(config.contacts.as_ref()) {
        Some(path) => load_contacts(path)?,
        None => HashMap::new(),
    };
    let (attributed, report) =
        attribute_all_with(&authors, &names, &geo, &contacts, &NoProvider, mode);
    if let Some(path) = args.coverage_out.as_ref().or(config.coverage_out.as_ref()) {
        report.write_csv(path)?;
    }
    for v in [&report.gender, &report.country] {
        let shares: Vec<String> = v
            .rows
            .iter()
            .map(|r| format!("{}={} ({:.1}%)", r.value, r.count, 100.0 * r.fraction))
            .collect();
        println!("{}: {}", v.variable, shares.join(", "));
    }
    let seed = pick(args.seed, config.seed, 0);
    let labeled = impute(&attributed, ImputationPolicy::new(seed))?;
    write_authors(&args.out, &labeled)?;
    Ok(())
}

/// Corpus, labeled authors, and index shared by the ranking commands.
struct Loaded {
    corpus: Corpus,
    profiles: GroupProfiles,
    index: Bm25Index,
}

fn load_data(data: &DataArgs, config: &Config, seed: u64) -> Result<Loaded> {
    let corpus = load_corpus(required(&data.corpus, &config.corpus, "corpus")?)?;
    let authors = load_authors(required(&data.authors, &config.authors, "authors")?)?;
    let authors = impute_missing(authors, seed)?;
    let index = match data.index.as_ref().or(config.index.as_ref()) {
        Some(path) => {
            let index = Bm25Index::load(path)?;
            if index.doc_count() != corpus.len()
                || corpus.iter().any(|d| !index.contains(&d.doc_id))
            {
                return Err(InputError(format!(
                    "{}: index does not match the corpus",
                    path.display()
                ))
                .into());
            }
            index
        }
        None => Bm25Index::build(&corpus)?,
    };
    let profiles = GroupProfiles::build(&corpus, &authors);
    Ok(Loaded {
        corpus,
        profiles,
        index,
    })
}

fn impute_missing(authors: AuthorTable, seed: u64) -> Result<AuthorTable> {
    let unknown = authors
        .iter()
        .filter(|a| GroupVariable::ALL.iter().any(|v| a.label(*v).is_none()))
        .count();
    if unknown == 0 {
        return Ok(authors);
    }
    eprintln!("note: imputing labels for {unknown} authors (seed {seed})");
    Ok(impute(&authors, ImputationPolicy::new(seed))?)
}

fn load_query_file(data: &DataArgs, config: &Config, corpus: &Corpus) -> Result<Vec<QueryRecord>> {
    let path = required(&data.queries, &config.queries, "queries")?;
    let load = load_queries(&path, corpus)?;
    for w in &load.warnings {
        eprintln!("warning: {w}");
    }
    if load.queries.is_empty() {
        return Err(InputError(format!("{}: no queries", path.display())).into());
    }
    Ok(load.queries)
}

/// Prints per-query failures; fails only when nothing succeeded.
fn report_skips<T>(results: Vec<(String, Result<T, String>)>) -> Result<Vec<T>> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    for (qid, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(reason) => eprintln!("skipped query `{qid}`: {reason}"),
        }
    }
    if ok.is_empty() && total > 0 {
        anyhow::bail!("all {total} queries failed");
    }
    Ok(ok)
}

fn scored_pool(
    reranker: &Reranker<'_>,
    query: &QueryRecord,
    task: Task,
    k: usize,
) -> fairrank::Result<Vec<(String, f64)>> {
    let tokens = tokenize(&query.query_text);
    match task {
        Task::Rerank => reranker.scored_pool(&tokens, k, Some(&query.candidate_ids())),
        Task::Retrieve => reranker.scored_pool(&tokens, k, None),
    }
}

pub fn cmd_rank(args: &RankArgs, config: &Config, mode: ExecMode, task: Task) -> Result<()> {
    let weights = match (&args.weights, &config.weights) {
        (Some(w), _) => *w,
        (None, Some(text)) => text
            .parse()
            .map_err(|e| InputError(format!("config key `weights`: {e}")))?,
        (None, None) => WeightVector::relevance_only(),
    };
    let k = positive(pick(args.k, config.k, DEFAULT_POOL_SIZE), "k")?;
    let l = args.l.or(config.l).map(|l| positive(l, "l")).transpose()?;
    let seed = pick(args.seed, config.seed, 0);
    let data = load_data(&args.data, config, seed)?;
    let queries = load_query_file(&args.data, config, &data.corpus)?;
    let reranker = Reranker::new(&data.index, &data.profiles);

    let results = exec::map(&queries, mode, |q| {
        let ranked = scored_pool(&reranker, q, task, k).and_then(|scored| {
            let working: Vec<String> = scored.iter().map(|(id, _)| id.clone()).collect();
            let len = l.unwrap_or(working.len()).min(working.len());
            rerank_scored(&scored, &working, &weights, len, &data.profiles, mode)
        });
        let list = ranked.map(|entries| RankedList {
            query_id: q.query_id.clone(),
            entries,
            weights: Some(weights),
            seed,
        });
        (q.query_id.clone(), list.map_err(|e| e.to_string()))
    });
    let lists = report_skips(results)?;
    write_run(&args.out, &lists)?;
    Ok(())
}

/// Reads `r,g,c` lines; blank lines and `#` comments are ignored.
pub fn load_grid(path: &Path) -> Result<Vec<WeightVector>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    let mut grid = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let w = line
            .parse()
            .map_err(|e| InputError(format!("{}:{}: {e}", path.display(), i + 1)))?;
        grid.push(w);
    }
    if grid.is_empty() {
        return Err(InputError(format!("{}: empty grid", path.display())).into());
    }
    Ok(grid)
}

pub fn cmd_sweep(args: &SweepArgs, config: &Config, mode: ExecMode) -> Result<()> {
    let grid = match args.grid.as_ref().or(config.grid.as_ref()) {
        Some(path) => load_grid(path)?,
        None => simplex_grid(pick(args.divisions, config.divisions, DEFAULT_DIVISIONS)),
    };
    let task = pick(args.task, config.task, Task::Rerank);
    let k = positive(pick(args.k, config.k, DEFAULT_POOL_SIZE), "k")?;
    let seed = pick(args.seed, config.seed, 0);
    let sweep_config = SweepConfig {
        depth: positive(pick(args.depth, config.depth, eval::DEFAULT_DEPTH), "depth")?,
        gamma: pick(args.gamma, config.gamma, eval::DEFAULT_GAMMA),
        seed,
        list_len: args.l.or(config.l).map(|l| positive(l, "l")).transpose()?,
        pool: match task {
            Task::Rerank => PoolSource::Provided { k: Some(k) },
            Task::Retrieve => PoolSource::Corpus { k },
        },
        mode,
    };
    let data = load_data(&args.data, config, seed)?;
    let queries = load_query_file(&args.data, config, &data.corpus)?;
    let report = eval::sweep(&grid, &queries, &data.index, &data.profiles, &sweep_config)?;
    for skip in &report.skips {
        eprintln!("skipped {skip}");
    }
    if report.points.iter().all(|p| p.n_queries == 0) {
        anyhow::bail!("no query could be scored");
    }
    write_sweep_csv(&args.out, &report.points)?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs, config: &Config, mode: ExecMode) -> Result<()> {
    let run_path = required(&args.run, &config.run, "run")?;
    let run = read_run(&run_path)?;
    let first_seed = run.first().map(|r| r.seed).unwrap_or(0);
    let seed = args.seed.or(config.seed).unwrap_or(first_seed);
    let task = pick(args.task, config.task, Task::Rerank);
    let k = positive(pick(args.k, config.k, DEFAULT_POOL_SIZE), "k")?;
    let depth = positive(pick(args.depth, config.depth, eval::DEFAULT_DEPTH), "depth")?;
    let gamma = pick(args.gamma, config.gamma, eval::DEFAULT_GAMMA);
    let data = load_data(&args.data, config, seed)?;
    let queries = load_query_file(&args.data, config, &data.corpus)?;
    let by_id: HashMap<&str, &QueryRecord> =
        queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
    let reranker = Reranker::new(&data.index, &data.profiles);

    let results = exec::map(&run, mode, |line| {
        let metrics = by_id
            .get(line.qid.as_str())
            .ok_or_else(|| "not in the queries file".to_string())
            .and_then(|q| {
                let pool: Vec<String> = scored_pool(&reranker, q, task, k)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|(id, _)| id)
                    .collect();
                score_ranking(
                    &line.ranking,
                    &pool,
                    &q.relevant_ids(),
                    &data.profiles,
                    depth,
                    gamma,
                )
            });
        (line.qid.clone(), metrics.map(|m| (line.qid.clone(), m)))
    });
    let rows: Vec<(String, QueryMetrics)> = report_skips(results)?;
    write_query_metrics_csv(&args.out, &rows)?;
    let n = rows.len() as f64;
    let mean = |f: fn(&QueryMetrics) -> f64| rows.iter().map(|(_, m)| f(m)).sum::<f64>() / n;
    println!(
        "queries: {}  utility: {:.4}  unfairness_gender: {:.4}  unfairness_country: {:.4}",
        rows.len(),
        mean(|m| m.utility),
        mean(|m| m.unfairness_gender),
        mean(|m| m.unfairness_country),
    );
    Ok(())
}
