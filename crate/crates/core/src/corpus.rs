//! Paper corpus, author table, and query files.
//!
//! All three inputs are line-delimited JSON. Field names follow the S2 open
//! corpus dumps (`id`, `paperAbstract`, `inCitations`, ...). Fields the loader
//! does not know about are kept in `extra` and written back out unchanged.
//!
//! Tables are immutable once loaded and are keyed by identifier, so lookups
//! never depend on the order of lines in the input file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::groups::GroupVariable;

/// Accepts a JSON string or integer and yields it as a string key.
fn de_key<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    match Value::deserialize(d)? {
        Value::String(s) => Ok(s),
        Value::Number(n) if n.is_i64() || n.is_u64() => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!(
            "expected string or integer key, found {other}"
        ))),
    }
}

fn de_key_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    struct Key(#[serde(deserialize_with = "de_key")] String);
    let keys: Option<Vec<Key>> = Option::deserialize(d)?;
    Ok(keys.unwrap_or_default().into_iter().map(|k| k.0).collect())
}

fn de_opt_key<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    struct Key(#[serde(deserialize_with = "de_key")] String);
    Ok(Option::<Key>::deserialize(d)?.map(|k| k.0))
}

/// One author entry as it appears inside a corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorRef {
    #[serde(default)]
    pub name: String,
    #[serde(default, deserialize_with = "de_key_list")]
    pub ids: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPaper {
    #[serde(deserialize_with = "de_opt_key", default)]
    id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    #[serde(
        rename = "paperAbstract",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    paper_abstract: Option<String>,
    #[serde(default)]
    authors: Option<Vec<AuthorRef>>,
    #[serde(rename = "inCitations", default, deserialize_with = "de_key_list")]
    in_citations: Vec<String>,
    #[serde(rename = "outCitations", default, deserialize_with = "de_key_list")]
    out_citations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    year: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    venue: Option<String>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

/// One corpus document.
#[derive(Debug, Clone, PartialEq)]
pub struct PaperDoc {
    pub doc_id: String,
    pub title: String,
    pub abstract_text: String,
    /// Author entries in file order, names included.
    pub authors: Vec<AuthorRef>,
    /// First id of every author entry that carries one; never contains duplicates.
    pub author_ids: Vec<String>,
    pub year: Option<i64>,
    pub venue: Option<String>,
    pub in_citations: Vec<String>,
    pub out_citations: Vec<String>,
    /// Unrecognized fields, preserved for round-tripping.
    pub extra: BTreeMap<String, Value>,
}

impl PaperDoc {
    /// Builds a document with the given id, text, and author ids; all other
    /// fields empty.
    pub fn new(
        doc_id: impl Into<String>,
        title: &str,
        abstract_text: &str,
        author_ids: &[&str],
    ) -> Self {
        let authors = author_ids
            .iter()
            .map(|id| AuthorRef {
                name: String::new(),
                ids: vec![(*id).to_string()],
            })
            .collect();
        PaperDoc {
            doc_id: doc_id.into(),
            title: title.to_string(),
            abstract_text: abstract_text.to_string(),
            authors,
            author_ids: author_ids.iter().map(|s| s.to_string()).collect(),
            year: None,
            venue: None,
            in_citations: Vec::new(),
            out_citations: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    fn from_raw(raw: RawPaper, path: &Path, line: usize) -> Result<Self> {
        let doc_id = match raw.id {
            Some(id) if !id.is_empty() => id,
            _ => {
                return Err(Error::Validation {
                    path: path.to_path_buf(),
                    line,
                    key: String::new(),
                    message: "missing or empty `id`".into(),
                })
            }
        };
        let authors = raw.authors.unwrap_or_default();
        let mut seen = HashSet::new();
        let mut author_ids = Vec::with_capacity(authors.len());
        for a in &authors {
            if let Some(id) = a.ids.first() {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Validation {
                        path: path.to_path_buf(),
                        line,
                        key: doc_id,
                        message: format!("author `{id}` listed twice"),
                    });
                }
                author_ids.push(id.clone());
            }
        }
        Ok(PaperDoc {
            doc_id,
            title: raw.title.unwrap_or_default(),
            abstract_text: raw.paper_abstract.unwrap_or_default(),
            authors,
            author_ids,
            year: raw.year,
            venue: raw.venue,
            in_citations: raw.in_citations,
            out_citations: raw.out_citations,
            extra: raw.extra,
        })
    }

    fn to_raw(&self) -> RawPaper {
        RawPaper {
            id: Some(self.doc_id.clone()),
            title: Some(self.title.clone()),
            paper_abstract: Some(self.abstract_text.clone()),
            authors: Some(self.authors.clone()),
            in_citations: self.in_citations.clone(),
            out_citations: self.out_citations.clone(),
            year: self.year,
            venue: self.venue.clone(),
            extra: self.extra.clone(),
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Economy {
    Advanced,
    Developing,
    #[default]
    Unknown,
}

impl Gender {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Some(Gender::Male),
            "female" | "f" => Some(Gender::Female),
            "" | "unknown" | "unidentified" => Some(Gender::Unknown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }
}

impl Economy {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "advanced" => Some(Economy::Advanced),
            "developing" => Some(Economy::Developing),
            "" | "unknown" | "unidentified" => Some(Economy::Unknown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Economy::Advanced => "advanced",
            Economy::Developing => "developing",
            Economy::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Economy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAuthor {
    #[serde(deserialize_with = "de_opt_key", default)]
    corpus_author_id: Option<String>,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    num_citations: Option<i64>,
    #[serde(default)]
    h_index: Option<i64>,
    #[serde(default)]
    i10: Option<i64>,
    #[serde(default)]
    num_papers: Option<i64>,
    #[serde(default)]
    gender: Option<String>,
    #[serde(default)]
    economy: Option<String>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

/// One row of the author table.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthorRecord {
    pub author_id: String,
    pub name: String,
    pub num_citations: u64,
    pub h_index: u64,
    pub i10_index: u64,
    pub num_papers: u64,
    pub gender: Gender,
    pub economy: Economy,
    pub extra: BTreeMap<String, Value>,
}

impl AuthorRecord {
    pub fn new(author_id: impl Into<String>, name: impl Into<String>) -> Self {
        AuthorRecord {
            author_id: author_id.into(),
            name: name.into(),
            num_citations: 0,
            h_index: 0,
            i10_index: 0,
            num_papers: 0,
            gender: Gender::Unknown,
            economy: Economy::Unknown,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_labels(mut self, gender: Gender, economy: Economy) -> Self {
        self.gender = gender;
        self.economy = economy;
        self
    }

    /// Index of this author's known value for `variable`, or `None` when the
    /// label is Unknown.
    pub fn label(&self, variable: GroupVariable) -> Option<usize> {
        match variable {
            GroupVariable::Gender => match self.gender {
                Gender::Male => Some(0),
                Gender::Female => Some(1),
                Gender::Unknown => None,
            },
            GroupVariable::Country => match self.economy {
                Economy::Advanced => Some(0),
                Economy::Developing => Some(1),
                Economy::Unknown => None,
            },
        }
    }

    /// Sets the label for `variable` from a known-value index.
    pub fn set_label(&mut self, variable: GroupVariable, value: Option<usize>) {
        match variable {
            GroupVariable::Gender => {
                self.gender = match value {
                    Some(0) => Gender::Male,
                    Some(1) => Gender::Female,
                    _ => Gender::Unknown,
                }
            }
            GroupVariable::Country => {
                self.economy = match value {
                    Some(0) => Economy::Advanced,
                    Some(1) => Economy::Developing,
                    _ => Economy::Unknown,
                }
            }
        }
    }

    fn from_raw(raw: RawAuthor, path: &Path, line: usize) -> Result<Self> {
        let author_id = match raw.corpus_author_id {
            Some(id) if !id.is_empty() => id,
            _ => {
                return Err(Error::Validation {
                    path: path.to_path_buf(),
                    line,
                    key: String::new(),
                    message: "missing or empty `corpus_author_id`".into(),
                })
            }
        };
        let invalid = |message: String| Error::Validation {
            path: path.to_path_buf(),
            line,
            key: author_id.clone(),
            message,
        };
        let counter = |field: &str, v: Option<i64>| -> Result<u64> {
            match v {
                None => Ok(0),
                Some(n) if n >= 0 => Ok(n as u64),
                Some(n) => Err(invalid(format!("`{field}` must be nonnegative, got {n}"))),
            }
        };
        let num_citations = counter("num_citations", raw.num_citations)?;
        let h_index = counter("h_index", raw.h_index)?;
        let i10_index = counter("i10", raw.i10)?;
        let num_papers = counter("num_papers", raw.num_papers)?;
        let gender = match raw.gender.as_deref() {
            None => Gender::Unknown,
            Some(s) => {
                Gender::parse(s).ok_or_else(|| invalid(format!("unrecognized gender `{s}`")))?
            }
        };
        let economy = match raw.economy.as_deref() {
            None => Economy::Unknown,
            Some(s) => {
                Economy::parse(s).ok_or_else(|| invalid(format!("unrecognized economy `{s}`")))?
            }
        };
        Ok(AuthorRecord {
            author_id,
            name: raw.name.unwrap_or_default(),
            num_citations,
            h_index,
            i10_index,
            num_papers,
            gender,
            economy,
            extra: raw.extra,
        })
    }

    fn to_raw(&self) -> RawAuthor {
        RawAuthor {
            corpus_author_id: Some(self.author_id.clone()),
            name: Some(self.name.clone()),
            num_citations: Some(self.num_citations as i64),
            h_index: Some(self.h_index as i64),
            i10: Some(self.i10_index as i64),
            num_papers: Some(self.num_papers as i64),
            gender: Some(self.gender.as_str().to_string()),
            economy: Some(self.economy.as_str().to_string()),
            extra: self.extra.clone(),
        }
    }
}

/// A keyed, insertion-ordered table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<T> {
    rows: Vec<T>,
    index: HashMap<String, usize>,
}

pub type Corpus = Table<PaperDoc>;
pub type AuthorTable = Table<AuthorRecord>;

pub trait Keyed {
    fn key(&self) -> &str;
}

impl Keyed for PaperDoc {
    fn key(&self) -> &str {
        &self.doc_id
    }
}

impl Keyed for AuthorRecord {
    fn key(&self) -> &str {
        &self.author_id
    }
}

impl<T: Keyed> Table<T> {
    /// Builds a table from in-memory rows. Duplicate keys are rejected; the
    /// reported line is the 1-based row position.
    pub fn from_rows(rows: Vec<T>) -> Result<Self> {
        Self::build(rows, Path::new("<memory>"), None)
    }

    fn build(rows: Vec<T>, path: &Path, lines: Option<&[usize]>) -> Result<Self> {
        let mut index = HashMap::with_capacity(rows.len());
        for (pos, row) in rows.iter().enumerate() {
            if index.insert(row.key().to_string(), pos).is_some() {
                return Err(Error::DuplicateKey {
                    path: path.to_path_buf(),
                    line: lines.map_or(pos + 1, |l| l[pos]),
                    key: row.key().to_string(),
                });
            }
        }
        Ok(Table { rows, index })
    }

    pub fn get(&self, key: &str) -> Option<&T> {
        self.index.get(key).map(|&i| &self.rows[i])
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.rows.iter()
    }

    pub fn rows(&self) -> &[T] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<T> {
        self.rows
    }
}

impl<'a, T> IntoIterator for &'a Table<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;

    fn into_iter(self) -> Self::IntoIter {
        self.rows.iter()
    }
}

/// Iterates the non-blank lines of a JSONL file with 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_line<T: serde::de::DeserializeOwned>(path: &Path, line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let mut docs = Vec::new();
    let mut lines = Vec::new();
    for (line, text) in read_lines(path)? {
        let raw: RawPaper = parse_line(path, line, &text)?;
        docs.push(PaperDoc::from_raw(raw, path, line)?);
        lines.push(line);
    }
    Table::build(docs, path, Some(&lines))
}

/// Loads `authors.jsonl`. Absent gender/economy fields become Unknown.
pub fn load_authors(path: impl AsRef<Path>) -> Result<AuthorTable> {
    let path = path.as_ref();
    let mut authors = Vec::new();
    let mut lines = Vec::new();
    for (line, text) in read_lines(path)? {
        let raw: RawAuthor = parse_line(path, line, &text)?;
        authors.push(AuthorRecord::from_raw(raw, path, line)?);
        lines.push(line);
    }
    Table::build(authors, path, Some(&lines))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryDoc {
    pub doc_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relevance: Option<u8>,
}

/// One query line: text plus its candidate documents and optional judgments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryRecord {
    #[serde(rename = "qid")]
    pub query_id: String,
    #[serde(rename = "query")]
    pub query_text: String,
    pub frequency: u64,
    pub documents: Vec<QueryDoc>,
}

impl QueryRecord {
    pub fn candidate_ids(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.doc_id.clone()).collect()
    }

    /// Ids judged relevant (relevance = 1).
    pub fn relevant_ids(&self) -> HashSet<&str> {
        self.documents
            .iter()
            .filter(|d| d.relevance == Some(1))
            .map(|d| d.doc_id.as_str())
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct RawQueryDoc {
    #[serde(deserialize_with = "de_key")]
    doc_id: String,
    #[serde(default)]
    relevance: Option<Value>,
}

#[derive(Debug, Deserialize)]
struct RawQuery {
    #[serde(deserialize_with = "de_key")]
    qid: String,
    #[serde(default)]
    query: String,
    #[serde(default)]
    frequency: Option<i64>,
    #[serde(default)]
    documents: Vec<RawQueryDoc>,
}

/// A query referenced a document the corpus does not contain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryWarning {
    pub line: usize,
    pub query_id: String,
    pub doc_id: String,
}

impl fmt::Display for QueryWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: query `{}` references unknown document `{}`",
            self.line, self.query_id, self.doc_id
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct QueryLoad {
    pub queries: Vec<QueryRecord>,
    pub warnings: Vec<QueryWarning>,
}

/// Loads `queries.jsonl` in file order. Documents missing from `corpus` are
/// removed from the record and listed in `warnings`.
pub fn load_queries(path: impl AsRef<Path>, corpus: &Corpus) -> Result<QueryLoad> {
    let path = path.as_ref();
    let mut out = QueryLoad::default();
    for (line, text) in read_lines(path)? {
        let raw: RawQuery = parse_line(path, line, &text)?;
        let invalid = |message: String| Error::Validation {
            path: path.to_path_buf(),
            line,
            key: raw.qid.clone(),
            message,
        };
        let frequency = match raw.frequency {
            None => 0,
            Some(n) if n >= 0 => n as u64,
            Some(n) => return Err(invalid(format!("frequency must be nonnegative, got {n}"))),
        };
        let mut documents = Vec::with_capacity(raw.documents.len());
        for d in &raw.documents {
            let relevance = match &d.relevance {
                None | Some(Value::Null) => None,
                Some(v) => match v.as_u64() {
                    Some(r @ (0 | 1)) => Some(r as u8),
                    _ => {
                        return Err(invalid(format!(
                            "relevance for `{}` must be 0 or 1, got {v}",
                            d.doc_id
                        )))
                    }
                },
            };
            if corpus.contains(&d.doc_id) {
                documents.push(QueryDoc {
                    doc_id: d.doc_id.clone(),
                    relevance,
                });
            } else {
                out.warnings.push(QueryWarning {
                    line,
                    query_id: raw.qid.clone(),
                    doc_id: d.doc_id.clone(),
                });
            }
        }
        out.queries.push(QueryRecord {
            query_id: raw.qid,
            query_text: raw.query,
            frequency,
            documents,
        });
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(|e| Error::Format {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    write_jsonl(path.as_ref(), corpus.iter().map(PaperDoc::to_raw))
}

/// Writes the author table in `authors.jsonl` format with both group fields
/// filled in.
pub fn write_authors(path: impl AsRef<Path>, authors: &AuthorTable) -> Result<()> {
    write_jsonl(path.as_ref(), authors.iter().map(AuthorRecord::to_raw))
}

pub fn write_queries(path: impl AsRef<Path>, queries: &[QueryRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), queries)
}

/// Count and share of one label value.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelShare {
    pub value: &'static str,
    pub count: usize,
    pub fraction: f64,
}

/// Label distribution of one group variable, Unknown included as the last row.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableStats {
    pub variable: GroupVariable,
    pub rows: Vec<LabelShare>,
}

impl VariableStats {
    pub fn share(&self, value: &str) -> Option<&LabelShare> {
        self.rows.iter().find(|r| r.value == value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub total: usize,
    pub gender: VariableStats,
    pub country: VariableStats,
}

impl GroupStats {
    pub fn variable(&self, variable: GroupVariable) -> &VariableStats {
        match variable {
            GroupVariable::Gender => &self.gender,
            GroupVariable::Country => &self.country,
        }
    }
}

pub(crate) fn variable_stats(authors: &AuthorTable, variable: GroupVariable) -> VariableStats {
    let values = variable.values();
    let mut counts = vec![0usize; values.len() + 1];
    for a in authors {
        match a.label(variable) {
            Some(i) => counts[i] += 1,
            None => counts[values.len()] += 1,
        }
    }
    let total = authors.len() as f64;
    let rows = values
        .iter()
        .copied()
        .chain(std::iter::once("unknown"))
        .zip(counts)
        .map(|(value, count)| LabelShare {
            value,
            count,
            fraction: if total > 0.0 {
                count as f64 / total
            } else {
                0.0
            },
        })
        .collect();
    VariableStats { variable, rows }
}

/// Per-variable label counts and fractions over the whole author table.
pub fn group_stats(authors: &AuthorTable) -> Result<GroupStats> {
    if authors.is_empty() {
        return Err(Error::Empty("author table"));
    }
    Ok(GroupStats {
        total: authors.len(),
        gender: variable_stats(authors, GroupVariable::Gender),
        country: variable_stats(authors, GroupVariable::Country),
    })
}
