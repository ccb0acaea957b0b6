//! Offline author attribution: gender from a first-name table, and country
//! (then economy class) from email and affiliation.
//!
//! The country chain tries, in order:
//!
//! 1. the email's top-level domain (`.uk` → GB),
//! 2. the longest university name contained in the affiliation,
//! 3. the longest city name contained in the affiliation,
//! 4. a pluggable [`CountryProvider`] for anything that needs a network
//!    service. The default provider never answers.
//!
//! The first step that produces a country wins.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{variable_stats, AuthorRecord, AuthorTable, Economy, Gender, VariableStats};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::groups::GroupVariable;

/// First name → (male count, female count).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameGenderTable {
    entries: HashMap<String, (u64, u64)>,
}

impl NameGenderTable {
    pub fn from_entries<'a>(
        entries: impl IntoIterator<Item = (&'a str, u64, u64)>,
    ) -> Result<Self> {
        let mut table = NameGenderTable::default();
        for (pos, (name, male, female)) in entries.into_iter().enumerate() {
            table.insert(Path::new("<memory>"), pos + 1, name, male, female)?;
        }
        Ok(table)
    }

    fn insert(
        &mut self,
        path: &Path,
        line: usize,
        name: &str,
        male: u64,
        female: u64,
    ) -> Result<()> {
        let key = name.trim().to_lowercase();
        if key.is_empty() || male + female == 0 {
            return Err(Error::Validation {
                path: path.to_path_buf(),
                line,
                key,
                message: "entry needs a name and at least one positive count".into(),
            });
        }
        if self.entries.insert(key.clone(), (male, female)).is_some() {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line,
                key,
            });
        }
        Ok(())
    }

    /// Reads `name<TAB>male_count<TAB>female_count` lines. Blank lines,
    /// `#` comments, and a `name` header row are skipped.
    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = NameGenderTable::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if lineno == 1
                && fields
                    .first()
                    .map(|f| f.trim().eq_ignore_ascii_case("name"))
                    == Some(true)
            {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message,
            };
            if fields.len() != 3 {
                return Err(parse_err(format!(
                    "expected 3 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let count = |s: &str| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|e| parse_err(format!("bad count `{s}`: {e}")))
            };
            table.insert(
                path,
                lineno,
                fields[0],
                count(fields[1])?,
                count(fields[2])?,
            )?;
        }
        Ok(table)
    }

    pub fn get(&self, first_name: &str) -> Option<(u64, u64)> {
        self.entries.get(&first_name.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Majority gender of the name's first token. Equal counts resolve to
/// Female; names missing from the table are Unknown.
pub fn infer_gender(full_name: &str, table: &NameGenderTable) -> Gender {
    let Some(first) = full_name.split_whitespace().next() else {
        return Gender::Unknown;
    };
    let first = first.trim_matches(|c: char| !c.is_alphanumeric());
    match table.get(first) {
        Some((male, female)) if male > female => Gender::Male,
        Some(_) => Gender::Female,
        None => Gender::Unknown,
    }
}

/// Lookup surface of the first three chain steps.
pub trait GeoLookup {
    fn country_for_tld(&self, tld: &str) -> Option<String>;
    /// Country of the longest university name found in `affiliation`.
    fn country_for_university(&self, affiliation: &str) -> Option<String>;
    /// Country of the longest city name found in `affiliation`.
    fn country_for_city(&self, affiliation: &str) -> Option<String>;
}

/// Fallback for chain steps that need live services (web search, place
/// lookup, homepage scraping).
pub trait CountryProvider: Sync {
    fn infer(&self, name: &str, email: Option<&str>, affiliation: Option<&str>) -> Option<String>;
}

/// Provider that never returns a country.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoProvider;

impl CountryProvider for NoProvider {
    fn infer(&self, _: &str, _: Option<&str>, _: Option<&str>) -> Option<String> {
        None
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoTables {
    pub tld_to_country: BTreeMap<String, String>,
    pub university_to_country: BTreeMap<String, String>,
    pub city_to_country: BTreeMap<String, String>,
    pub country_to_economy: BTreeMap<String, Economy>,
}

const BUNDLED_GEO: &str = include_str!("../data/geo_tables.json");

impl GeoTables {
    /// Tables shipped with the crate: ccTLDs, a selection of universities
    /// and large cities, and the advanced/developing split of the IMF World
    /// Economic Outlook (October 2019).
    pub fn bundled() -> Self {
        let tables: GeoTables =
            serde_json::from_str(BUNDLED_GEO).expect("bundled geo tables parse");
        debug_assert!(tables.validate().is_ok());
        tables
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let tables: GeoTables =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?;
        tables.validate()?;
        Ok(tables)
    }

    /// Every country code referenced by a lookup table must have a known
    /// economy class.
    pub fn validate(&self) -> Result<()> {
        for map in [
            &self.tld_to_country,
            &self.university_to_country,
            &self.city_to_country,
        ] {
            for code in map.values() {
                match self.country_to_economy.get(code) {
                    Some(Economy::Advanced | Economy::Developing) => {}
                    _ => return Err(Error::UnmappedCountry(code.clone())),
                }
            }
        }
        Ok(())
    }
}

fn is_boundary(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
}

/// Longest key of `map` occurring in `text` on word boundaries,
/// case-insensitively. Equal lengths resolve to the smaller key.
fn longest_match<'a>(map: &'a BTreeMap<String, String>, text: &str) -> Option<&'a String> {
    let hay = text.to_lowercase();
    let mut best: Option<(usize, &String)> = None;
    for (key, code) in map {
        let needle = key.to_lowercase();
        if needle.is_empty() {
            continue;
        }
        let hit = hay
            .match_indices(&needle)
            .any(|(i, m)| is_boundary(&hay, i, i + m.len()));
        let len = needle.chars().count();
        if hit && best.is_none_or(|(l, _)| len > l) {
            best = Some((len, code));
        }
    }
    best.map(|(_, code)| code)
}

impl GeoLookup for GeoTables {
    fn country_for_tld(&self, tld: &str) -> Option<String> {
        self.tld_to_country.get(&tld.to_lowercase()).cloned()
    }

    fn country_for_university(&self, affiliation: &str) -> Option<String> {
        longest_match(&self.university_to_country, affiliation).cloned()
    }

    fn country_for_city(&self, affiliation: &str) -> Option<String> {
        longest_match(&self.city_to_country, affiliation).cloned()
    }
}

/// Top-level domain of an email address or bare domain
/// (`a@cs.ox.ac.uk` → `uk`, `Verified email at mit.edu` → `edu`).
pub fn email_tld(email: &str) -> Option<String> {
    let domain = match email.rfind('@') {
        Some(i) => &email[i + 1..],
        None => email.split_whitespace().next_back()?,
    };
    let domain = domain.trim().trim_end_matches('.');
    let tld = domain.rsplit('.').next()?;
    (domain.contains('.') && !tld.is_empty() && tld.chars().all(|c| c.is_ascii_alphabetic()))
        .then(|| tld.to_ascii_lowercase())
}

/// Runs chain steps 1–3 without a fallback provider.
pub fn infer_country(
    email: Option<&str>,
    affiliation: Option<&str>,
    tables: &impl GeoLookup,
) -> Option<String> {
    infer_country_with("", email, affiliation, tables, &NoProvider)
}

pub fn infer_country_with(
    name: &str,
    email: Option<&str>,
    affiliation: Option<&str>,
    tables: &impl GeoLookup,
    provider: &dyn CountryProvider,
) -> Option<String> {
    if let Some(code) = email
        .and_then(email_tld)
        .and_then(|t| tables.country_for_tld(&t))
    {
        return Some(code);
    }
    if let Some(aff) = affiliation {
        if let Some(code) = tables.country_for_university(aff) {
            return Some(code);
        }
        if let Some(code) = tables.country_for_city(aff) {
            return Some(code);
        }
    }
    provider.infer(name, email, affiliation)
}

pub fn economy_of(country: &str, tables: &GeoTables) -> Result<Economy> {
    match tables.country_to_economy.get(country) {
        Some(e @ (Economy::Advanced | Economy::Developing)) => Ok(*e),
        _ => Err(Error::UnmappedCountry(country.to_string())),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    #[serde(default)]
    pub email: Option<String>,
    #[serde(default)]
    pub affiliation: Option<String>,
}

#[derive(Deserialize)]
struct RawContact {
    author_id: serde_json::Value,
    #[serde(flatten)]
    contact: Contact,
}

/// Reads `contacts.jsonl`: `{author_id, email?, affiliation?}` per line.
pub fn load_contacts(path: impl AsRef<Path>) -> Result<HashMap<String, Contact>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawContact = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let id = match raw.author_id {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("bad author_id {other}"),
                })
            }
        };
        if out.insert(id.clone(), raw.contact).is_some() {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line: i + 1,
                key: id,
            });
        }
    }
    Ok(out)
}

/// An author whose label could not be filled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unresolved {
    pub author_id: String,
    pub variable: GroupVariable,
    pub reason: String,
}

/// Label counts after attribution (before imputation), plus the authors that
/// stayed Unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub gender: VariableStats,
    pub country: VariableStats,
    pub unresolved: Vec<Unresolved>,
}

impl CoverageReport {
    pub fn of(authors: &AuthorTable) -> Self {
        CoverageReport {
            gender: variable_stats(authors, GroupVariable::Gender),
            country: variable_stats(authors, GroupVariable::Country),
            unresolved: Vec::new(),
        }
    }

    /// `variable,value,count,fraction`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["variable", "value", "count", "fraction"])
            .map_err(|e| csv_error(path, e))?;
        for stats in [&self.gender, &self.country] {
            for row in &stats.rows {
                w.write_record([
                    stats.variable.name(),
                    row.value,
                    &row.count.to_string(),
                    &row.fraction.to_string(),
                ])
                .map_err(|e| csv_error(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    }
}

fn attribute_one(
    author: &AuthorRecord,
    names: &NameGenderTable,
    geo: &GeoTables,
    contact: Option<&Contact>,
    provider: &dyn CountryProvider,
) -> (AuthorRecord, Vec<Unresolved>) {
    let mut out = author.clone();
    let mut unresolved = Vec::new();
    let mut miss = |variable, reason: String| {
        unresolved.push(Unresolved {
            author_id: author.author_id.clone(),
            variable,
            reason,
        })
    };
    if out.gender == Gender::Unknown {
        out.gender = infer_gender(&author.name, names);
        if out.gender == Gender::Unknown {
            miss(GroupVariable::Gender, "first name not in table".into());
        }
    }
    if out.economy == Economy::Unknown {
        let email = contact.and_then(|c| c.email.as_deref());
        let affiliation = contact.and_then(|c| c.affiliation.as_deref());
        match infer_country_with(&author.name, email, affiliation, geo, provider) {
            Some(code) => match economy_of(&code, geo) {
                Ok(e) => out.economy = e,
                Err(e) => miss(GroupVariable::Country, e.to_string()),
            },
            None => miss(GroupVariable::Country, "no country found".into()),
        }
    }
    (out, unresolved)
}

/// Fills Unknown gender and economy labels where inference succeeds. Known
/// labels are never overwritten.
pub fn attribute_all(
    authors: &AuthorTable,
    names: &NameGenderTable,
    geo: &GeoTables,
    contacts: &HashMap<String, Contact>,
) -> (AuthorTable, CoverageReport) {
    attribute_all_with(
        authors,
        names,
        geo,
        contacts,
        &NoProvider,
        ExecMode::default(),
    )
}

pub fn attribute_all_with(
    authors: &AuthorTable,
    names: &NameGenderTable,
    geo: &GeoTables,
    contacts: &HashMap<String, Contact>,
    provider: &dyn CountryProvider,
    mode: ExecMode,
) -> (AuthorTable, CoverageReport) {
    let results = exec::map(authors.rows(), mode, |a| {
        attribute_one(a, names, geo, contacts.get(&a.author_id), provider)
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut unresolved = Vec::new();
    for (row, misses) in results {
        rows.push(row);
        unresolved.extend(misses);
    }
    let table = AuthorTable::from_rows(rows).expect("keys unchanged from a valid table");
    let mut report = CoverageReport::of(&table);
    report.unresolved = unresolved;
    (table, report)
}
