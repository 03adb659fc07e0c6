//! Query/code datasets, the retrieval codebase and augmentation maps, all
//! stored as newline-delimited JSON.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::TokenizerConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCodePair {
    pub id: u64,
    pub query: String,
    pub code: String,
}

impl QueryCodePair {
    pub fn new(id: u64, query: impl Into<String>, code: impl Into<String>) -> Self {
        Self {
            id,
            query: query.into(),
            code: code.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeEntry {
    pub code_id: u64,
    pub code: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Pairs,
    Codebase,
}

/// Training or evaluation data: ordered pairs plus the code pool they
/// draw from. Pairs carry code text; the codebase gives each distinct code
/// a stable id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<QueryCodePair>,
    pub codebase: Vec<CodeEntry>,
}

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

fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Load one file of a dataset. A pairs file yields a dataset with an empty
/// codebase and vice versa; combine them with [`Dataset::new`].
pub fn load_dataset(path: &Path, kind: RecordKind) -> Result<Dataset> {
    let lines = read_lines(path)?;
    if lines.is_empty() {
        return Err(Error::validation(format!("{} contains no records", path.display())));
    }
    let mut seen = HashSet::new();
    let mut ds = Dataset::default();
    for (no, text) in lines {
        match kind {
            RecordKind::Pairs => {
                let p: QueryCodePair = parse_line(path, no, &text)?;
                if p.query.trim().is_empty() || p.code.trim().is_empty() {
                    return Err(Error::validation(format!(
                        "{}:{no}: query and code must be non-empty",
                        path.display()
                    )));
                }
                if !seen.insert(p.id) {
                    return Err(Error::validation(format!(
                        "{}:{no}: duplicate pair id {}",
                        path.display(),
                        p.id
                    )));
                }
                ds.pairs.push(p);
            }
            RecordKind::Codebase => {
                let c: CodeEntry = parse_line(path, no, &text)?;
                if c.code.trim().is_empty() {
                    return Err(Error::validation(format!(
                        "{}:{no}: code must be non-empty",
                        path.display()
                    )));
                }
                if !seen.insert(c.code_id) {
                    return Err(Error::validation(format!(
                        "{}:{no}: duplicate code_id {}",
                        path.display(),
                        c.code_id
                    )));
                }
                ds.codebase.push(c);
            }
        }
    }
    Ok(ds)
}

impl Dataset {
    pub fn new(pairs: Vec<QueryCodePair>, codebase: Vec<CodeEntry>) -> Result<Self> {
        let ds = Self { pairs, codebase };
        ds.validate()?;
        Ok(ds)
    }

    /// Build a dataset whose codebase is the distinct codes of `pairs`, in
    /// first-seen order.
    pub fn from_pairs(pairs: Vec<QueryCodePair>) -> Result<Self> {
        let mut codebase: Vec<CodeEntry> = Vec::new();
        let mut seen = HashSet::new();
        for p in &pairs {
            if seen.insert(p.code.as_str()) {
                codebase.push(CodeEntry {
                    code_id: codebase.len() as u64,
                    code: p.code.clone(),
                });
            }
        }
        Self::new(pairs, codebase)
    }

    pub fn load(pairs: &Path, codebase: Option<&Path>) -> Result<Self> {
        let pairs = load_dataset(pairs, RecordKind::Pairs)?.pairs;
        match codebase {
            Some(path) => Self::new(pairs, load_dataset(path, RecordKind::Codebase)?.codebase),
            None => Self::from_pairs(pairs),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for p in &self.pairs {
            if !ids.insert(p.id) {
                return Err(Error::validation(format!("duplicate pair id {}", p.id)));
            }
            if p.query.trim().is_empty() || p.code.trim().is_empty() {
                return Err(Error::validation(format!("pair {} has empty query or code", p.id)));
            }
        }
        let mut code_ids = HashSet::new();
        for c in &self.codebase {
            if !code_ids.insert(c.code_id) {
                return Err(Error::validation(format!("duplicate code_id {}", c.code_id)));
            }
        }
        let texts: HashSet<&str> = self.codebase.iter().map(|c| c.code.as_str()).collect();
        if let Some(p) = self.pairs.iter().find(|p| !texts.contains(p.code.as_str())) {
            return Err(Error::validation(format!(
                "code of pair {} does not appear in the codebase",
                p.id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, id: u64) -> Option<&QueryCodePair> {
        self.pairs.iter().find(|p| p.id == id)
    }

    pub fn code_index(&self) -> HashMap<&str, u64> {
        self.codebase.iter().map(|c| (c.code.as_str(), c.code_id)).collect()
    }

    pub fn save_pairs(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.pairs)
    }

    pub fn save_codebase(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.codebase)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub pairs: usize,
    pub distinct_codes: usize,
    pub mean_query_words: f64,
    pub max_query_words: usize,
    pub mean_query_tokens: f64,
    pub max_query_tokens: usize,
    pub mean_code_tokens: f64,
    pub max_code_tokens: usize,
    pub token_ceiling: usize,
    /// Pair ids whose query or code exceeds the ceiling.
    pub flagged: Vec<u64>,
}

pub const DEFAULT_TOKEN_CEILING: usize = 4096;

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn dataset_stats(ds: &Dataset, tok: &TokenizerConfig, ceiling: usize) -> Result<DatasetStats> {
    if ds.pairs.is_empty() {
        return Err(Error::validation("cannot summarise an empty dataset"));
    }
    let n = ds.pairs.len() as f64;
    let words: Vec<usize> = ds.pairs.iter().map(|p| word_count(&p.query)).collect();
    let q_tokens: Vec<usize> = ds.pairs.iter().map(|p| tok.count(&p.query)).collect();
    let c_tokens: Vec<usize> = ds.pairs.iter().map(|p| tok.count(&p.code)).collect();
    let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / n;
    let max = |v: &[usize]| v.iter().copied().max().unwrap_or(0);
    let flagged = ds
        .pairs
        .iter()
        .zip(q_tokens.iter().zip(&c_tokens))
        .filter(|(_, (&q, &c))| q > ceiling || c > ceiling)
        .map(|(p, _)| p.id)
        .collect();
    let distinct: HashSet<&str> = ds.pairs.iter().map(|p| p.code.as_str()).collect();
    Ok(DatasetStats {
        pairs: ds.pairs.len(),
        distinct_codes: distinct.len(),
        mean_query_words: mean(&words),
        max_query_words: max(&words),
        mean_query_tokens: mean(&q_tokens),
        max_query_tokens: max(&q_tokens),
        mean_code_tokens: mean(&c_tokens),
        max_code_tokens: max(&c_tokens),
        token_ceiling: ceiling,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugKind {
    Query,
    Code,
}

impl AugKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AugKind::Query => "query",
            AugKind::Code => "code",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub text: String,
    pub score: Option<f64>,
}

/// Origin pair id → rewritten variants of its query or its code.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationMap {
    pub kind: AugKind,
    pub entries: BTreeMap<u64, Vec<Variant>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub origin_id: u64,
    pub kind: AugKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl AugmentationMap {
    pub fn new(kind: AugKind) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, origin_id: u64, text: impl Into<String>) {
        self.entries.entry(origin_id).or_default().push(Variant {
            text: text.into(),
            score: None,
        });
    }

    pub fn variants(&self, origin_id: u64) -> &[Variant] {
        self.entries.get(&origin_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_variant(&self, origin_id: u64, v: &Variant) -> Result<()> {
        if v.text.trim().is_empty() {
            return Err(Error::validation(format!("empty variant text for origin {origin_id}")));
        }
        if let Some(s) = v.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::validation(format!(
                    "score {s} for origin {origin_id} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Check every origin exists in `ds` and every variant is well formed.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let ids: HashSet<u64> = ds.pairs.iter().map(|p| p.id).collect();
        for (&origin, variants) in &self.entries {
            if !ids.contains(&origin) {
                return Err(Error::validation(format!(
                    "{} augmentation references unknown origin_id {origin}",
                    self.kind.as_str()
                )));
            }
            for v in variants {
                self.check_variant(origin, v)?;
            }
        }
        Ok(())
    }

    pub fn records(&self) -> impl Iterator<Item = AugmentationRecord> + '_ {
        self.entries.iter().flat_map(move |(&origin_id, vs)| {
            vs.iter().map(move |v| AugmentationRecord {
                origin_id,
                kind: self.kind,
                text: v.text.clone(),
                score: v.score,
            })
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_jsonl(path, self.records())
    }

    /// Load a map file, optionally checking referential integrity against
    /// `ds`. A missing file is an I/O error; an empty file is an empty map.
    pub fn load(path: &Path, kind: AugKind, ds: Option<&Dataset>) -> Result<Self> {
        let mut map = Self::new(kind);
        for (no, text) in read_lines(path)? {
            let r: AugmentationRecord = parse_line(path, no, &text)?;
            if r.kind != kind {
                return Err(Error::validation(format!(
                    "{}:{no}: expected a {} record, found {}",
                    path.display(),
                    kind.as_str(),
                    r.kind.as_str()
                )));
            }
            let v = Variant {
                text: r.text,
                score: r.score,
            };
            map.check_variant(r.origin_id, &v)?;
            map.entries.entry(r.origin_id).or_default().push(v);
        }
        if let Some(ds) = ds {
            map.validate(ds)?;
        }
        Ok(map)
    }
}

pub fn save_augmentation_map(map: &AugmentationMap, path: &Path) -> Result<()> {
    map.save(path)
}

pub fn load_augmentation_map(path: &Path, kind: AugKind, ds: Option<&Dataset>) -> Result<AugmentationMap> {
    AugmentationMap::load(path, kind, ds)
}

pub(crate) fn write_records<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    write_jsonl(path, records)
}

pub(crate) fn append_records<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_two_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "pairs.jsonl",
            "{\"id\": 0, \"query\": \"sort a list\", \"code\": \"sorted(xs)\"}\n\
             {\"id\": 1, \"query\": \"reverse\", \"code\": \"xs[::-1]\"}\n",
        );
        let ds = load_dataset(&p, RecordKind::Pairs).unwrap();
        assert_eq!(ds.pairs.len(), 2);
        assert_eq!(ds.pairs[1].query, "reverse");
    }

    #[test]
    fn missing_code_field_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "pairs.jsonl", "{\"id\": 0, \"query\": \"sort\"}\n");
        match load_dataset(&p, RecordKind::Pairs) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 1);
                assert!(message.contains("code"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_and_empty_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write(
            dir.path(),
            "dup.jsonl",
            "{\"id\": 3, \"query\": \"a\", \"code\": \"x\"}\n{\"id\": 3, \"query\": \"b\", \"code\": \"y\"}\n",
        );
        assert!(matches!(load_dataset(&dup, RecordKind::Pairs), Err(Error::Validation(_))));
        let empty = write(dir.path(), "empty.jsonl", "");
        assert!(matches!(load_dataset(&empty, RecordKind::Pairs), Err(Error::Validation(_))));
        let dup_code = write(
            dir.path(),
            "cb.jsonl",
            "{\"code_id\": 1, \"code\": \"x\"}\n{\"code_id\": 1, \"code\": \"y\"}\n",
        );
        assert!(matches!(load_dataset(&dup_code, RecordKind::Codebase), Err(Error::Validation(_))));
    }

    #[test]
    fn codebase_must_cover_pairs() {
        let pairs = vec![QueryCodePair::new(0, "q", "a()")];
        let cb = vec![CodeEntry { code_id: 0, code: "b()".into() }];
        assert!(Dataset::new(pairs.clone(), cb).is_err());
        let ds = Dataset::from_pairs(pairs).unwrap();
        assert_eq!(ds.codebase.len(), 1);
    }

    #[test]
    fn stats_arithmetic_and_flagging() {
        let pairs = vec![
            QueryCodePair::new(0, "one two three four", "f()"),
            QueryCodePair::new(1, "a b c d e f", "g()"),
            QueryCodePair::new(2, "a b c d e f g h", "h()"),
        ];
        let ds = Dataset::from_pairs(pairs).unwrap();
        let tok = TokenizerConfig::default();
        let s = dataset_stats(&ds, &tok, DEFAULT_TOKEN_CEILING).unwrap();
        assert_eq!(s.mean_query_words, 6.0);
        assert_eq!(s.max_query_words, 8);
        assert!(s.flagged.is_empty());

        let big = vec!["x"; 5000].join(" ");
        let ds = Dataset::from_pairs(vec![
            QueryCodePair::new(4, "short", "f()"),
            QueryCodePair::new(9, "long code", big),
        ])
        .unwrap();
        let s = dataset_stats(&ds, &tok, 4096).unwrap();
        assert_eq!(s.flagged, vec![9]);
        assert_eq!(s.max_code_tokens, 5000);
        assert!(dataset_stats(&Dataset::default(), &tok, 4096).is_err());
    }

    #[test]
    fn map_round_trip_and_integrity() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::from_pairs(vec![QueryCodePair::new(7, "q", "c")]).unwrap();
        let mut m = AugmentationMap::new(AugKind::Query);
        m.push(7, "a");
        m.push(7, "b");
        let path = dir.path().join("q.jsonl");
        m.save(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
        assert_eq!(AugmentationMap::load(&path, AugKind::Query, Some(&ds)).unwrap(), m);

        let empty = AugmentationMap::new(AugKind::Code);
        let path = dir.path().join("c.jsonl");
        empty.save(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert_eq!(AugmentationMap::load(&path, AugKind::Code, None).unwrap(), empty);

        let mut stray = AugmentationMap::new(AugKind::Query);
        stray.push(99, "x");
        let path = dir.path().join("stray.jsonl");
        stray.save(&path).unwrap();
        let err = AugmentationMap::load(&path, AugKind::Query, Some(&ds)).unwrap_err();
        assert!(err.to_string().contains("99"));
        assert!(AugmentationMap::load(&path, AugKind::Code, None).is_err());
    }

    proptest! {
        #[test]
        fn scored_maps_round_trip(
            entries in proptest::collection::btree_map(
                0u64..50,
                proptest::collection::vec(("[a-z ]{0,6}[a-z]", proptest::option::of(0.0f64..=1.0)), 1..4),
                0..6,
            )
        ) {
            let dir = tempfile::tempdir().unwrap();
            let mut m = AugmentationMap::new(AugKind::Code);
            for (k, vs) in entries {
                m.entries.insert(k, vs.into_iter().map(|(text, score)| Variant { text, score }).collect());
            }
            let path = dir.path().join("m.jsonl");
            m.save(&path).unwrap();
            prop_assert_eq!(AugmentationMap::load(&path, AugKind::Code, None).unwrap(), m);
        }

        #[test]
        fn datasets_round_trip(queries in proptest::collection::vec("[a-z]{1,5}( [a-z]{1,5}){0,4}", 1..8)) {
            let dir = tempfile::tempdir().unwrap();
            let pairs: Vec<_> = queries.iter().enumerate()
                .map(|(i, q)| QueryCodePair::new(i as u64 * 3, q.clone(), format!("f{}()", i % 3)))
                .collect();
            let ds = Dataset::from_pairs(pairs).unwrap();
            ds.save_pairs(&dir.path().join("p.jsonl")).unwrap();
            ds.save_codebase(&dir.path().join("c.jsonl")).unwrap();
            let back = Dataset::load(&dir.path().join("p.jsonl"), Some(&dir.path().join("c.jsonl"))).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
