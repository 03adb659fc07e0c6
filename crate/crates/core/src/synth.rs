//! Synthetic query/code corpus with controllable lexical signal.
//!
//! Each pair is built from two concepts. Codes spell concepts with their
//! primary word; queries use the primary word or one of its synonyms.
//! Held-out queries lean on synonyms, so a retriever only finds their
//! code if it has learned that the synonyms belong together.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::augmentor::SYNONYMS;
use crate::corpus::{AugKind, AugmentationMap, CodeEntry, Dataset, QueryCodePair};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Size of the evaluation codebase; at least `n_test`.
    pub codebase_size: usize,
    /// Chance that a training query word is a synonym rather than the
    /// primary word.
    pub train_synonym_rate: f64,
    /// Same, for held-out queries.
    pub test_synonym_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 300,
            n_test: 50,
            codebase_size: 100,
            train_synonym_rate: 0.15,
            test_synonym_rate: 0.15,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train < 2 || self.n_test == 0 {
            return Err(Error::validation("need at least two training pairs and one test pair"));
        }
        if self.codebase_size < self.n_test {
            return Err(Error::validation("the codebase must hold every test code"));
        }
        let combos = SYNONYMS.len() * (SYNONYMS.len() - 1) / 2;
        if self.n_train + self.codebase_size > combos {
            return Err(Error::validation(format!("at most {combos} distinct concept pairs are available")));
        }
        for r in [self.train_synonym_rate, self.test_synonym_rate] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::validation("synonym rates must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Dataset,
    pub test: Dataset,
}

const QUERY_TEMPLATES: &[&str] = &[
    "how to {a} {b}",
    "{a} {b} in python",
    "python {a} the {b}",
    "{a} a {b}",
    "best way to {a} {b}",
    "{a} {b}",
];

const ARGS: &[&str] = &["data", "items", "value", "path", "obj", "source", "item", "val"];

const DISTRACTORS: &[&str] = &[
    "buf", "node", "helper", "ctx", "state", "tmp", "cache", "handle", "chunk", "token", "entry", "frame",
    "payload", "cursor", "batch", "res", "val", "item", "obj", "new", "out", "acc",
];

const CALLS: &[&str] = &["wrap", "prep", "emit", "apply", "tidy", "pack", "unpack", "stage", "route", "bind"];

const NOTES: &[&str] = &[
    "compute the result", "handle the edge case", "update the state", "main logic", "prepare the input",
    "helper step", "cache the value", "fast path", "see the notes", "keep it simple",
];

fn word(group: usize, synonym_rate: f64, rng: &mut Rng) -> &'static str {
    let g = SYNONYMS[group];
    if rng.gen_bool(synonym_rate) {
        g[rng.gen_range(1..g.len())]
    } else {
        g[0]
    }
}

fn query(a: usize, b: usize, synonym_rate: f64, rng: &mut Rng) -> String {
    let t = QUERY_TEMPLATES[rng.gen_range(0..QUERY_TEMPLATES.len())];
    let wa = word(a, synonym_rate, rng);
    let wb = word(b, synonym_rate, rng);
    t.replace("{a}", wa).replace("{b}", wb)
}

fn code(a: usize, b: usize, rng: &mut Rng) -> String {
    let (pa, pb) = (SYNONYMS[a][0], SYNONYMS[b][0]);
    let arg = ARGS[rng.gen_range(0..ARGS.len())];
    let steps = rng.gen_range(1..=4);
    let mut lines = Vec::with_capacity(steps + 2);
    let mut prev = arg.to_string();
    for v in DISTRACTORS.choose_multiple(rng, steps) {
        let v = if rng.gen_bool(0.3) { format!("{v}{}", rng.gen_range(1..4)) } else { v.to_string() };
        let f = CALLS[rng.gen_range(0..CALLS.len())];
        lines.push(format!("{v} = {f}({prev})"));
        prev = v;
    }
    lines.push(format!("return {}({prev})", CALLS[rng.gen_range(0..CALLS.len())]));
    if rng.gen_bool(0.5) {
        let at = rng.gen_range(0..lines.len());
        lines.insert(at, format!("# {}", NOTES[rng.gen_range(0..NOTES.len())]));
    }
    let mut out = format!("def {pa}_{pb}({arg}):");
    for l in lines {
        out.push_str("\n    ");
        out.push_str(&l);
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut r = rng::derive_str(cfg.seed, "synth", &[]);
    let n = SYNONYMS.len();
    let mut combos: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    combos.shuffle(&mut r);
    // an unordered concept pair is used at most once across the corpus
    let mut used = HashSet::new();
    let mut picks = combos.into_iter().filter(|&(a, b)| used.insert((a.min(b), a.max(b))));

    let mut seen_codes = HashSet::new();
    let mut next = |r: &mut Rng| -> Option<(usize, usize, String)> {
        for (a, b) in picks.by_ref() {
            let c = code(a, b, r);
            if seen_codes.insert(c.clone()) {
                return Some((a, b, c));
            }
        }
        None
    };
    let exhausted = || Error::validation("ran out of distinct concept pairs");

    let mut train = Vec::with_capacity(cfg.n_train);
    for id in 0..cfg.n_train as u64 {
        let (a, b, c) = next(&mut r).ok_or_else(exhausted)?;
        train.push(QueryCodePair::new(id, query(a, b, cfg.train_synonym_rate, &mut r), c));
    }
    let mut test = Vec::with_capacity(cfg.n_test);
    let mut codebase = Vec::with_capacity(cfg.codebase_size);
    for k in 0..cfg.codebase_size as u64 {
        let (a, b, c) = next(&mut r).ok_or_else(exhausted)?;
        if (k as usize) < cfg.n_test {
            test.push(QueryCodePair::new(k, query(a, b, cfg.test_synonym_rate, &mut r), c.clone()));
        }
        codebase.push(CodeEntry { code_id: k, code: c });
    }
    // shuffle so test truths are not simply the lowest code ids
    codebase.shuffle(&mut r);
    for (i, e) in codebase.iter_mut().enumerate() {
        e.code_id = i as u64;
    }
    Ok(SynthCorpus {
        train: Dataset::from_pairs(train)?,
        test: Dataset::new(test, codebase)?,
    })
}

/// Replaces a `fraction` of all code variants with a variant (or the
/// original code) of a different origin. Returns the corrupted map and the
/// `(origin_id, variant_index)` positions that were swapped.
pub fn corrupt_code_map(
    dict_c: &AugmentationMap,
    ds: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(AugmentationMap, BTreeSet<(u64, usize)>)> {
    if dict_c.kind != AugKind::Code {
        return Err(Error::validation("expected a code map"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::validation("fraction must lie in [0, 1]"));
    }
    if ds.len() < 2 {
        return Err(Error::validation("corruption needs at least two origins"));
    }
    let mut r = rng::derive_str(seed, "corrupt", &[]);
    let mut slots: Vec<(u64, usize)> = dict_c
        .entries
        .iter()
        .flat_map(|(o, vs)| (0..vs.len()).map(move |i| (*o, i)))
        .collect();
    slots.shuffle(&mut r);
    slots.truncate((fraction * slots.len() as f64).round() as usize);
    let chosen: BTreeSet<(u64, usize)> = slots.into_iter().collect();
    let mut out = dict_c.clone();
    for &(origin, i) in &chosen {
        let donor = loop {
            let p = &ds.pairs[r.gen_range(0..ds.len())];
            if p.id != origin {
                break p;
            }
        };
        let pool = dict_c.variants(donor.id);
        let text = if pool.is_empty() {
            donor.code.clone()
        } else {
            pool[r.gen_range(0..pool.len())].text.clone()
        };
        out.entries.get_mut(&origin).expect("slot exists")[i].text = text;
    }
    Ok((out, chosen))
}
