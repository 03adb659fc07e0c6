//! Cross-encoder filtering of augmented pairs into the training set.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{AugKind, AugmentationMap, CodeEntry, Dataset, QueryCodePair};
use crate::error::{Error, Result};
use crate::neural::CrossEncoderParams;
use crate::rng;

/// Anything that scores how well a query matches a code, in [0, 1].
pub trait PairScorer: Sync {
    fn score_pair(&self, query: &str, code: &str) -> Result<f64>;
}

impl PairScorer for CrossEncoderParams {
    fn score_pair(&self, query: &str, code: &str) -> Result<f64> {
        self.score_text(query, code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub theta_q: f64,
    pub theta_c: f64,
    pub seed: u64,
    /// Worker threads used for scoring.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    4
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            theta_q: 0.95,
            theta_c: 0.75,
            seed: 0,
            parallelism: default_parallelism(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("theta_q", self.theta_q), ("theta_c", self.theta_c)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.parallelism == 0 {
            return Err(Error::validation("parallelism must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeDecision {
    pub text: String,
    pub score: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDecision {
    pub text: String,
    pub score: f64,
    pub kept: bool,
    /// The code a kept query was paired with.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub paired_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginReport {
    pub origin_id: u64,
    pub codes: Vec<CodeDecision>,
    pub queries: Vec<QueryDecision>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterTotals {
    pub codes_scored: usize,
    pub codes_kept: usize,
    pub codes_dropped: usize,
    pub queries_scored: usize,
    pub queries_kept: usize,
    pub queries_dropped: usize,
    pub pairs_in: usize,
    pub pairs_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub config: FilterConfig,
    pub origins: Vec<OriginReport>,
    pub totals: FilterTotals,
}

impl FilterReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::io(path, e.into()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// One origin's pass: score its code variants against the original query,
/// then its query variants against the original code.
fn filter_origin(
    pair: &QueryCodePair,
    dict_q: &AugmentationMap,
    dict_c: &AugmentationMap,
    model: &dyn PairScorer,
    cfg: &FilterConfig,
) -> Result<(OriginReport, Vec<(String, String)>)> {
    let mut rng = rng::derive(cfg.seed, &[pair.id]);
    let mut added = Vec::new();
    let mut code_list = vec![pair.code.clone()];
    let mut codes = Vec::new();
    for v in dict_c.variants(pair.id) {
        let score = model.score_pair(&pair.query, &v.text)?;
        let kept = score >= cfg.theta_c;
        if kept {
            added.push((pair.query.clone(), v.text.clone()));
            code_list.push(v.text.clone());
        }
        codes.push(CodeDecision {
            text: v.text.clone(),
            score,
            kept,
        });
    }
    let mut queries = Vec::new();
    for v in dict_q.variants(pair.id) {
        let score = model.score_pair(&v.text, &pair.code)?;
        let kept = score >= cfg.theta_q;
        let paired_code = if kept {
            let c = code_list[rng.gen_range(0..code_list.len())].clone();
            added.push((v.text.clone(), c.clone()));
            Some(c)
        } else {
            None
        };
        queries.push(QueryDecision {
            text: v.text.clone(),
            score,
            kept,
            paired_code,
        });
    }
    Ok((
        OriginReport {
            origin_id: pair.id,
            codes,
            queries,
        },
        added,
    ))
}

/// Builds the augmented training set: the originals, then for each pair in
/// dataset order its kept code variants followed by its kept query
/// variants. New pairs get ids above the largest original id.
pub fn filter_augmented(
    ds: &Dataset,
    dict_q: &AugmentationMap,
    dict_c: &AugmentationMap,
    model: &dyn PairScorer,
    cfg: &FilterConfig,
) -> Result<(Dataset, FilterReport)> {
    cfg.validate()?;
    if dict_q.kind != AugKind::Query || dict_c.kind != AugKind::Code {
        return Err(Error::validation("expected a query map and a code map"));
    }
    dict_q.validate(ds)?;
    dict_c.validate(ds)?;

    type Outcome = Result<(OriginReport, Vec<(String, String)>)>;
    let mut results: Vec<Option<Outcome>> = Vec::new();
    results.resize_with(ds.pairs.len(), || None);
    let chunk = ds.pairs.len().div_ceil(cfg.parallelism).max(1);
    std::thread::scope(|s| {
        for (pairs, slots) in ds.pairs.chunks(chunk).zip(results.chunks_mut(chunk)) {
            s.spawn(move || {
                for (p, slot) in pairs.iter().zip(slots.iter_mut()) {
                    *slot = Some(filter_origin(p, dict_q, dict_c, model, cfg));
                }
            });
        }
    });

    let mut pairs = ds.pairs.clone();
    let mut codebase = ds.codebase.clone();
    let mut known: HashSet<String> = codebase.iter().map(|c| c.code.clone()).collect();
    let mut next_id = ds.pairs.iter().map(|p| p.id).max().map_or(0, |m| m + 1);
    let mut next_code = ds.codebase.iter().map(|c| c.code_id).max().map_or(0, |m| m + 1);
    let mut origins = Vec::with_capacity(ds.pairs.len());
    let mut totals = FilterTotals {
        pairs_in: ds.pairs.len(),
        ..Default::default()
    };
    for r in results {
        let (report, added) = r.expect("every origin was processed")?;
        for c in &report.codes {
            totals.codes_scored += 1;
            totals.codes_kept += c.kept as usize;
        }
        for q in &report.queries {
            totals.queries_scored += 1;
            totals.queries_kept += q.kept as usize;
        }
        for (query, code) in added {
            if known.insert(code.clone()) {
                codebase.push(CodeEntry {
                    code_id: next_code,
                    code: code.clone(),
                });
                next_code += 1;
            }
            pairs.push(QueryCodePair::new(next_id, query, code));
            next_id += 1;
        }
        origins.push(report);
    }
    totals.codes_dropped = totals.codes_scored - totals.codes_kept;
    totals.queries_dropped = totals.queries_scored - totals.queries_kept;
    totals.pairs_out = pairs.len();
    let d_aug = Dataset::new(pairs, codebase)?;
    Ok((
        d_aug,
        FilterReport {
            config: *cfg,
            origins,
            totals,
        },
    ))
}

/// Keeps `round(n_aug * |D|)` of the augmented pairs (all originals are
/// kept), chosen uniformly under `seed`.
pub fn subsample_augmentations(d_aug: &Dataset, d: &Dataset, n_aug: f64, seed: u64) -> Result<Dataset> {
    if !(n_aug >= 0.0) || !n_aug.is_finite() {
        return Err(Error::validation(format!("n_aug must be a non-negative number, got {n_aug}")));
    }
    let original: HashSet<u64> = d.pairs.iter().map(|p| p.id).collect();
    let augmented: Vec<usize> = (0..d_aug.pairs.len())
        .filter(|&i| !original.contains(&d_aug.pairs[i].id))
        .collect();
    let target = ((n_aug * d.pairs.len() as f64).round() as usize).min(augmented.len());
    let mut chosen = augmented.clone();
    chosen.shuffle(&mut rng::derive_str(seed, "subsample", &[]));
    chosen.truncate(target);
    let chosen: HashSet<usize> = chosen.into_iter().collect();
    let pairs: Vec<QueryCodePair> = d_aug
        .pairs
        .iter()
        .enumerate()
        .filter(|(i, p)| original.contains(&p.id) || chosen.contains(i))
        .map(|(_, p)| p.clone())
        .collect();
    let used: HashSet<&str> = pairs.iter().map(|p| p.code.as_str()).collect();
    let base: HashSet<&str> = d.codebase.iter().map(|c| c.code.as_str()).collect();
    let codebase: Vec<CodeEntry> = d_aug
        .codebase
        .iter()
        .filter(|c| base.contains(c.code.as_str()) || used.contains(c.code.as_str()))
        .cloned()
        .collect();
    Dataset::new(pairs, codebase)
}

/// Scores looked up from a table, for tests and demonstrations.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    pub scores: HashMap<(String, String), f64>,
    pub fallback: f64,
}

impl TableScorer {
    pub fn new(fallback: f64) -> Self {
        TableScorer {
            scores: HashMap::new(),
            fallback,
        }
    }

    pub fn set(&mut self, query: &str, code: &str, score: f64) {
        self.scores.insert((query.to_string(), code.to_string()), score);
    }
}

impl PairScorer for TableScorer {
    fn score_pair(&self, query: &str, code: &str) -> Result<f64> {
        Ok(*self
            .scores
            .get(&(query.to_string(), code.to_string()))
            .unwrap_or(&self.fallback))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds() -> Dataset {
        Dataset::from_pairs(vec![
            QueryCodePair::new(1, "sum list", "def s(xs): return sum(xs)"),
            QueryCodePair::new(2, "max value", "def m(xs): return max(xs)"),
        ])
        .unwrap()
    }

    #[test]
    fn no_augmentations_is_identity() {
        let d = ds();
        let (out, report) = filter_augmented(
            &d,
            &AugmentationMap::new(AugKind::Query),
            &AugmentationMap::new(AugKind::Code),
            &TableScorer::new(1.0),
            &FilterConfig::default(),
        )
        .unwrap();
        assert_eq!(out, d);
        assert_eq!(report.totals.pairs_out, 2);
    }

    #[test]
    fn boundary_is_inclusive() {
        let d = ds();
        let mut dc = AugmentationMap::new(AugKind::Code);
        dc.push(1, "def s(v): return sum(v)");
        let mut sc = TableScorer::new(0.0);
        sc.set("sum list", "def s(v): return sum(v)", 0.75);
        let cfg = FilterConfig::default();
        let (out, report) = filter_augmented(&d, &AugmentationMap::new(AugKind::Query), &dc, &sc, &cfg).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.pairs[2].id, 3);
        assert_eq!(out.codebase.len(), 3);
        assert!(report.origins[0].codes[0].kept);
        let strict = FilterConfig { theta_c: 0.7500001, ..cfg };
        let (out, _) = filter_augmented(&d, &AugmentationMap::new(AugKind::Query), &dc, &sc, &strict).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn mismatched_maps_are_rejected() {
        let d = ds();
        let mut dq = AugmentationMap::new(AugKind::Query);
        dq.push(99, "orphan");
        let r = filter_augmented(&d, &dq, &AugmentationMap::new(AugKind::Code), &TableScorer::new(1.0), &FilterConfig::default());
        assert!(matches!(r, Err(Error::Validation(_))));
        let r = filter_augmented(
            &d,
            &AugmentationMap::new(AugKind::Code),
            &AugmentationMap::new(AugKind::Code),
            &TableScorer::new(1.0),
            &FilterConfig::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn thresholds_are_validated() {
        assert!(FilterConfig { theta_q: 1.2, ..Default::default() }.validate().is_err());
        assert!(FilterConfig { theta_c: -0.1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn subsample_bounds() {
        let d = ds();
        assert!(subsample_augmentations(&d, &d, -1.0, 0).is_err());
        assert_eq!(subsample_augmentations(&d, &d, 3.0, 0).unwrap(), d);
    }
}
