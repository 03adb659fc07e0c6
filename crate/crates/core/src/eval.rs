//! Retrieval metrics, representation diagnostics and embedding export.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{CodeEntry, Dataset};
use crate::error::{Error, Result};
use crate::neural::BiEncoderParams;
use crate::rng;

/// 1-based rank of each query's ground-truth code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankList {
    pub ranks: Vec<usize>,
    pub codebase_size: usize,
}

fn unit(v: &[f64], what: &str) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Degenerate(format!("{what} has a zero or non-finite embedding")));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Cosines closer than this count as tied.
const TIE_EPS: f64 = 1e-12;

/// Ranks by descending cosine; a code tied with the truth counts ahead of
/// it only when its id is smaller.
pub fn ranks_from_embeddings(queries: &[Vec<f64>], truth: &[u64], codes: &[(u64, Vec<f64>)]) -> Result<RankList> {
    if codes.is_empty() {
        return Err(Error::validation("the codebase is empty"));
    }
    if queries.len() != truth.len() {
        return Err(Error::validation("one truth id is needed per query"));
    }
    let index: HashMap<u64, usize> = codes.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
    let units = codes
        .iter()
        .map(|(id, v)| unit(v, &format!("code {id}")))
        .collect::<Result<Vec<_>>>()?;
    let mut ranks = Vec::with_capacity(queries.len());
    for (qi, (q, t)) in queries.iter().zip(truth).enumerate() {
        let &ti = index
            .get(t)
            .ok_or_else(|| Error::validation(format!("truth code {t} of query {qi} is not in the codebase")))?;
        let q = unit(q, &format!("query {qi}"))?;
        let scores: Vec<f64> = units.iter().map(|c| c.iter().zip(&q).map(|(a, b)| a * b).sum()).collect();
        let st = scores[ti];
        let ahead = scores
            .iter()
            .zip(codes)
            .filter(|(s, (id, _))| **s > st + TIE_EPS || ((**s - st).abs() <= TIE_EPS && *id < *t))
            .count();
        ranks.push(ahead + 1);
    }
    Ok(RankList {
        ranks,
        codebase_size: codes.len(),
    })
}

/// Encodes the codebase once and ranks it for each `(query, truth_code_id)`.
pub fn retrieve_ranks(model: &BiEncoderParams, queries: &[(String, u64)], codebase: &[CodeEntry]) -> Result<RankList> {
    let codes = codebase
        .iter()
        .map(|c| Ok((c.code_id, model.encode_text(&c.code)?)))
        .collect::<Result<Vec<_>>>()?;
    let q = queries
        .iter()
        .map(|(text, _)| model.encode_text(text))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<u64> = queries.iter().map(|(_, t)| *t).collect();
    ranks_from_embeddings(&q, &truth, &codes)
}

pub fn mrr(ranks: &RankList) -> Result<f64> {
    if ranks.ranks.is_empty() {
        return Err(Error::validation("no ranks to average"));
    }
    Ok(ranks.ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.ranks.len() as f64)
}

pub fn recall_at_k(ranks: &RankList, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if ranks.ranks.is_empty() {
        return Err(Error::validation("no ranks to count"));
    }
    Ok(ranks.ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.ranks.len() as f64)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean of `‖x − y‖^alpha` over normalized pairs.
pub fn alignment_loss(pairs: &[(Vec<f64>, Vec<f64>)], alpha: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::validation("alignment needs at least one pair"));
    }
    let mut total = 0.0;
    for (i, (x, y)) in pairs.iter().enumerate() {
        let (x, y) = (unit(x, &format!("pair {i} query"))?, unit(y, &format!("pair {i} code"))?);
        total += sq_dist(&x, &y).sqrt().powf(alpha);
    }
    Ok(total / pairs.len() as f64)
}

/// Log of the mean Gaussian potential over distinct unordered pairs of
/// normalized points.
pub fn uniformity_loss(points: &[Vec<f64>], t: f64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::validation("uniformity needs at least two points"));
    }
    let units = points
        .iter()
        .enumerate()
        .map(|(i, p)| unit(p, &format!("point {i}")))
        .collect::<Result<Vec<_>>>()?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            sum += (-t * sq_dist(&units[i], &units[j])).exp();
            count += 1;
        }
    }
    Ok((sum / count as f64).ln().min(0.0))
}

/// Which embeddings the uniformity expectation runs over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniformityMode {
    /// Queries and codes together.
    #[default]
    Pooled,
    /// Mean of the query-only and code-only values.
    PerModality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub align_alpha: f64,
    pub uniformity_t: f64,
    pub uniformity: UniformityMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: vec![1, 5, 10],
            align_alpha: 2.0,
            uniformity_t: 2.0,
            uniformity: UniformityMode::Pooled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr: f64,
    /// Recall keyed by cutoff.
    pub r_at: BTreeMap<usize, f64>,
    pub align_loss: f64,
    pub uniformity_loss: f64,
    pub queries: usize,
    pub codebase_size: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::io(path, e.into()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Retrieval over `test.codebase` for every test pair, plus alignment and
/// uniformity of the pairs' embeddings.
pub fn evaluate(model: &BiEncoderParams, test: &Dataset, opts: &EvalOptions) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::validation("the test set has no pairs"));
    }
    let index = test.code_index();
    let code_embs: HashMap<u64, Vec<f64>> = test
        .codebase
        .iter()
        .map(|c| Ok((c.code_id, model.encode_text(&c.code)?)))
        .collect::<Result<_>>()?;
    let mut q_embs = Vec::with_capacity(test.len());
    let mut truth = Vec::with_capacity(test.len());
    for p in &test.pairs {
        q_embs.push(model.encode_text(&p.query)?);
        truth.push(*index.get(p.code.as_str()).ok_or_else(|| {
            Error::validation(format!("code of test pair {} is missing from the codebase", p.id))
        })?);
    }
    let mut codes: Vec<(u64, Vec<f64>)> = code_embs.iter().map(|(k, v)| (*k, v.clone())).collect();
    codes.sort_by_key(|(k, _)| *k);
    let ranks = ranks_from_embeddings(&q_embs, &truth, &codes)?;

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = q_embs
        .iter()
        .zip(&truth)
        .map(|(q, t)| (q.clone(), code_embs[t].clone()))
        .collect();
    let align = alignment_loss(&pairs, opts.align_alpha)?;
    let uniform = match opts.uniformity {
        UniformityMode::Pooled => {
            let pooled: Vec<Vec<f64>> = pairs.iter().flat_map(|(q, c)| [q.clone(), c.clone()]).collect();
            uniformity_loss(&pooled, opts.uniformity_t)?
        }
        UniformityMode::PerModality => {
            let qs: Vec<Vec<f64>> = pairs.iter().map(|(q, _)| q.clone()).collect();
            let cs: Vec<Vec<f64>> = pairs.iter().map(|(_, c)| c.clone()).collect();
            (uniformity_loss(&qs, opts.uniformity_t)? + uniformity_loss(&cs, opts.uniformity_t)?) / 2.0
        }
    };
    let r_at = opts
        .ks
        .iter()
        .map(|&k| Ok((k, recall_at_k(&ranks, k)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(EvalReport {
        mrr: mrr(&ranks)?,
        r_at,
        align_loss: align,
        uniformity_loss: uniform,
        queries: ranks.ranks.len(),
        codebase_size: ranks.codebase_size,
        seeds: Vec::new(),
        config: serde_json::to_value(opts).unwrap_or_default(),
    })
}

/// `%.9g`-style rendering.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can carry into a new digit; re-render in that case
        let s = if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() > 9 && decimals > 0 {
            format!("{x:.prec$}", prec = decimals - 1)
        } else {
            s
        };
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.8e}");
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        let e: i32 = e.parse().expect("integer exponent");
        format!("{mantissa}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Top principal directions of the centered rows, by power iteration with
/// deflation.
pub fn principal_directions(rows: &[Vec<f64>], k: usize, iters: usize) -> Vec<Vec<f64>> {
    let Some(d) = rows.first().map(Vec::len) else {
        return Vec::new();
    };
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let centered: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &centered {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += r[i] * r[j] / n;
            }
        }
    }
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for c in 0..k.min(d) {
        let mut v: Vec<f64> = (0..d).map(|j| 1.0 + ((j + c) % 7) as f64 * 0.1).collect();
        for _ in 0..iters {
            let mut w: Vec<f64> = (0..d).map(|i| cov[i].iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
            for u in &dirs {
                let p: f64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                break;
            }
            v = w.into_iter().map(|x| x / norm).collect();
        }
        // deterministic sign: largest component positive
        let big = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        dirs.push(v);
    }
    dirs
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExportOptions {
    /// Append a 2-D linear projection.
    pub project: bool,
    /// Export a seeded sample of this many pairs instead of all.
    pub sample: Option<usize>,
    pub seed: u64,
}

/// Writes one row per query and per code of each exported pair. Both rows
/// of a pair share its id and its query-code distance.
pub fn export_embeddings(model: &BiEncoderParams, ds: &Dataset, path: &Path, opts: &ExportOptions) -> Result<usize> {
    let mut chosen: Vec<usize> = (0..ds.len()).collect();
    if let Some(n) = opts.sample {
        chosen.shuffle(&mut rng::derive_str(opts.seed, "export", &[]));
        chosen.truncate(n);
        chosen.sort_unstable();
    }
    let mut rows: Vec<(&str, u64, Vec<f64>, f64)> = Vec::with_capacity(chosen.len() * 2);
    for &i in &chosen {
        let p = &ds.pairs[i];
        let q = model.encode_text(&p.query)?;
        let c = model.encode_text(&p.code)?;
        let dist = sq_dist(&unit(&q, &format!("query {}", p.id))?, &unit(&c, &format!("code {}", p.id))?).sqrt();
        rows.push(("query", p.id, q, dist));
        rows.push(("code", p.id, c, dist));
    }
    let dim = model.dim;
    let dirs = if opts.project {
        principal_directions(&rows.iter().map(|r| r.2.clone()).collect::<Vec<_>>(), 2, 200)
    } else {
        Vec::new()
    };
    let mean: Vec<f64> = (0..dim)
        .map(|j| rows.iter().map(|r| r.2[j]).sum::<f64>() / rows.len().max(1) as f64)
        .collect();
    let mut out = String::from("kind,id");
    for j in 0..dim {
        write!(out, ",e{j}").unwrap();
    }
    if opts.project {
        out.push_str(",p0,p1");
    }
    out.push_str(",pair_distance\n");
    for (kind, id, v, dist) in &rows {
        write!(out, "{kind},{id}").unwrap();
        for x in v {
            write!(out, ",{}", format_sig9(*x)).unwrap();
        }
        if opts.project {
            for k in 0..2 {
                let p: f64 = dirs
                    .get(k)
                    .map(|u| v.iter().zip(&mean).zip(u).map(|((a, m), b)| (a - m) * b).sum())
                    .unwrap_or(0.0);
                write!(out, ",{}", format_sig9(p)).unwrap();
            }
        }
        writeln!(out, ",{}", format_sig9(*dist)).unwrap();
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rl(r: &[usize]) -> RankList {
        RankList {
            ranks: r.to_vec(),
            codebase_size: 100,
        }
    }

    #[test]
    fn metric_examples() {
        assert_eq!(mrr(&rl(&[1, 1, 1])).unwrap(), 1.0);
        assert!((mrr(&rl(&[1, 2, 4])).unwrap() - 0.583333333333).abs() < 1e-9);
        assert!((mrr(&rl(&[100])).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(recall_at_k(&rl(&[1, 3, 1, 2]), 1).unwrap(), 0.5);
        assert_eq!(recall_at_k(&rl(&[2]), 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&rl(&[7, 100, 3]), 100).unwrap(), 1.0);
        assert!(recall_at_k(&rl(&[1]), 0).is_err());
        assert!(mrr(&rl(&[])).is_err());
    }

    #[test]
    fn rank_examples() {
        let codes = vec![(1, vec![0.0, 1.0]), (2, vec![1.0, 0.0])];
        let r = ranks_from_embeddings(&[vec![1.0, 0.0]], &[2], &codes).unwrap();
        assert_eq!(r.ranks, vec![1]);
        // tie: truth has the smaller id
        let codes = vec![(5, vec![1.0, 0.0]), (3, vec![2.0, 0.0])];
        assert_eq!(ranks_from_embeddings(&[vec![1.0, 0.0]], &[3], &codes).unwrap().ranks, vec![1]);
        assert_eq!(ranks_from_embeddings(&[vec![1.0, 0.0]], &[5], &codes).unwrap().ranks, vec![2]);
        assert!(ranks_from_embeddings(&[vec![1.0, 0.0]], &[9], &codes).is_err());
        assert!(matches!(
            ranks_from_embeddings(&[vec![0.0, 0.0]], &[3], &codes),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn alignment_and_uniformity_examples() {
        let x = vec![1.0, 0.0];
        let y = vec![0.0, 1.0];
        assert_eq!(alignment_loss(&[(x.clone(), x.clone())], 2.0).unwrap(), 0.0);
        assert!((alignment_loss(&[(x.clone(), y.clone())], 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((alignment_loss(&[(x.clone(), y.clone()), (y.clone(), y.clone())], 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(uniformity_loss(&[x.clone(), x.clone(), x.clone()], 2.0).unwrap(), 0.0);
        assert!((uniformity_loss(&[x.clone(), y.clone()], 2.0).unwrap() + 4.0).abs() < 1e-12);
        assert!(uniformity_loss(&[x.clone()], 2.0).is_err());
        assert!(alignment_loss(&[(x, vec![0.0, 0.0])], 2.0).is_err());
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-0.5), "-0.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1e-7), "1e-07");
        assert_eq!(format_sig9(2.5e12), "2.5e+12");
        assert_eq!(format_sig9(9.9999999999), "10");
        for x in [0.1234567891234, -7.77e-3, 42.0, 6.02214076e23] {
            let back: f64 = format_sig9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn power_iteration_finds_the_dominant_axis() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64 - 25.0;
                vec![3.0 * t, 0.1 * (i % 3) as f64, 1.0 * ((i * 7) % 5) as f64]
            })
            .collect();
        let dirs = principal_directions(&rows, 2, 300);
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov = |i: usize, j: usize| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / n;
        for v in &dirs {
            let cv: Vec<f64> = (0..3).map(|i| (0..3).map(|j| cov(i, j) * v[j]).sum()).collect();
            let lambda: f64 = cv.iter().zip(v).map(|(a, b)| a * b).sum();
            for i in 0..3 {
                assert!((cv[i] - lambda * v[i]).abs() < 1e-6 * lambda.max(1.0));
            }
        }
        assert!(dirs[0][0] > 0.99);
        let dot: f64 = dirs[0].iter().zip(&dirs[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-9);
    }
}
