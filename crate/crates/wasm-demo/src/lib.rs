//! Three pipeline pieces exposed to the browser: syntax-tree code
//! rewrites, the query length rule and the alignment/uniformity metrics.
//!
//! Every export is a thin wrapper over a plain function so the logic is
//! testable natively.

use codeaug::baselines::{site_count, natgen_rewrite, CodeTree, NatGenTransform};
use codeaug::eval::{alignment_loss, uniformity_loss};
use codeaug::prompting::{build_query_prompt, enforce_query_length, length_bounds, AugmentationBudget};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct Rewrite {
    pub transform: String,
    pub sites: usize,
    /// `None` when the transform has no site in this code.
    pub code: Option<String>,
}

/// Every transform applied once to `code`.
pub fn rewrite_all(code: &str, seed: u64) -> Result<Vec<Rewrite>, String> {
    let tree = CodeTree::parse(code).map_err(|e| e.to_string())?;
    NatGenTransform::ALL
        .into_iter()
        .map(|t| {
            let sites = site_count(&tree, t);
            let code = if sites == 0 {
                None
            } else {
                Some(natgen_rewrite(&tree, t, seed).map_err(|e| e.to_string())?)
            };
            Ok(Rewrite {
                transform: t.slug().to_string(),
                sites,
                code,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, PartialEq)]
pub struct LengthCheck {
    pub min_words: usize,
    pub max_words: usize,
    pub candidate_words: usize,
    pub accepted: bool,
    pub prompt: String,
}

pub fn check_length(original: &str, candidate: &str, alpha: f64) -> Result<LengthCheck, String> {
    let (min_words, max_words) = length_bounds(original, alpha).map_err(|e| e.to_string())?;
    let accepted = enforce_query_length(original, candidate, alpha).map_err(|e| e.to_string())?;
    let budget = AugmentationBudget {
        alpha,
        ..AugmentationBudget::default()
    };
    let prompt = build_query_prompt(original, &budget).map_err(|e| e.to_string())?;
    Ok(LengthCheck {
        min_words,
        max_words,
        candidate_words: candidate.split_whitespace().count(),
        accepted,
        prompt,
    })
}

#[derive(Debug, Deserialize)]
pub struct PairSet {
    /// `[[query vector, code vector], ...]`
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    #[serde(default = "two")]
    pub alpha: f64,
    #[serde(default = "two")]
    pub t: f64,
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Geometry {
    pub alignment: f64,
    pub uniformity: f64,
}

pub fn geometry(set: &PairSet) -> Result<Geometry, String> {
    let alignment = alignment_loss(&set.pairs, set.alpha).map_err(|e| e.to_string())?;
    let points: Vec<Vec<f64>> = set.pairs.iter().flat_map(|(q, c)| [q.clone(), c.clone()]).collect();
    let uniformity = uniformity_loss(&points, set.t).map_err(|e| e.to_string())?;
    Ok(Geometry { alignment, uniformity })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo results serialize")
}

/// JSON list of `{transform, sites, code}`.
#[wasm_bindgen(js_name = rewriteAll)]
pub fn rewrite_all_js(code: &str, seed: u32) -> Result<String, JsError> {
    rewrite_all(code, u64::from(seed)).map(|r| to_json(&r)).map_err(|e| JsError::new(&e))
}

/// JSON `{min_words, max_words, candidate_words, accepted, prompt}`.
#[wasm_bindgen(js_name = checkLength)]
pub fn check_length_js(original: &str, candidate: &str, alpha: f64) -> Result<String, JsError> {
    check_length(original, candidate, alpha).map(|r| to_json(&r)).map_err(|e| JsError::new(&e))
}

/// Takes JSON `{pairs, alpha?, t?}` and returns `{alignment, uniformity}`.
#[wasm_bindgen(js_name = geometry)]
pub fn geometry_js(input: &str) -> Result<String, JsError> {
    let set: PairSet = serde_json::from_str(input).map_err(|e| JsError::new(&e.to_string()))?;
    geometry(&set).map(|r| to_json(&r)).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewrites_cover_every_transform() {
        let code = "def total(xs):\n    s = 0\n    for x in xs:\n        s = s + x\n    return s";
        let out = rewrite_all(code, 1).unwrap();
        assert_eq!(out.len(), 5);
        let rename = out.iter().find(|r| r.transform == "rename").unwrap();
        assert!(rename.sites > 0);
        assert_ne!(rename.code.as_deref(), Some(code));
        assert!(out.iter().all(|r| (r.sites == 0) == r.code.is_none()));
        assert!(rewrite_all("def (:", 1).is_err());
    }

    #[test]
    fn length_rule_is_inclusive() {
        let r = check_length("sort a list in python", "order a list in python quickly", 1.6).unwrap();
        assert_eq!((r.min_words, r.max_words), (5, 8));
        assert_eq!(r.candidate_words, 6);
        assert!(r.accepted);
        assert!(r.prompt.contains("sort a list in python"));
        assert!(!check_length("sort a list", "sort", 1.6).unwrap().accepted);
        assert!(check_length("sort", "sort", 1.0).is_err());
    }

    #[test]
    fn geometry_of_identical_pairs() {
        let set: PairSet = serde_json::from_str(r#"{"pairs": [[[1, 0], [1, 0]], [[0, 1], [0, 1]]]}"#).unwrap();
        let g = geometry(&set).unwrap();
        assert_eq!(g.alignment, 0.0);
        // four points: two copies of e1 and two of e2; 2 of 6 pairs coincide
        let expected = ((2.0 + 4.0 * (-4.0f64).exp()) / 6.0).ln();
        assert!((g.uniformity - expected).abs() < 1e-12);
        let set: PairSet = serde_json::from_str(r#"{"pairs": [[[0, 0], [1, 0]]]}"#).unwrap();
        assert!(geometry(&set).is_err());
    }
}
