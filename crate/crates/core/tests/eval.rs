use codeaug::corpus::{Dataset, QueryCodePair};
use codeaug::eval::{
    alignment_loss, evaluate, export_embeddings, mrr, ranks_from_embeddings, recall_at_k, uniformity_loss, EvalOptions,
    ExportOptions, RankList, UniformityMode,
};
use codeaug::neural::{BiEncoderParams, TokenizerConfig};
use proptest::prelude::*;

/// Sorts every code by exact cosine (integer vectors, compared through
/// squared ratios) with ascending id on ties, and reads off the truth
/// position.
fn brute_ranks(queries: &[Vec<f64>], truth: &[u64], codes: &[(u64, Vec<f64>)]) -> Vec<usize> {
    let ints = |v: &[f64]| v.iter().map(|x| *x as i128).collect::<Vec<i128>>();
    // cos(q, a) vs cos(q, b) as sign(d)·d²/|a|² compared exactly
    let cmp = |q: &[i128], a: &[i128], b: &[i128]| {
        let dot = |x: &[i128], y: &[i128]| x.iter().zip(y).map(|(p, r)| p * r).sum::<i128>();
        let (da, db) = (dot(q, a), dot(q, b));
        let (na, nb) = (dot(a, a), dot(b, b));
        let key_a = da.signum() * da * da * nb;
        let key_b = db.signum() * db * db * na;
        key_a.cmp(&key_b)
    };
    queries
        .iter()
        .zip(truth)
        .map(|(q, t)| {
            let q = ints(q);
            let mut order: Vec<(u64, Vec<i128>)> = codes.iter().map(|(id, c)| (*id, ints(c))).collect();
            order.sort_by(|a, b| cmp(&q, &b.1, &a.1).then(a.0.cmp(&b.0)));
            order.iter().position(|(id, _)| id == t).unwrap() + 1
        })
        .collect()
}

fn vecs(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    // small integer grid makes exact ties common
    prop::collection::vec(-2i32..=2, dim).prop_filter("non-zero", |v| v.iter().any(|x| *x != 0)).prop_map(|v| v.into_iter().map(f64::from).collect())
}

#[test]
fn engineered_ranks_one_two_four() {
    let codes = vec![
        (0, vec![1.0, 0.0, 0.0]),
        (1, vec![0.9, 0.1, 0.0]),
        (2, vec![0.8, 0.3, 0.0]),
        (3, vec![0.5, 0.5, 0.0]),
        (4, vec![0.0, 0.0, 1.0]),
    ];
    let queries = vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]];
    let truth = [0, 1, 3];
    let r = ranks_from_embeddings(&queries, &truth, &codes).unwrap();
    assert_eq!(r.ranks, vec![1, 2, 4]);
    assert_eq!(r.ranks, brute_ranks(&queries, &truth, &codes));
    assert!((mrr(&r).unwrap() - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn ranks_match_brute_force(
        codes in prop::collection::vec(vecs(3), 1..12),
        queries in prop::collection::vec((vecs(3), any::<prop::sample::Index>()), 1..8),
    ) {
        let codes: Vec<(u64, Vec<f64>)> = codes.into_iter().enumerate().map(|(i, v)| ((i as u64 * 7) % 13, v)).collect();
        let mut seen = std::collections::BTreeSet::new();
        let codes: Vec<_> = codes.into_iter().filter(|(id, _)| seen.insert(*id)).collect();
        let truth: Vec<u64> = queries.iter().map(|(_, ix)| codes[ix.index(codes.len())].0).collect();
        let qs: Vec<Vec<f64>> = queries.into_iter().map(|(q, _)| q).collect();
        let r = ranks_from_embeddings(&qs, &truth, &codes).unwrap();
        prop_assert_eq!(&r.ranks, &brute_ranks(&qs, &truth, &codes));
        prop_assert!(r.ranks.iter().all(|&k| k >= 1 && k <= codes.len()));
        let m = mrr(&r).unwrap();
        let brute_mrr = r.ranks.iter().map(|&k| 1.0 / k as f64).sum::<f64>() / r.ranks.len() as f64;
        prop_assert!((m - brute_mrr).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 1..=codes.len() {
            let rk = recall_at_k(&r, k).unwrap();
            prop_assert!(rk >= prev);
            prev = rk;
        }
        prop_assert!(m >= recall_at_k(&r, 1).unwrap() - 1e-15);
        prop_assert_eq!(recall_at_k(&r, codes.len()).unwrap(), 1.0);
    }

    #[test]
    fn uniformity_bounds_and_permutation(points in prop::collection::vec(vecs(4), 2..9), t in 0.5f64..4.0) {
        let u = uniformity_loss(&points, t).unwrap();
        prop_assert!(u <= 0.0);
        let mut rev = points.clone();
        rev.reverse();
        prop_assert!((uniformity_loss(&rev, t).unwrap() - u).abs() < 1e-12);
        let doubled: Vec<Vec<f64>> = points.iter().chain(points.iter()).cloned().collect();
        prop_assert!(uniformity_loss(&doubled, t).unwrap() >= u - 1e-12);
    }

    /// Duplicating point p raises the mean potential exactly when p's own
    /// mean potential (counting its new twin) is at least the current mean.
    #[test]
    fn duplicating_a_point(points in prop::collection::vec(vecs(3), 2..8), pick in any::<prop::sample::Index>()) {
        let t = 2.0;
        let unit = |v: &Vec<f64>| { let n = v.iter().map(|x| x * x).sum::<f64>().sqrt(); v.iter().map(|x| x / n).collect::<Vec<f64>>() };
        let us: Vec<Vec<f64>> = points.iter().map(unit).collect();
        let k = |a: &[f64], b: &[f64]| (-t * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp();
        let n = us.len();
        let mut s = 0.0;
        for i in 0..n { for j in i + 1..n { s += k(&us[i], &us[j]); } }
        let mean = s / (n * (n - 1) / 2) as f64;
        let p = pick.index(n);
        let own = (1.0 + (0..n).filter(|&j| j != p).map(|j| k(&us[p], &us[j])).sum::<f64>()) / n as f64;
        let before = uniformity_loss(&points, t).unwrap();
        let mut more = points.clone();
        more.push(points[p].clone());
        let after = uniformity_loss(&more, t).unwrap();
        if own >= mean + 1e-12 {
            prop_assert!(after >= before - 1e-12);
        } else if own <= mean - 1e-12 {
            prop_assert!(after <= before + 1e-12);
        }
    }

    #[test]
    fn alignment_is_permutation_invariant(pairs in prop::collection::vec((vecs(3), vecs(3)), 1..8)) {
        let a = alignment_loss(&pairs, 2.0).unwrap();
        prop_assert!(a >= 0.0 && a <= 4.0 + 1e-12);
        let mut rev = pairs.clone();
        rev.reverse();
        prop_assert!((alignment_loss(&rev, 2.0).unwrap() - a).abs() < 1e-12);
    }
}

#[test]
fn duplicating_an_outlier_can_lower_uniformity() {
    let a = vec![1.0, 0.0];
    let x = vec![-1.0, 0.0];
    let before = uniformity_loss(&[a.clone(), a.clone(), a.clone(), x.clone()], 2.0).unwrap();
    let after = uniformity_loss(&[a.clone(), a.clone(), a, x.clone(), x], 2.0).unwrap();
    assert!(after < before);
}

fn corpus(n: u64) -> Dataset {
    let words = ["sort", "list", "read", "file", "parse", "json", "merge", "dict", "split", "string", "open", "url"];
    Dataset::from_pairs(
        (0..n)
            .map(|i| {
                let a = words[(i % 12) as usize];
                let b = words[((i / 12 + 3) % 12) as usize];
                QueryCodePair::new(i, format!("{a} {b} number {i}"), format!("def {a}_{b}_{i}(x):\n    return x"))
            })
            .collect(),
    )
    .unwrap()
}

fn model() -> BiEncoderParams {
    BiEncoderParams::init(TokenizerConfig::with_buckets(4096), 64, 3).unwrap()
}

#[test]
fn export_rows_and_columns() {
    let dir = tempfile::tempdir().unwrap();
    let ds = corpus(400);
    let path = dir.path().join("emb.csv");
    let rows = export_embeddings(&model(), &ds, &path, &ExportOptions { sample: Some(300), seed: 1, project: false }).unwrap();
    assert_eq!(rows, 600);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 601);
    assert_eq!(lines[0].split(',').count(), 2 + 64 + 1);
    assert!(lines[0].starts_with("kind,id,e0,") && lines[0].ends_with(",pair_distance"));

    let proj = dir.path().join("proj.csv");
    export_embeddings(&model(), &ds, &proj, &ExportOptions { sample: Some(300), seed: 1, project: true }).unwrap();
    let text = std::fs::read_to_string(&proj).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 2 + 64 + 2 + 1);
    assert!(header.ends_with(",p0,p1,pair_distance"));
    for line in text.lines().skip(1) {
        for field in line.split(',').skip(2) {
            field.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn identical_pair_has_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset::from_pairs(vec![QueryCodePair::new(0, "same text", "same text")]).unwrap();
    let path = dir.path().join("one.csv");
    export_embeddings(&model(), &ds, &path, &ExportOptions::default()).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    for line in text.lines().skip(1) {
        assert_eq!(line.rsplit(',').next().unwrap(), "0");
    }
}

#[test]
fn evaluate_report_invariants() {
    let ds = corpus(60);
    let m = model();
    let report = evaluate(&m, &ds, &EvalOptions::default()).unwrap();
    assert_eq!(report.queries, 60);
    assert_eq!(report.codebase_size, 60);
    assert!(report.mrr > 0.0 && report.mrr <= 1.0);
    assert!(report.r_at[&1] <= report.r_at[&5] && report.r_at[&5] <= report.r_at[&10]);
    assert!(report.mrr >= report.r_at[&1]);
    assert!(report.align_loss >= 0.0 && report.uniformity_loss <= 0.0);
    let per = evaluate(&m, &ds, &EvalOptions { uniformity: UniformityMode::PerModality, ..Default::default() }).unwrap();
    assert_eq!(per.mrr, report.mrr);
    assert!(per.uniformity_loss <= 0.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    report.save(&path).unwrap();
    let back = codeaug::eval::EvalReport::load(&path).unwrap();
    assert_eq!(back.mrr, report.mrr);
    assert_eq!(back.r_at, report.r_at);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["mrr", "r_at", "align_loss", "uniformity_loss"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn rank_list_serializes() {
    let r = RankList { ranks: vec![1, 2], codebase_size: 2 };
    let s = serde_json::to_string(&r).unwrap();
    assert_eq!(serde_json::from_str::<RankList>(&s).unwrap(), r);
}
