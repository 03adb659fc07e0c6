//! Multi-seed augment, filter and retrain experiments.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augmentor::{augment_dataset, AugmentOptions, AugmentOutcome, MockClient};
use crate::corpus::{AugmentationMap, Dataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, format_sig9, EvalOptions, EvalReport};
use crate::filter::{filter_augmented, subsample_augmentations, FilterConfig, FilterReport, PairScorer, TableScorer};
use crate::neural::{
    train_bi_encoder, train_cross_encoder, BiEncoderParams, CrossEncoderParams, TokenizerConfig, TrainConfig, Trained,
};
use crate::prompting::AugmentationBudget;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub budget: AugmentationBudget,
    /// Bi-encoder retriever.
    pub retriever: TrainConfig,
    /// Cross-encoder used as the filter.
    pub filter_model: TrainConfig,
    /// Thresholds; the seed is replaced by the run seed.
    pub filter: FilterConfig,
    /// When false every augmentation is kept.
    pub filtering: bool,
    /// Augmented pairs kept per original pair; `None` keeps all survivors.
    pub n_aug: Option<f64>,
    pub eval: EvalOptions,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            budget: AugmentationBudget::default(),
            retriever: TrainConfig::bi_encoder(),
            filter_model: TrainConfig::cross_encoder(),
            filter: FilterConfig::default(),
            filtering: true,
            n_aug: None,
            eval: EvalOptions::default(),
            seeds: vec![1, 2, 3],
        }
    }
}

impl ExperimentConfig {
    /// Settings that train the small from-scratch models to something
    /// useful on the synthetic corpus in seconds: scaled-up learning rates,
    /// a 4096-bucket vocabulary and five augmented pairs per original.
    pub fn desk_scale() -> Self {
        let tokenizer = TokenizerConfig::with_buckets(4096);
        ExperimentConfig {
            retriever: TrainConfig {
                lr_scale: 300.0,
                epochs: 8,
                tokenizer: tokenizer.clone(),
                ..TrainConfig::bi_encoder()
            },
            filter_model: TrainConfig {
                lr_scale: 30.0,
                epochs: 200,
                hidden: 256,
                tokenizer,
                ..TrainConfig::cross_encoder()
            },
            n_aug: Some(5.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        self.retriever.validate()?;
        self.filter_model.validate()?;
        self.filter.validate()?;
        if let Some(n) = self.n_aug {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(Error::validation(format!("n_aug must be a non-negative number, got {n}")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("at least one seed is required"));
        }
        Ok(())
    }
}

/// Augment every pair of `ds` with the offline mock client.
pub fn mock_augment(ds: &Dataset, budget: &AugmentationBudget, seed: u64) -> Result<AugmentOutcome> {
    augment_dataset(ds, &MockClient::new(seed), budget, &AugmentOptions::default())
}

pub fn train_filter_model(train: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<Trained<CrossEncoderParams>> {
    train_cross_encoder(&train.pairs, &TrainConfig { seed, ..cfg.clone() })
}

/// Filter (or keep everything when filtering is off) and subsample to
/// `n_aug`.
pub fn build_training_set(
    train: &Dataset,
    dict_q: &AugmentationMap,
    dict_c: &AugmentationMap,
    scorer: &dyn PairScorer,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(Dataset, FilterReport)> {
    let fcfg = FilterConfig { seed, ..cfg.filter.clone() };
    let keep_all = TableScorer::new(1.0);
    let scorer: &dyn PairScorer = if cfg.filtering { scorer } else { &keep_all };
    let (d_aug, report) = filter_augmented(train, dict_q, dict_c, scorer, &fcfg)?;
    let d_aug = match cfg.n_aug {
        Some(n) => subsample_augmentations(&d_aug, train, n, seed)?,
        None => d_aug,
    };
    Ok((d_aug, report))
}

pub fn train_retriever(d_aug: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<Trained<BiEncoderParams>> {
    train_bi_encoder(&d_aug.pairs, &TrainConfig { seed, ..cfg.clone() })
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub filter_report: FilterReport,
    pub train_pairs: usize,
    pub epoch_losses: Vec<f64>,
    pub report: EvalReport,
}

/// Filter, subsample, train and evaluate for one seed. `filter_model` is
/// only consulted when filtering is on.
pub fn run_seed(
    train: &Dataset,
    test: &Dataset,
    dict_q: &AugmentationMap,
    dict_c: &AugmentationMap,
    filter_model: &dyn PairScorer,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<SeedRun> {
    let (d_aug, filter_report) = build_training_set(train, dict_q, dict_c, filter_model, cfg, seed)?;
    let trained = train_retriever(&d_aug, &cfg.retriever, seed)?;
    let mut report = evaluate(&trained.params, test, &cfg.eval)?;
    report.seeds = vec![seed];
    Ok(SeedRun {
        seed,
        filter_report,
        train_pairs: d_aug.len(),
        epoch_losses: trained.epoch_losses,
        report,
    })
}

/// Sample mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStd {
    pub mrr: f64,
    pub r_at: BTreeMap<usize, f64>,
    pub align_loss: f64,
    pub uniformity_loss: f64,
}

/// Seed-averaged report with the spread and the individual runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    #[serde(flatten)]
    pub mean: EvalReport,
    pub std: MetricStd,
    pub per_seed: Vec<EvalReport>,
}

impl SeedSummary {
    pub fn from_reports(reports: Vec<EvalReport>) -> Result<Self> {
        let first = reports.first().ok_or_else(|| Error::validation("no seed reports to summarize"))?;
        let stat = |f: &dyn Fn(&EvalReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
        let (mrr, mrr_sd) = stat(&|r| r.mrr);
        let (align, align_sd) = stat(&|r| r.align_loss);
        let (unif, unif_sd) = stat(&|r| r.uniformity_loss);
        let mut r_at = BTreeMap::new();
        let mut r_at_sd = BTreeMap::new();
        for &k in first.r_at.keys() {
            let (m, s) = stat(&|r| r.r_at.get(&k).copied().unwrap_or(f64::NAN));
            r_at.insert(k, m);
            r_at_sd.insert(k, s);
        }
        let mean = EvalReport {
            mrr,
            r_at,
            align_loss: align,
            uniformity_loss: unif,
            queries: first.queries,
            codebase_size: first.codebase_size,
            seeds: reports.iter().flat_map(|r| r.seeds.iter().copied()).collect(),
            config: first.config.clone(),
        };
        Ok(SeedSummary {
            mean,
            std: MetricStd {
                mrr: mrr_sd,
                r_at: r_at_sd,
                align_loss: align_sd,
                uniformity_loss: unif_sd,
            },
            per_seed: reports,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::io(path, e.into()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Train a filter per seed and run the full experiment for every seed.
pub fn run_experiment(
    train: &Dataset,
    test: &Dataset,
    dict_q: &AugmentationMap,
    dict_c: &AugmentationMap,
    cfg: &ExperimentConfig,
) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let model = if cfg.filtering {
                Some(train_filter_model(train, &cfg.filter_model, seed)?.params)
            } else {
                None
            };
            let scorer: &dyn PairScorer = match &model {
                Some(m) => m,
                None => &NeverCalled,
            };
            run_seed(train, test, dict_q, dict_c, scorer, cfg, seed)
        })
        .collect()
}

struct NeverCalled;

impl PairScorer for NeverCalled {
    fn score_pair(&self, _: &str, _: &str) -> Result<f64> {
        Err(Error::validation("no filter model was trained"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    ThetaQ,
    ThetaC,
    NAug,
    Lr,
}

impl SweepParam {
    pub const ALL: [SweepParam; 4] = [SweepParam::ThetaQ, SweepParam::ThetaC, SweepParam::NAug, SweepParam::Lr];

    pub fn slug(self) -> &'static str {
        match self {
            SweepParam::ThetaQ => "theta-q",
            SweepParam::ThetaC => "theta-c",
            SweepParam::NAug => "n-aug",
            SweepParam::Lr => "lr",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.slug() == s)
    }

    /// `base` with this parameter set to `value`. The learning rate sweep
    /// moves the retriever's base rate.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> ExperimentConfig {
        let mut cfg = base.clone();
        match self {
            SweepParam::ThetaQ => cfg.filter.theta_q = value,
            SweepParam::ThetaC => cfg.filter.theta_c = value,
            SweepParam::NAug => cfg.n_aug = Some(value),
            SweepParam::Lr => cfg.retriever.learning_rate = value,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub mrr: f64,
    pub r1: f64,
    pub mrr_std: f64,
    pub r1_std: f64,
}

/// One row per value. Filter models depend only on the seed, so they are
/// trained once and shared by every grid point.
pub fn run_sweep(
    train: &Dataset,
    test: &Dataset,
    dict_q: &AugmentationMap,
    dict_c: &AugmentationMap,
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    base.validate()?;
    if values.is_empty() {
        return Err(Error::validation("a sweep needs at least one value"));
    }
    let configs: Vec<ExperimentConfig> = values.iter().map(|&v| param.apply(base, v)).collect();
    for c in &configs {
        c.validate()?;
    }
    let models: Vec<Option<CrossEncoderParams>> = base
        .seeds
        .iter()
        .map(|&s| {
            Ok(if base.filtering {
                Some(train_filter_model(train, &base.filter_model, s)?.params)
            } else {
                None
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(values.len());
    for (cfg, &value) in configs.iter().zip(values) {
        let mut mrrs = Vec::new();
        let mut r1s = Vec::new();
        for (&seed, model) in base.seeds.iter().zip(&models) {
            let scorer: &dyn PairScorer = match model {
                Some(m) => m,
                None => &NeverCalled,
            };
            let run = run_seed(train, test, dict_q, dict_c, scorer, cfg, seed)?;
            mrrs.push(run.report.mrr);
            r1s.push(run.report.r_at.get(&1).copied().unwrap_or(f64::NAN));
        }
        let (mrr, mrr_std) = mean_std(&mrrs);
        let (r1, r1_std) = mean_std(&r1s);
        rows.push(SweepRow {
            param,
            value,
            mrr,
            r1,
            mrr_std,
            r1_std,
        });
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "param,value,mrr,r1,mrr_std,r1_std";

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{SWEEP_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.param.slug(),
            format_sig9(r.value),
            format_sig9(r.mrr),
            format_sig9(r.r1),
            format_sig9(r.mrr_std),
            format_sig9(r.r1_std)
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn sweep_slugs_round_trip() {
        for p in SweepParam::ALL {
            assert_eq!(SweepParam::from_slug(p.slug()), Some(p));
        }
        assert_eq!(SweepParam::from_slug("theta"), None);
    }

    #[test]
    fn sweep_apply_moves_one_knob() {
        let base = ExperimentConfig::default();
        let c = SweepParam::ThetaC.apply(&base, 0.8);
        assert_eq!(c.filter.theta_c, 0.8);
        assert_eq!(c.filter.theta_q, base.filter.theta_q);
        assert_eq!(SweepParam::NAug.apply(&base, 5.0).n_aug, Some(5.0));
    }
}
