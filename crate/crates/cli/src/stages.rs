//! One function per subcommand. Each stage reads the artifacts of the
//! stages before it and writes only into its own subdirectory of `out`.

use std::path::{Path, PathBuf};

use codeaug::augmentor::{augment_dataset, AugmentOptions, AugmentPaths, MockClient, RemoteClient, RewriteClient};
use codeaug::corpus::{dataset_stats, AugKind, AugmentationMap, Dataset, DEFAULT_TOKEN_CEILING};
use codeaug::eval::{evaluate, export_embeddings, ExportOptions};
use codeaug::neural::{BiEncoderParams, CrossEncoderParams};
use codeaug::pipeline::{
    build_training_set, run_sweep, train_filter_model, train_retriever, write_sweep_csv, ExperimentConfig, SeedSummary,
    SweepParam,
};
use codeaug::synth::{generate, SynthConfig};
use codeaug::{Error, Result};
use serde::Serialize;

use crate::config::{ClientKind, RunConfig};

pub const AUGMENT_DIR: &str = "augment";
pub const FILTER_MODEL_DIR: &str = "filter-model";
pub const FILTER_DIR: &str = "filter";
pub const TRAIN_DIR: &str = "train";
pub const EVAL_DIR: &str = "eval";
pub const SWEEP_DIR: &str = "sweep";

pub struct Export {
    pub project: bool,
    pub sample: Option<usize>,
}

fn stage_dir(cfg: &RunConfig, stage: &str) -> Result<PathBuf> {
    let dir = cfg.out.join(stage);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn seed_dir(cfg: &RunConfig, stage: &str, seed: u64) -> PathBuf {
    cfg.out.join(stage).join(format!("seed-{seed}"))
}

/// Fail with a pointer to the subcommand that produces `path`.
fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            hint: format!("run `codeaug {producer}` first"),
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn train_set(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.train.as_deref().ok_or_else(|| {
        Error::validation("no training data: set `train` in the config or pass --train (`codeaug synth` writes a corpus)")
    })?;
    Dataset::load(path, cfg.train_codebase.as_deref())
}

fn test_set(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .test
        .as_deref()
        .ok_or_else(|| Error::validation("no test data: set `test` in the config or pass --test"))?;
    Dataset::load(path, cfg.test_codebase.as_deref())
}

fn augment_maps(cfg: &RunConfig, train: &Dataset) -> Result<(AugmentationMap, AugmentationMap)> {
    let paths = AugmentPaths::in_dir(&cfg.out.join(AUGMENT_DIR));
    require(&paths.query_map, "augment")?;
    require(&paths.code_map, "augment")?;
    Ok((
        AugmentationMap::load(&paths.query_map, AugKind::Query, Some(train))?,
        AugmentationMap::load(&paths.code_map, AugKind::Code, Some(train))?,
    ))
}

#[derive(Serialize)]
struct LossTrace<'a> {
    seed: u64,
    source: &'a str,
    pairs: usize,
    epoch_losses: &'a [f64],
}

pub fn synth(cfg: &SynthConfig, out: &Path) -> Result<()> {
    let corpus = generate(cfg)?;
    corpus.train.save_pairs(&out.join("train.jsonl"))?;
    corpus.test.save_pairs(&out.join("test.jsonl"))?;
    corpus.test.save_codebase(&out.join("test_codebase.jsonl"))?;
    println!(
        "wrote {} training pairs, {} test queries and a {}-code test codebase to {}",
        corpus.train.len(),
        corpus.test.len(),
        corpus.test.codebase.len(),
        out.display()
    );
    Ok(())
}

pub fn stats(cfg: &RunConfig) -> Result<()> {
    let exp = cfg.experiment()?;
    let tok = &exp.retriever.tokenizer;
    let mut summary = serde_json::Map::new();
    let train = dataset_stats(&train_set(cfg)?, tok, DEFAULT_TOKEN_CEILING)?;
    summary.insert("train".into(), serde_json::to_value(train).expect("stats serialize"));
    if cfg.test.is_some() {
        let test = dataset_stats(&test_set(cfg)?, tok, DEFAULT_TOKEN_CEILING)?;
        summary.insert("test".into(), serde_json::to_value(test).expect("stats serialize"));
    }
    println!("{}", serde_json::to_string_pretty(&summary).expect("stats serialize"));
    Ok(())
}

pub fn augment(cfg: &RunConfig) -> Result<()> {
    let exp = cfg.experiment()?;
    let train = train_set(cfg)?;
    let client: Box<dyn RewriteClient> = match cfg.client {
        ClientKind::Mock => Box::new(MockClient::new(cfg.mock_seed)),
        ClientKind::Remote => Box::new(RemoteClient::from_env()?),
    };
    let dir = stage_dir(cfg, AUGMENT_DIR)?;
    let opts = AugmentOptions {
        model_name: cfg.model_name.clone(),
        parallelism: cfg.parallelism,
        enforce_length: true,
        output: Some(AugmentPaths::in_dir(&dir)),
    };
    let out = augment_dataset(&train, client.as_ref(), &exp.budget, &opts)?;
    println!(
        "augment: {} query and {} code variants, {} requests, {} failures, {} origins resumed",
        out.dict_q.len(),
        out.dict_c.len(),
        out.requests,
        out.failures.len(),
        out.resumed
    );
    Ok(())
}

pub fn train_filter(cfg: &RunConfig) -> Result<()> {
    let exp = cfg.experiment()?;
    let train = train_set(cfg)?;
    stage_dir(cfg, FILTER_MODEL_DIR)?;
    for &seed in &exp.seeds {
        let trained = train_filter_model(&train, &exp.filter_model, seed)?;
        let dir = seed_dir(cfg, FILTER_MODEL_DIR, seed);
        write_json(
            &dir.join("loss.json"),
            &LossTrace {
                seed,
                source: "original",
                pairs: train.len(),
                epoch_losses: &trained.epoch_losses,
            },
        )?;
        trained.params.save(&dir.join("cross_encoder.json"))?;
        println!(
            "train-filter: seed {seed} final loss {:.4}",
            trained.epoch_losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn load_filter_model(cfg: &RunConfig, exp: &ExperimentConfig, seed: u64) -> Result<Option<CrossEncoderParams>> {
    if !exp.filtering {
        return Ok(None);
    }
    let path = seed_dir(cfg, FILTER_MODEL_DIR, seed).join("cross_encoder.json");
    require(&path, "train-filter")?;
    CrossEncoderParams::load(&path).map(Some)
}

pub fn filter(cfg: &RunConfig) -> Result<()> {
    let exp = cfg.experiment()?;
    let train = train_set(cfg)?;
    let (dict_q, dict_c) = augment_maps(cfg, &train)?;
    let models = exp
        .seeds
        .iter()
        .map(|&s| load_filter_model(cfg, &exp, s))
        .collect::<Result<Vec<_>>>()?;
    stage_dir(cfg, FILTER_DIR)?;
    for (&seed, model) in exp.seeds.iter().zip(&models) {
        let keep_all = codeaug::filter::TableScorer::new(1.0);
        let scorer: &dyn codeaug::filter::PairScorer = match model {
            Some(m) => m,
            None => &keep_all,
        };
        let (d_aug, report) = build_training_set(&train, &dict_q, &dict_c, scorer, &exp, seed)?;
        let dir = seed_dir(cfg, FILTER_DIR, seed);
        d_aug.save_pairs(&dir.join("d_aug.jsonl"))?;
        report.save(&dir.join("report.json"))?;
        let t = &report.totals;
        println!(
            "filter: seed {seed} kept {}/{} codes, {}/{} queries, {} training pairs",
            t.codes_kept,
            t.codes_scored,
            t.queries_kept,
            t.queries_scored,
            d_aug.len()
        );
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, original: bool) -> Result<()> {
    let exp = cfg.experiment()?;
    let base = if original { Some(train_set(cfg)?) } else { None };
    let inputs = exp
        .seeds
        .iter()
        .map(|&seed| match &base {
            Some(ds) => Ok(ds.clone()),
            None => {
                let path = seed_dir(cfg, FILTER_DIR, seed).join("d_aug.jsonl");
                require(&path, "filter")?;
                Dataset::load(&path, None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    stage_dir(cfg, TRAIN_DIR)?;
    for (&seed, ds) in exp.seeds.iter().zip(&inputs) {
        let trained = train_retriever(ds, &exp.retriever, seed)?;
        let dir = seed_dir(cfg, TRAIN_DIR, seed);
        write_json(
            &dir.join("loss.json"),
            &LossTrace {
                seed,
                source: if original { "original" } else { "augmented" },
                pairs: ds.len(),
                epoch_losses: &trained.epoch_losses,
            },
        )?;
        trained.params.save(&dir.join("bi_encoder.json"))?;
        println!(
            "train: seed {seed} on {} pairs, final loss {:.4}",
            ds.len(),
            trained.epoch_losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig, export: Option<&Export>) -> Result<()> {
    let exp = cfg.experiment()?;
    let test = test_set(cfg)?;
    let models = exp
        .seeds
        .iter()
        .map(|&seed| {
            let path = seed_dir(cfg, TRAIN_DIR, seed).join("bi_encoder.json");
            require(&path, "train")?;
            BiEncoderParams::load(&path)
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = stage_dir(cfg, EVAL_DIR)?;
    let config = serde_json::to_value(&exp).expect("config serializes");
    let mut reports = Vec::with_capacity(models.len());
    for (&seed, model) in exp.seeds.iter().zip(&models) {
        let mut report = evaluate(model, &test, &exp.eval)?;
        report.seeds = vec![seed];
        report.config = config.clone();
        if let Some(x) = export {
            let opts = ExportOptions {
                project: x.project,
                sample: x.sample,
                seed,
            };
            export_embeddings(model, &test, &dir.join(format!("embeddings-seed-{seed}.csv")), &opts)?;
        }
        reports.push(report);
    }
    let summary = SeedSummary::from_reports(reports)?;
    summary.save(&dir.join("report.json"))?;
    let r1 = summary.mean.r_at.get(&1).copied().unwrap_or(f64::NAN);
    let r1_sd = summary.std.r_at.get(&1).copied().unwrap_or(f64::NAN);
    println!(
        "eval: MRR {:.4} (±{:.4})  R@1 {:.4} (±{:.4})  align {:.4}  uniformity {:.4}  over seeds {:?}",
        summary.mean.mrr,
        summary.std.mrr,
        r1,
        r1_sd,
        summary.mean.align_loss,
        summary.mean.uniformity_loss,
        exp.seeds
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig, param: SweepParam, values: &[f64]) -> Result<()> {
    let exp = cfg.experiment()?;
    let train = train_set(cfg)?;
    let test = test_set(cfg)?;
    let (dict_q, dict_c) = augment_maps(cfg, &train)?;
    let rows = run_sweep(&train, &test, &dict_q, &dict_c, &exp, param, values)?;
    let path = stage_dir(cfg, SWEEP_DIR)?.join(format!("{}.csv", param.slug()));
    write_sweep_csv(&rows, &path)?;
    for r in &rows {
        println!("{} = {}: MRR {:.4} (±{:.4})  R@1 {:.4}", param.slug(), r.value, r.mrr, r.mrr_std, r.r1);
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn pipeline(cfg: &RunConfig) -> Result<()> {
    // check inputs before spending time on the early stages
    train_set(cfg)?;
    test_set(cfg)?;
    augment(cfg)?;
    if cfg.filtering {
        train_filter(cfg)?;
    }
    filter(cfg)?;
    train(cfg, false)?;
    eval(cfg, None)
}
