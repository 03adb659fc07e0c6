//! Flat key-value run configuration, read from TOML or JSON and then
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use codeaug::eval::{EvalOptions, UniformityMode};
use codeaug::filter::FilterConfig;
use codeaug::neural::{Activation, TokenizerConfig, TrainConfig};
use codeaug::pipeline::ExperimentConfig;
use codeaug::prompting::AugmentationBudget;
use codeaug::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub train_codebase: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub test_codebase: Option<PathBuf>,
    pub out: PathBuf,

    pub client: ClientKind,
    pub mock_seed: u64,
    pub model_name: String,
    pub parallelism: usize,

    pub n_query: usize,
    pub n_code_per_technique: usize,
    pub alpha: f64,

    pub theta_q: f64,
    pub theta_c: f64,
    pub filtering: bool,
    pub n_aug: Option<f64>,
    pub seeds: Vec<u64>,

    pub hash_buckets: usize,
    pub max_tokens: usize,

    pub bi_learning_rate: f64,
    pub bi_lr_scale: f64,
    pub bi_weight_decay: f64,
    pub bi_batch_size: usize,
    pub bi_epochs: usize,
    pub bi_dim: usize,
    pub temperature: f64,

    pub cross_learning_rate: f64,
    pub cross_lr_scale: f64,
    pub cross_weight_decay: f64,
    pub cross_batch_size: usize,
    pub cross_epochs: usize,
    pub cross_dim: usize,
    pub cross_hidden: usize,
    pub cross_activation: Activation,

    pub ks: Vec<usize>,
    pub align_alpha: f64,
    pub uniformity_t: f64,
    pub uniformity: UniformityMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_experiment(&ExperimentConfig::desk_scale())
    }
}

impl RunConfig {
    pub fn from_experiment(e: &ExperimentConfig) -> Self {
        let (bi, cross) = (&e.retriever, &e.filter_model);
        RunConfig {
            train: None,
            train_codebase: None,
            test: None,
            test_codebase: None,
            out: PathBuf::from("runs"),
            client: ClientKind::Mock,
            mock_seed: 7,
            model_name: "gpt-3.5-turbo-0301".to_string(),
            parallelism: e.filter.parallelism,
            n_query: e.budget.n_query,
            n_code_per_technique: e.budget.n_code_per_technique,
            alpha: e.budget.alpha,
            theta_q: e.filter.theta_q,
            theta_c: e.filter.theta_c,
            filtering: e.filtering,
            n_aug: e.n_aug,
            seeds: e.seeds.clone(),
            hash_buckets: bi.tokenizer.hash_buckets,
            max_tokens: bi.tokenizer.max_tokens,
            bi_learning_rate: bi.learning_rate,
            bi_lr_scale: bi.lr_scale,
            bi_weight_decay: bi.weight_decay,
            bi_batch_size: bi.batch_size,
            bi_epochs: bi.epochs,
            bi_dim: bi.dim,
            temperature: bi.temperature,
            cross_learning_rate: cross.learning_rate,
            cross_lr_scale: cross.lr_scale,
            cross_weight_decay: cross.weight_decay,
            cross_batch_size: cross.batch_size,
            cross_epochs: cross.epochs,
            cross_dim: cross.dim,
            cross_hidden: cross.hidden,
            cross_activation: cross.activation,
            ks: e.eval.ks.clone(),
            align_alpha: e.eval.align_alpha,
            uniformity_t: e.eval.uniformity_t,
            uniformity: e.eval.uniformity,
        }
    }

    /// Parse by extension: `.json` is JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| parse_err(e.line(), e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| {
                let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
                parse_err(line, e.message().to_string())
            })
        }
    }

    fn tokenizer(&self) -> TokenizerConfig {
        TokenizerConfig {
            max_tokens: self.max_tokens,
            ..TokenizerConfig::with_buckets(self.hash_buckets)
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let e = ExperimentConfig {
            budget: AugmentationBudget {
                n_query: self.n_query,
                n_code_per_technique: self.n_code_per_technique,
                alpha: self.alpha,
            },
            retriever: TrainConfig {
                learning_rate: self.bi_learning_rate,
                lr_scale: self.bi_lr_scale,
                weight_decay: self.bi_weight_decay,
                batch_size: self.bi_batch_size,
                temperature: self.temperature,
                epochs: self.bi_epochs,
                dim: self.bi_dim,
                hidden: self.bi_dim,
                tokenizer: self.tokenizer(),
                ..TrainConfig::bi_encoder()
            },
            filter_model: TrainConfig {
                learning_rate: self.cross_learning_rate,
                lr_scale: self.cross_lr_scale,
                weight_decay: self.cross_weight_decay,
                batch_size: self.cross_batch_size,
                epochs: self.cross_epochs,
                dim: self.cross_dim,
                hidden: self.cross_hidden,
                activation: self.cross_activation,
                tokenizer: self.tokenizer(),
                ..TrainConfig::cross_encoder()
            },
            filter: FilterConfig {
                theta_q: self.theta_q,
                theta_c: self.theta_c,
                seed: 0,
                parallelism: self.parallelism,
            },
            filtering: self.filtering,
            n_aug: self.n_aug,
            eval: EvalOptions {
                ks: self.ks.clone(),
                align_alpha: self.align_alpha,
                uniformity_t: self.uniformity_t,
                uniformity: self.uniformity,
            },
            seeds: self.seeds.clone(),
        };
        e.validate()?;
        if self.parallelism == 0 {
            return Err(Error::validation("parallelism must be at least 1"));
        }
        Ok(e)
    }
}
