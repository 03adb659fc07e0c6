use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::loss::{bce_with_logit, contrastive_loss, contrastive_loss_grad, sigmoid};
use super::optim::AdamW;
use super::{Activation, BiEncoderParams, CrossEncoderParams, TokenizerConfig};
use crate::corpus::QueryCodePair;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Base learning rate. The step actually taken is
    /// `learning_rate * lr_scale`.
    pub learning_rate: f64,
    /// Multiplier for training a small model from scratch, where the
    /// fine-tuning rates are far too small to move anything.
    pub lr_scale: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub epochs: usize,
    pub seed: u64,
    pub dim: usize,
    pub hidden: usize,
    /// Cross-encoder hidden nonlinearity.
    #[serde(default)]
    pub activation: Activation,
    pub tokenizer: TokenizerConfig,
}

impl TrainConfig {
    pub fn bi_encoder() -> Self {
        Self {
            learning_rate: 3e-5,
            lr_scale: 1.0,
            weight_decay: 0.001,
            batch_size: 32,
            temperature: 0.05,
            epochs: 10,
            seed: 1,
            dim: 64,
            hidden: 64,
            activation: Activation::default(),
            tokenizer: TokenizerConfig::default(),
        }
    }

    pub fn cross_encoder() -> Self {
        Self {
            learning_rate: 8e-5,
            weight_decay: 0.01,
            ..Self::bi_encoder()
        }
    }

    pub fn effective_lr(&self) -> f64 {
        self.learning_rate * self.lr_scale
    }

    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        let lr = self.effective_lr();
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::validation(format!("learning rate must be >= 0, got {lr}")));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::validation("temperature must be > 0"));
        }
        if self.batch_size < 2 {
            return Err(Error::validation("batch size must be >= 2"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::validation("weight decay must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained<P> {
    pub params: P,
    /// Mean batch loss for each epoch.
    pub epoch_losses: Vec<f64>,
}

type IdPair = (Vec<u32>, Vec<u32>);

fn tokenize_pairs(tok: &TokenizerConfig, pairs: &[QueryCodePair]) -> Result<Vec<IdPair>> {
    pairs
        .iter()
        .map(|p| Ok((tok.tokenize(&p.query)?, tok.tokenize(&p.code)?)))
        .collect()
}

pub fn bi_batch_loss(params: &BiEncoderParams, batch: &[IdPair], tau: f64) -> Result<f64> {
    let q = batch
        .iter()
        .map(|(q, _)| params.encode(q))
        .collect::<Result<Vec<_>>>()?;
    let c = batch
        .iter()
        .map(|(_, c)| params.encode(c))
        .collect::<Result<Vec<_>>>()?;
    contrastive_loss(&q, &c, tau)
}

pub fn bi_batch_grad(
    params: &BiEncoderParams,
    batch: &[IdPair],
    tau: f64,
    grads: &mut BiEncoderParams,
) -> Result<f64> {
    let mut q_enc = Vec::with_capacity(batch.len());
    let mut c_enc = Vec::with_capacity(batch.len());
    for (q, c) in batch {
        q_enc.push(params.encode_ids(q)?);
        c_enc.push(params.encode_ids(c)?);
    }
    let q: Vec<Vec<f64>> = q_enc.iter().map(|e| e.output.clone()).collect();
    let c: Vec<Vec<f64>> = c_enc.iter().map(|e| e.output.clone()).collect();
    let g = contrastive_loss_grad(&q, &c, tau)?;
    for (enc, d) in q_enc.iter().zip(&g.d_queries) {
        params.backward(enc, d, grads);
    }
    for (enc, d) in c_enc.iter().zip(&g.d_codes) {
        params.backward(enc, d, grads);
    }
    Ok(g.loss)
}

/// Mean binary cross-entropy over `(query, code, target)` examples.
pub fn cross_batch_loss(params: &CrossEncoderParams, batch: &[(Vec<u32>, Vec<u32>, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for (q, c, y) in batch {
        total += bce_with_logit(params.forward(q, c)?.logit, *y);
    }
    Ok(total / batch.len() as f64)
}

pub fn cross_batch_grad(
    params: &CrossEncoderParams,
    batch: &[(Vec<u32>, Vec<u32>, f64)],
    grads: &mut CrossEncoderParams,
) -> Result<f64> {
    let n = batch.len() as f64;
    let mut total = 0.0;
    for (q, c, y) in batch {
        let fwd = params.forward(q, c)?;
        total += bce_with_logit(fwd.logit, *y);
        params.backward(&fwd, (sigmoid(fwd.logit) - y) / n, grads);
    }
    Ok(total / n)
}

fn check_size(pairs: usize, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if pairs < cfg.batch_size {
        return Err(Error::validation(format!(
            "need at least {} pairs for batch size {}, got {pairs}",
            cfg.batch_size, cfg.batch_size
        )));
    }
    Ok(())
}

fn epoch_batches(n: usize, cfg: &TrainConfig, tag: &str, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::derive_str(cfg.seed, tag, &[epoch as u64]));
    order
        .chunks(cfg.batch_size)
        .filter(|b| b.len() >= 2)
        .map(|b| b.to_vec())
        .collect()
}

pub fn train_bi_encoder(pairs: &[QueryCodePair], cfg: &TrainConfig) -> Result<Trained<BiEncoderParams>> {
    let init = BiEncoderParams::init(cfg.tokenizer.clone(), cfg.dim, cfg.seed)?;
    fit_bi_encoder(init, pairs, cfg)
}

/// Contrastive training from the given starting point.
pub fn fit_bi_encoder(
    mut params: BiEncoderParams,
    pairs: &[QueryCodePair],
    cfg: &TrainConfig,
) -> Result<Trained<BiEncoderParams>> {
    check_size(pairs.len(), cfg)?;
    params.validate()?;
    let data = tokenize_pairs(&params.tokenizer, pairs)?;
    let mut opt = AdamW::new(&params, cfg.effective_lr(), cfg.weight_decay);
    let mut grads = params.zeros_like();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        let batches = epoch_batches(data.len(), cfg, "bi-shuffle", epoch);
        for idx in &batches {
            let batch: Vec<IdPair> = idx.iter().map(|&i| data[i].clone()).collect();
            grads.embedding.fill(0.0);
            grads.projection.fill(0.0);
            grads.bias.fill(0.0);
            let loss = bi_batch_grad(&params, &batch, cfg.temperature, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step, loss });
            }
            opt.step(&mut params, &grads);
            sum += loss;
            step += 1;
        }
        epoch_losses.push(sum / batches.len().max(1) as f64);
    }
    Ok(Trained { params, epoch_losses })
}

pub fn train_cross_encoder(
    pairs: &[QueryCodePair],
    cfg: &TrainConfig,
) -> Result<Trained<CrossEncoderParams>> {
    let mut init = CrossEncoderParams::init(cfg.tokenizer.clone(), cfg.dim, cfg.hidden, cfg.seed)?;
    init.activation = cfg.activation;
    fit_cross_encoder(init, pairs, cfg)
}

/// Binary cross-entropy with each pair as a positive and one other code
/// from the same batch as its negative.
pub fn fit_cross_encoder(
    mut params: CrossEncoderParams,
    pairs: &[QueryCodePair],
    cfg: &TrainConfig,
) -> Result<Trained<CrossEncoderParams>> {
    check_size(pairs.len(), cfg)?;
    params.validate()?;
    let data = tokenize_pairs(&params.tokenizer, pairs)?;
    let mut opt = AdamW::new(&params, cfg.effective_lr(), cfg.weight_decay);
    let mut grads = params.zeros_like();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut sum = 0.0;
        let batches = epoch_batches(data.len(), cfg, "cross-shuffle", epoch);
        let mut neg_rng = rng::derive_str(cfg.seed, "cross-negatives", &[epoch as u64]);
        for idx in &batches {
            let mut examples = Vec::with_capacity(2 * idx.len());
            for (pos, &i) in idx.iter().enumerate() {
                let mut other = neg_rng.gen_range(0..idx.len() - 1);
                if other >= pos {
                    other += 1;
                }
                let (q, c) = &data[i];
                examples.push((q.clone(), c.clone(), 1.0));
                examples.push((q.clone(), data[idx[other]].1.clone(), 0.0));
            }
            for s in super::Parameters::slices_mut(&mut grads) {
                s.fill(0.0);
            }
            let loss = cross_batch_grad(&params, &examples, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step, loss });
            }
            opt.step(&mut params, &grads);
            sum += loss;
            step += 1;
        }
        epoch_losses.push(sum / batches.len().max(1) as f64);
    }
    Ok(Trained { params, epoch_losses })
}
