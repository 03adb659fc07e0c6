use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::loss::sigmoid;
use super::tokenizer::{TokenizerConfig, SEPARATOR_ID};
use crate::error::{Error, Result};
use crate::rng;

/// Elementwise nonlinearity between the two affine layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Softplus,
    Square,
    /// `|x|`: measures how strongly the pooled vector lines up with a
    /// hidden direction regardless of sign, which is how tokens shared by
    /// the query and the code show up in a mean-pooled bag.
    #[default]
    Abs,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            // ln(1 + e^x) without overflow
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Square => x * x,
            Activation::Abs => x.abs(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Softplus => sigmoid(x),
            Activation::Square => 2.0 * x,
            Activation::Abs => x.signum(),
        }
    }
}

/// Joint scorer over `[query, SEP, code]`: mean-pooled embeddings, one
/// hidden layer and a single logistic output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEncoderParams {
    pub tokenizer: TokenizerConfig,
    pub dim: usize,
    pub hidden: usize,
    #[serde(default)]
    pub activation: Activation,
    /// `hash_buckets × dim`; row 0 is the separator.
    pub embedding: Vec<f64>,
    /// `hidden × dim`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

pub struct CrossForward {
    pub ids: Vec<u32>,
    pub pooled: Vec<f64>,
    /// Hidden pre-activations.
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logit: f64,
}

/// Half-width of the uniform embedding initialisation.
const EMBEDDING_INIT: f64 = 0.2;

/// Keep scores strictly inside (0, 1) even when the logistic saturates.
fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

impl CrossEncoderParams {
    pub fn zeros(tokenizer: TokenizerConfig, dim: usize, hidden: usize) -> Result<Self> {
        tokenizer.validate()?;
        if dim == 0 || hidden == 0 {
            return Err(Error::validation("cross-encoder widths must be positive"));
        }
        Ok(Self {
            embedding: vec![0.0; tokenizer.hash_buckets * dim],
            w1: vec![0.0; hidden * dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: vec![0.0],
            tokenizer,
            dim,
            hidden,
            activation: Activation::default(),
        })
    }

    /// Random embeddings and hidden layer; the output layer starts at zero
    /// so every untrained score is exactly 0.5.
    pub fn init(tokenizer: TokenizerConfig, dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(tokenizer, dim, hidden)?;
        let mut r = rng::derive_str(seed, "cross-encoder-init", &[]);
        for w in p.embedding.iter_mut() {
            *w = r.gen_range(-EMBEDDING_INIT..EMBEDDING_INIT);
        }
        let scale = (3.0 / dim as f64).sqrt();
        for w in p.w1.iter_mut() {
            *w = r.gen_range(-scale..scale);
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        let (d, h) = (self.dim, self.hidden);
        if self.embedding.len() != self.tokenizer.hash_buckets * d
            || self.w1.len() != h * d
            || self.b1.len() != h
            || self.w2.len() != h
            || self.b2.len() != 1
        {
            return Err(Error::validation("cross-encoder weight shapes do not match config"));
        }
        if !super::Parameters::slices(self).iter().all(|s| s.iter().all(|w| w.is_finite())) {
            return Err(Error::validation("cross-encoder weights must be finite"));
        }
        Ok(())
    }

    pub fn joint_ids(query: &[u32], code: &[u32]) -> Result<Vec<u32>> {
        if query.is_empty() || code.is_empty() {
            return Err(Error::validation("cross-encoder inputs must be non-empty"));
        }
        let mut ids = Vec::with_capacity(query.len() + code.len() + 1);
        ids.extend_from_slice(query);
        ids.push(SEPARATOR_ID);
        ids.extend_from_slice(code);
        Ok(ids)
    }

    pub fn forward(&self, query: &[u32], code: &[u32]) -> Result<CrossForward> {
        let ids = Self::joint_ids(query, code)?;
        let d = self.dim;
        let mut pooled = vec![0.0; d];
        for &id in &ids {
            let start = id as usize * d;
            for (acc, w) in pooled.iter_mut().zip(&self.embedding[start..start + d]) {
                *acc += w;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        pooled.iter_mut().for_each(|x| *x *= inv);
        let pre: Vec<f64> = (0..self.hidden)
            .map(|i| {
                let row = &self.w1[i * d..(i + 1) * d];
                self.b1[i] + row.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = pre.iter().map(|&x| self.activation.apply(x)).collect();
        let logit = self.b2[0] + self.w2.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>();
        Ok(CrossForward {
            ids,
            pooled,
            pre,
            hidden,
            logit,
        })
    }

    pub fn score(&self, query: &[u32], code: &[u32]) -> Result<f64> {
        Ok(open_unit(sigmoid(self.forward(query, code)?.logit)))
    }

    pub fn score_text(&self, query: &str, code: &str) -> Result<f64> {
        self.score(
            &self.tokenizer.tokenize(query)?,
            &self.tokenizer.tokenize(code)?,
        )
    }

    /// Accumulate gradients given `∂L/∂logit`.
    pub fn backward(&self, fwd: &CrossForward, d_logit: f64, grads: &mut CrossEncoderParams) {
        let d = self.dim;
        grads.b2[0] += d_logit;
        let mut d_pooled = vec![0.0; d];
        for i in 0..self.hidden {
            grads.w2[i] += d_logit * fwd.hidden[i];
            let d_pre = d_logit * self.w2[i] * self.activation.derivative(fwd.pre[i]);
            if d_pre == 0.0 {
                continue;
            }
            grads.b1[i] += d_pre;
            let row = &self.w1[i * d..(i + 1) * d];
            let grow = &mut grads.w1[i * d..(i + 1) * d];
            for j in 0..d {
                grow[j] += d_pre * fwd.pooled[j];
                d_pooled[j] += d_pre * row[j];
            }
        }
        let inv = 1.0 / fwd.ids.len() as f64;
        for &id in &fwd.ids {
            let start = id as usize * d;
            for (acc, g) in grads.embedding[start..start + d].iter_mut().zip(&d_pooled) {
                *acc += g * inv;
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tokenizer: self.tokenizer.clone(),
            dim: self.dim,
            hidden: self.hidden,
            activation: self.activation,
            embedding: vec![0.0; self.embedding.len()],
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0],
        }
    }
}

impl super::Parameters for CrossEncoderParams {
    fn slices(&self) -> Vec<&[f64]> {
        vec![&self.embedding, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.embedding,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}
