use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tokenizer::TokenizerConfig;
use crate::error::{Error, Result};
use crate::rng;

/// Shared query/code encoder: mean of hashed token embeddings followed by
/// an affine projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiEncoderParams {
    pub tokenizer: TokenizerConfig,
    pub dim: usize,
    /// `hash_buckets × dim`, row-major.
    pub embedding: Vec<f64>,
    /// `dim × dim`, row-major (output index first).
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Intermediate values kept from the forward pass for backprop.
pub struct Encoded {
    pub ids: Vec<u32>,
    pub pooled: Vec<f64>,
    pub output: Vec<f64>,
}

impl BiEncoderParams {
    pub fn zeros(tokenizer: TokenizerConfig, dim: usize) -> Result<Self> {
        tokenizer.validate()?;
        if dim < 8 {
            return Err(Error::validation(format!("embedding width must be >= 8, got {dim}")));
        }
        Ok(Self {
            embedding: vec![0.0; tokenizer.hash_buckets * dim],
            projection: vec![0.0; dim * dim],
            bias: vec![0.0; dim],
            tokenizer,
            dim,
        })
    }

    /// Uniform embeddings, identity projection plus small noise, zero bias.
    pub fn init(tokenizer: TokenizerConfig, dim: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(tokenizer, dim)?;
        let mut r = rng::derive_str(seed, "bi-encoder-init", &[]);
        for w in p.embedding.iter_mut() {
            *w = r.gen_range(-0.5..0.5);
        }
        for i in 0..dim {
            for j in 0..dim {
                let noise = r.gen_range(-0.01..0.01);
                p.projection[i * dim + j] = if i == j { 1.0 } else { 0.0 } + noise;
            }
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        let d = self.dim;
        if d < 8 {
            return Err(Error::validation("embedding width must be >= 8"));
        }
        if self.embedding.len() != self.tokenizer.hash_buckets * d
            || self.projection.len() != d * d
            || self.bias.len() != d
        {
            return Err(Error::validation("bi-encoder weight shapes do not match config"));
        }
        if !super::Parameters::slices(self).iter().all(|s| s.iter().all(|w| w.is_finite())) {
            return Err(Error::validation("bi-encoder weights must be finite"));
        }
        Ok(())
    }

    pub fn embedding_row(&self, id: u32) -> &[f64] {
        let start = id as usize * self.dim;
        &self.embedding[start..start + self.dim]
    }

    pub fn encode_ids(&self, ids: &[u32]) -> Result<Encoded> {
        if ids.is_empty() {
            return Err(Error::validation("cannot encode an empty token sequence"));
        }
        let d = self.dim;
        let mut pooled = vec![0.0; d];
        for &id in ids {
            for (acc, w) in pooled.iter_mut().zip(self.embedding_row(id)) {
                *acc += w;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        pooled.iter_mut().for_each(|x| *x *= inv);
        let output = (0..d)
            .map(|i| {
                let row = &self.projection[i * d..(i + 1) * d];
                self.bias[i] + row.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(Encoded {
            ids: ids.to_vec(),
            pooled,
            output,
        })
    }

    pub fn encode(&self, ids: &[u32]) -> Result<Vec<f64>> {
        Ok(self.encode_ids(ids)?.output)
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<f64>> {
        self.encode(&self.tokenizer.tokenize(text)?)
    }

    /// Accumulate `∂L/∂params` into `grads` given `∂L/∂output` for one
    /// encoded sequence.
    pub fn backward(&self, enc: &Encoded, d_output: &[f64], grads: &mut BiEncoderParams) {
        let d = self.dim;
        let mut d_pooled = vec![0.0; d];
        for i in 0..d {
            let g = d_output[i];
            if g == 0.0 {
                continue;
            }
            grads.bias[i] += g;
            let row = &self.projection[i * d..(i + 1) * d];
            let grow = &mut grads.projection[i * d..(i + 1) * d];
            for j in 0..d {
                grow[j] += g * enc.pooled[j];
                d_pooled[j] += g * row[j];
            }
        }
        let inv = 1.0 / enc.ids.len() as f64;
        for &id in &enc.ids {
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
            embedding: vec![0.0; self.embedding.len()],
            projection: vec![0.0; self.projection.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }
}

impl super::Parameters for BiEncoderParams {
    fn slices(&self) -> Vec<&[f64]> {
        vec![&self.embedding, &self.projection, &self.bias]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.embedding, &mut self.projection, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_params() -> BiEncoderParams {
        let mut p = BiEncoderParams::zeros(TokenizerConfig::with_buckets(256), 8).unwrap();
        for (i, w) in p.embedding.iter_mut().enumerate() {
            *w = (i as f64 * 0.37).sin();
        }
        for i in 0..8 {
            p.projection[i * 8 + i] = 1.0;
        }
        p
    }

    #[test]
    fn single_token_identity_projection_returns_row() {
        let p = identity_params();
        assert_eq!(p.encode(&[5]).unwrap(), p.embedding_row(5));
    }

    #[test]
    fn two_tokens_average() {
        let p = identity_params();
        let out = p.encode(&[3, 9]).unwrap();
        for k in 0..8 {
            let expected = (p.embedding_row(3)[k] + p.embedding_row(9)[k]) / 2.0;
            assert!((out[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_table_gives_zero_vector() {
        let p = BiEncoderParams::zeros(TokenizerConfig::with_buckets(256), 8).unwrap();
        let v = p.encode(&[1, 2, 3]).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
        assert!(crate::neural::cosine_sim(&v, &v).is_err());
    }

    #[test]
    fn empty_ids_rejected() {
        assert!(identity_params().encode(&[]).is_err());
    }

    #[test]
    fn narrow_width_rejected() {
        assert!(BiEncoderParams::zeros(TokenizerConfig::with_buckets(256), 4).is_err());
    }
}
