//! Tokenizer, encoders, losses and training.

mod bi;
mod cross;
mod gradcheck;
mod loss;
mod optim;
mod tokenizer;
mod train;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use bi::{BiEncoderParams, Encoded};
pub use cross::{Activation, CrossEncoderParams, CrossForward};
pub use gradcheck::{gradient_check, GradCheckCase, GradCheckReport};
pub use loss::{
    bce_with_logit, contrastive_loss, contrastive_loss_grad, cosine_sim, dot, norm, sigmoid,
    ContrastiveGrad,
};
pub use optim::AdamW;
pub use tokenizer::{TokenizerConfig, SEPARATOR_ID};
pub use train::{
    bi_batch_grad, bi_batch_loss, cross_batch_grad, cross_batch_loss, fit_bi_encoder,
    fit_cross_encoder, train_bi_encoder, train_cross_encoder, TrainConfig, Trained,
};

use crate::error::{Error, Result};

/// Flat views over every learnable array, in a fixed order.
pub trait Parameters {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Checkpoint<T> {
    format: String,
    model: String,
    params: T,
}

const CHECKPOINT_FORMAT: &str = "codeaug-checkpoint/1";

fn save_checkpoint<T: Serialize>(model: &str, params: &T, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        model: model.to_string(),
        params,
    };
    let text = serde_json::to_string(&ckpt).map_err(|e| Error::validation(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_checkpoint<T: DeserializeOwned>(model: &str, path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint<T> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if ckpt.format != CHECKPOINT_FORMAT || ckpt.model != model {
        return Err(Error::validation(format!(
            "{} is a {} checkpoint ({}), expected {model}",
            path.display(),
            ckpt.model,
            ckpt.format
        )));
    }
    Ok(ckpt.params)
}

impl BiEncoderParams {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint("bi-encoder", self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = load_checkpoint("bi-encoder", path)?;
        p.validate()?;
        Ok(p)
    }
}

impl CrossEncoderParams {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint("cross-encoder", self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = load_checkpoint("cross-encoder", path)?;
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoints_round_trip_and_check_shape() {
        let dir = tempfile::tempdir().unwrap();
        let bi = BiEncoderParams::init(TokenizerConfig::with_buckets(256), 8, 4).unwrap();
        let path = dir.path().join("bi.json");
        bi.save(&path).unwrap();
        assert_eq!(BiEncoderParams::load(&path).unwrap(), bi);
        assert!(CrossEncoderParams::load(&path).is_err());

        let mut broken = bi.clone();
        broken.bias.pop();
        broken.save(&path).unwrap();
        assert!(matches!(BiEncoderParams::load(&path), Err(Error::Validation(_))));

        let cross = CrossEncoderParams::init(TokenizerConfig::with_buckets(256), 8, 4, 4).unwrap();
        let path = dir.path().join("cross.json");
        cross.save(&path).unwrap();
        assert_eq!(CrossEncoderParams::load(&path).unwrap(), cross);
    }
}
