//! Cosine similarity, the in-batch contrastive objective and binary
//! cross-entropy, each with its analytic gradient.

use crate::error::{Error, Result};

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::validation(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::Degenerate("cosine of a zero-norm vector".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Gradients of `cos(u, v)` with respect to `u` and `v`.
fn cosine_grad(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate("cosine of a zero-norm vector".into()));
    }
    let s = dot(u, v) / (nu * nv);
    let du = u
        .iter()
        .zip(v)
        .map(|(a, b)| b / (nu * nv) - s * a / (nu * nu))
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(a, b)| a / (nu * nv) - s * b / (nv * nv))
        .collect();
    Ok((s, du, dv))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_batch(queries: &[Vec<f64>], codes: &[Vec<f64>], tau: f64) -> Result<()> {
    if queries.len() != codes.len() {
        return Err(Error::validation(format!(
            "{} queries but {} codes",
            queries.len(),
            codes.len()
        )));
    }
    if queries.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    if !(tau > 0.0) {
        return Err(Error::validation(format!("temperature must be > 0, got {tau}")));
    }
    Ok(())
}

/// In-batch contrastive loss: for each query the matching code is the
/// positive and every other code in the batch is a negative.
pub fn contrastive_loss(queries: &[Vec<f64>], codes: &[Vec<f64>], tau: f64) -> Result<f64> {
    check_batch(queries, codes, tau)?;
    let bs = queries.len();
    let mut total = 0.0;
    for (i, q) in queries.iter().enumerate() {
        let logits = codes
            .iter()
            .map(|c| cosine_sim(q, c).map(|s| s / tau))
            .collect::<Result<Vec<_>>>()?;
        total += log_sum_exp(&logits) - logits[i];
    }
    Ok(total / bs as f64)
}

pub struct ContrastiveGrad {
    pub loss: f64,
    pub d_queries: Vec<Vec<f64>>,
    pub d_codes: Vec<Vec<f64>>,
}

pub fn contrastive_loss_grad(
    queries: &[Vec<f64>],
    codes: &[Vec<f64>],
    tau: f64,
) -> Result<ContrastiveGrad> {
    check_batch(queries, codes, tau)?;
    let bs = queries.len();
    let dim = queries[0].len();
    let mut d_queries = vec![vec![0.0; dim]; bs];
    let mut d_codes = vec![vec![0.0; dim]; bs];
    let mut loss = 0.0;
    for i in 0..bs {
        let grads = codes
            .iter()
            .map(|c| cosine_grad(&queries[i], c))
            .collect::<Result<Vec<_>>>()?;
        let logits: Vec<f64> = grads.iter().map(|g| g.0 / tau).collect();
        let lse = log_sum_exp(&logits);
        loss += lse - logits[i];
        for (j, (_, du, dv)) in grads.iter().enumerate() {
            let p = (logits[j] - lse).exp();
            let coeff = (p - if i == j { 1.0 } else { 0.0 }) / (tau * bs as f64);
            for k in 0..dim {
                d_queries[i][k] += coeff * du[k];
                d_codes[j][k] += coeff * dv[k];
            }
        }
    }
    Ok(ContrastiveGrad {
        loss: loss / bs as f64,
        d_queries,
        d_codes,
    })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `-[y ln σ(z) + (1-y) ln(1-σ(z))]`.
pub fn bce_with_logit(z: f64, target: f64) -> f64 {
    z.max(0.0) - z * target + (-z.abs()).exp().ln_1p()
}
