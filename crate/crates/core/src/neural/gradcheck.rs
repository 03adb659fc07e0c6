//! Finite-difference check of the analytic gradients.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::train::{bi_batch_grad, bi_batch_loss, cross_batch_grad, cross_batch_loss};
use super::{BiEncoderParams, CrossEncoderParams, Parameters};
use crate::error::{Error, Result};
use crate::rng;

pub enum GradCheckCase<'a> {
    Contrastive {
        params: &'a BiEncoderParams,
        batch: &'a [(Vec<u32>, Vec<u32>)],
        temperature: f64,
    },
    CrossEntropy {
        params: &'a CrossEncoderParams,
        batch: &'a [(Vec<u32>, Vec<u32>, f64)],
    },
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
    pub coordinates: usize,
}

const MIN_COORDS: usize = 200;

/// `|a - n| / max(|a|, |n|)`, with the denominator floored so that two
/// near-zero gradients compare as equal.
fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Coordinates worth probing: embedding rows touched by the batch plus
/// every dense weight. Slice 0 is the embedding table for both models.
fn active_coords<P: Parameters>(p: &P, dim: usize, ids: &BTreeSet<u32>) -> Vec<(usize, usize)> {
    let mut coords = Vec::new();
    for &id in ids {
        for k in 0..dim {
            coords.push((0, id as usize * dim + k));
        }
    }
    for (s, slice) in p.slices().iter().enumerate().skip(1) {
        coords.extend((0..slice.len()).map(|k| (s, k)));
    }
    coords
}

fn check<P, L>(
    params: &P,
    analytic: &P,
    dim: usize,
    ids: BTreeSet<u32>,
    eps: f64,
    seed: u64,
    loss: L,
) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    L: Fn(&P) -> Result<f64>,
{
    let mut coords = active_coords(params, dim, &ids);
    coords.shuffle(&mut rng::derive_str(seed, "gradcheck", &[]));
    // all coordinates when there are few of them, otherwise at least MIN_COORDS
    let take = coords.len().min(MIN_COORDS.max(coords.len() / 2));
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_abs_analytic: 0.0,
        max_abs_numeric: 0.0,
        coordinates: take,
    };
    for &(s, k) in &coords[..take] {
        let orig = probe.slices()[s][k];
        probe.slices_mut()[s][k] = orig + eps;
        let plus = loss(&probe)?;
        probe.slices_mut()[s][k] = orig - eps;
        let minus = loss(&probe)?;
        probe.slices_mut()[s][k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.slices()[s][k];
        report.max_relative_error = report.max_relative_error.max(relative_error(a, numeric));
        report.max_abs_analytic = report.max_abs_analytic.max(a.abs());
        report.max_abs_numeric = report.max_abs_numeric.max(numeric.abs());
    }
    Ok(report)
}

/// Compare analytic gradients against central differences on a random
/// subsample of the coordinates the batch can influence.
pub fn gradient_check(case: GradCheckCase<'_>, eps: f64, seed: u64) -> Result<GradCheckReport> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::validation(format!("eps must be in [1e-6, 1e-3], got {eps}")));
    }
    match case {
        GradCheckCase::Contrastive {
            params,
            batch,
            temperature,
        } => {
            let mut grads = params.zeros_like();
            bi_batch_grad(params, batch, temperature, &mut grads)?;
            let ids = batch.iter().flat_map(|(q, c)| q.iter().chain(c)).copied().collect();
            check(params, &grads, params.dim, ids, eps, seed, |p| {
                bi_batch_loss(p, batch, temperature)
            })
        }
        GradCheckCase::CrossEntropy { params, batch } => {
            let mut grads = params.zeros_like();
            cross_batch_grad(params, batch, &mut grads)?;
            let ids = batch
                .iter()
                .flat_map(|(q, c, _)| q.iter().chain(c).copied())
                .chain(std::iter::once(super::SEPARATOR_ID))
                .collect();
            check(params, &grads, params.dim, ids, eps, seed, |p| {
                cross_batch_loss(p, batch)
            })
        }
    }
}
