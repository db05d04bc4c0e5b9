//! Adam training loop with stepped learning-rate decay, plus dense image
//! reconstruction and per-anchor activation maps for a trained model.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{AroError, Result};
use crate::field::Grid2D;
use crate::geom::{vec2, Vec2};
use crate::nn2d::net::{forward, loss_and_gradients, AttentionNetParams};
use crate::nn2d::shape::{features_2d, Box2D, Sample2D, Shape2D};
use crate::par;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Learning rate is multiplied by `decay_factor` every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Print a loss line every this many epochs (0 disables logging).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            decay_factor: 0.5,
            decay_every: 100,
            epochs: 300,
            batch_size: 256,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            log_every: 10,
        }
    }
}

pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.learning_rate * cfg.decay_factor.powi((epoch / cfg.decay_every) as i32)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Train in place on labeled samples against a fixed anchor set.
///
/// Deterministic for a fixed config: shuffling uses a dedicated stream and
/// per-batch gradients are accumulated in a fixed chunk order regardless of
/// thread count.
pub fn train(
    params: &mut AttentionNetParams,
    shape: &Shape2D,
    anchors: &[Vec2],
    samples: &[Sample2D],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(AroError::EmptyInput("training samples"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(AroError::InvalidArgument("batch_size and epochs must be positive".into()));
    }
    // features depend only on (anchor, query); precompute once
    let bounds = Box2D::unit();
    let encoded: Vec<(Vec<crate::nn2d::shape::AroFeature2D>, f64)> = samples
        .iter()
        .map(|s| Ok((features_2d(shape, anchors, s.x, &bounds)?, s.label)))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x7261_696e)); // "rain"
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut m = vec![0.0f64; params.values.len()];
    let mut v = vec![0.0f64; params.values.len()];
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = lr_at_epoch(cfg, epoch);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            // split the batch across threads; summing chunk results in index
            // order keeps the reduction bitwise-stable
            let pieces = chunk_count(chunk.len());
            let partials = par::map_indexed(pieces, |pi| {
                let lo = pi * chunk.len() / pieces;
                let hi = (pi + 1) * chunk.len() / pieces;
                let sub: Vec<_> = chunk[lo..hi].iter().map(|&i| encoded[i].clone()).collect();
                let weight = (hi - lo) as f64 / chunk.len() as f64;
                loss_and_gradients(params, &sub).map(|(l, g)| (l, g, weight))
            });
            let mut grad = vec![0.0f64; params.values.len()];
            let mut loss = 0.0;
            for partial in partials {
                let (l, g, w) = partial?;
                loss += l * w;
                for (acc, gi) in grad.iter_mut().zip(&g) {
                    *acc += gi * w;
                }
            }
            if !loss.is_finite() {
                return Err(AroError::Diverged(epoch));
            }
            epoch_loss += loss;
            batches += 1;
            step += 1;
            let bc1 = 1.0 - cfg.beta1.powi(step as i32);
            let bc2 = 1.0 - cfg.beta2.powi(step as i32);
            for i in 0..params.values.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                params.values[i] -= lr * mh / (vh.sqrt() + cfg.epsilon);
            }
        }
        let mean = epoch_loss / batches as f64;
        if !mean.is_finite() {
            return Err(AroError::Diverged(epoch));
        }
        epoch_losses.push(mean);
        if cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch + 1 == cfg.epochs) {
            eprintln!("epoch {epoch:4}  lr {lr:.3e}  loss {mean:.6}");
        }
    }
    Ok(TrainReport { epoch_losses })
}

fn chunk_count(batch_len: usize) -> usize {
    #[cfg(feature = "parallel")]
    {
        // fixed piece count independent of the thread pool so the reduction
        // order never changes
        batch_len.clamp(1, 16)
    }
    #[cfg(not(feature = "parallel"))]
    {
        batch_len.clamp(1, 16)
    }
}

/// Evaluate the model at every pixel center of a `resolution`² image over the
/// given domain.
pub fn reconstruct_image(
    params: &AttentionNetParams,
    shape: &Shape2D,
    anchors: &[Vec2],
    domain: Box2D,
    resolution: usize,
) -> Result<Grid2D> {
    predict_image(params, shape, anchors, domain, resolution, None)
}

/// Per-anchor activation map: the model's output when only `anchor_id` is
/// visible to the attention stack.
pub fn anchor_activation_map(
    params: &AttentionNetParams,
    shape: &Shape2D,
    anchors: &[Vec2],
    anchor_id: usize,
    domain: Box2D,
    resolution: usize,
) -> Result<Grid2D> {
    if anchor_id >= anchors.len() {
        return Err(AroError::InvalidArgument(format!(
            "anchor {anchor_id} out of range ({} anchors)",
            anchors.len()
        )));
    }
    predict_image(params, shape, anchors, domain, resolution, Some(vec![anchor_id]))
}

fn predict_image(
    params: &AttentionNetParams,
    shape: &Shape2D,
    anchors: &[Vec2],
    domain: Box2D,
    resolution: usize,
    mask: Option<Vec<usize>>,
) -> Result<Grid2D> {
    if resolution < 2 {
        return Err(AroError::InvalidArgument("image resolution must be >= 2".into()));
    }
    let ext = domain.max - domain.min;
    if (ext.x - ext.y).abs() > 1e-9 {
        return Err(AroError::InvalidArgument("image domain must be square".into()));
    }
    let step = ext.x / resolution as f64;
    // pixel centers: origin offset by half a pixel into the domain
    let origin = domain.min + vec2(0.5, 0.5) * step;
    let values = par::map_indexed(resolution * resolution, |idx| {
        let i = idx / resolution;
        let j = idx % resolution;
        let x = origin + vec2(i as f64, j as f64) * step;
        let feats = features_2d(shape, anchors, x, &domain)?;
        forward(params, &feats, mask.as_deref())
    });
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    Ok(Grid2D { resolution: [resolution; 2], origin, spacing: step, values })
}
