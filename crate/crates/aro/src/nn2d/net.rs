//! Attention network over per-anchor features with hand-written
//! reverse-mode gradients, flat-indexed parameters, and token masking.
//!
//! Per-anchor features (r, ||r||, d) are embedded to the model dimension,
//! passed through `layers` self-attention + feedforward blocks with residual
//! connections (no positional encoding), mean-pooled, and decoded by a
//! single linear unit with a logistic squash.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{AroError, Result};
use crate::nn2d::shape::AroFeature2D;

pub const FEATURE_DIM: usize = 4;
const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub hidden_dim: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { model_dim: 64, heads: 4, layers: 3, hidden_dim: 128 }
    }
}

impl NetConfig {
    /// Small configuration for exhaustive finite-difference checks.
    pub fn toy() -> Self {
        NetConfig { model_dim: 8, heads: 4, layers: 3, hidden_dim: 16 }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.heads == 0 || self.layers == 0 || self.hidden_dim == 0 {
            return Err(AroError::InvalidArgument("network dims must be positive".into()));
        }
        if self.model_dim % self.heads != 0 {
            return Err(AroError::InvalidArgument("model_dim must be divisible by heads".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let d = self.model_dim;
        let h = self.hidden_dim;
        let embed = FEATURE_DIM * d + d;
        let per_layer = 4 * (d * d + d) + (d * h + h) + (h * d + d);
        embed + self.layers * per_layer + d + 1
    }
}

/// Parameter offsets within the flat vector, per layer.
struct Layout {
    embed_w: usize,
    embed_b: usize,
    layers: Vec<LayerOffsets>,
    decoder_w: usize,
    decoder_b: usize,
}

#[derive(Clone, Copy)]
struct LayerOffsets {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

fn layout(cfg: &NetConfig) -> Layout {
    let d = cfg.model_dim;
    let h = cfg.hidden_dim;
    let mut off = 0usize;
    let mut take = |n: usize| {
        let o = off;
        off += n;
        o
    };
    let embed_w = take(FEATURE_DIM * d);
    let embed_b = take(d);
    let layers = (0..cfg.layers)
        .map(|_| LayerOffsets {
            wq: take(d * d),
            bq: take(d),
            wk: take(d * d),
            bk: take(d),
            wv: take(d * d),
            bv: take(d),
            wo: take(d * d),
            bo: take(d),
            w1: take(d * h),
            b1: take(h),
            w2: take(h * d),
            b2: take(d),
        })
        .collect();
    let decoder_w = take(d);
    let decoder_b = take(1);
    debug_assert_eq!(off, cfg.param_count());
    Layout { embed_w, embed_b, layers, decoder_w, decoder_b }
}

/// All trainable weights, flat-indexed for gradient checking.
#[derive(Debug, Clone)]
pub struct AttentionNetParams {
    pub config: NetConfig,
    pub values: Vec<f64>,
}

impl AttentionNetParams {
    /// Xavier-uniform initialization, deterministic per seed.
    pub fn init(config: NetConfig, seed: u64) -> Result<AttentionNetParams> {
        config.validate()?;
        let lay = layout(&config);
        let mut values = vec![0.0f64; config.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.model_dim;
        let h = config.hidden_dim;
        let fill = |start: usize, rows: usize, cols: usize, values: &mut [f64], rng: &mut ChaCha8Rng| {
            let s = (6.0 / (rows + cols) as f64).sqrt();
            for v in &mut values[start..start + rows * cols] {
                *v = rng.gen_range(-s..s);
            }
        };
        fill(lay.embed_w, FEATURE_DIM, d, &mut values, &mut rng);
        for l in &lay.layers {
            for &w in &[l.wq, l.wk, l.wv, l.wo] {
                fill(w, d, d, &mut values, &mut rng);
            }
            fill(l.w1, d, h, &mut values, &mut rng);
            fill(l.w2, h, d, &mut values, &mut rng);
        }
        fill(lay.decoder_w, d, 1, &mut values, &mut rng);
        Ok(AttentionNetParams { config, values })
    }
}

/// Intermediate activations cached by the forward pass for one query.
struct ForwardCache {
    n: usize,
    features: Vec<[f64; FEATURE_DIM]>,
    tokens: Vec<Vec<f64>>, // per layer boundary: layers+1 entries of n*d
    layer_cache: Vec<LayerCache>,
    pool: Vec<f64>,
    prob: f64,
    clamped: bool,
}

struct LayerCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,     // heads * n * n softmax weights
    head_out: Vec<f64>, // n * d concatenated head outputs
    after_attn: Vec<f64>, // n * d residual stream after attention
    ffn_pre: Vec<f64>,  // n * h pre-activation
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// out[r] = x[r] * w + b for row-major w (in_dim x out_dim); the inner loop
// runs along w's rows so access stays sequential
fn linear(x: &[f64], n: usize, in_dim: usize, w: &[f64], b: &[f64], out_dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * out_dim];
    for r in 0..n {
        let row = &mut out[r * out_dim..(r + 1) * out_dim];
        row.copy_from_slice(&b[..out_dim]);
        for i in 0..in_dim {
            let xv = x[r * in_dim + i];
            let wrow = &w[i * out_dim..(i + 1) * out_dim];
            for (o, wv) in wrow.iter().enumerate() {
                row[o] += xv * wv;
            }
        }
    }
    out
}

fn forward_cached(
    params: &AttentionNetParams,
    features: &[AroFeature2D],
    active: &[usize],
) -> ForwardCache {
    let cfg = &params.config;
    let lay = layout(cfg);
    let p = &params.values;
    let d = cfg.model_dim;
    let dh = cfg.head_dim();
    let n = active.len();
    let scale = 1.0 / (dh as f64).sqrt();

    let feats: Vec<[f64; FEATURE_DIM]> = active
        .iter()
        .map(|&a| {
            let f = features[a];
            [f.r.x, f.r.y, f.r_norm, f.d]
        })
        .collect();
    let flat_feats: Vec<f64> = feats.iter().flatten().copied().collect();
    let mut x = linear(
        &flat_feats,
        n,
        FEATURE_DIM,
        &p[lay.embed_w..],
        &p[lay.embed_b..],
        d,
    );

    let mut tokens = vec![x.clone()];
    let mut layer_cache = Vec::with_capacity(cfg.layers);
    for l in &lay.layers {
        let q = linear(&x, n, d, &p[l.wq..], &p[l.bq..], d);
        let k = linear(&x, n, d, &p[l.wk..], &p[l.bk..], d);
        let v = linear(&x, n, d, &p[l.wv..], &p[l.bv..], d);
        let mut attn = vec![0.0; cfg.heads * n * n];
        let mut head_out = vec![0.0; n * d];
        for h in 0..cfg.heads {
            let col = h * dh;
            for r in 0..n {
                // scaled dot-product scores with a stable softmax
                let mut scores = vec![0.0; n];
                let mut max_s = f64::NEG_INFINITY;
                for c in 0..n {
                    let mut acc = 0.0;
                    for e in 0..dh {
                        acc += q[r * d + col + e] * k[c * d + col + e];
                    }
                    scores[c] = acc * scale;
                    max_s = max_s.max(scores[c]);
                }
                let mut denom = 0.0;
                for s in &mut scores {
                    *s = (*s - max_s).exp();
                    denom += *s;
                }
                for c in 0..n {
                    let a = scores[c] / denom;
                    attn[(h * n + r) * n + c] = a;
                    for e in 0..dh {
                        head_out[r * d + col + e] += a * v[c * d + col + e];
                    }
                }
            }
        }
        let proj = linear(&head_out, n, d, &p[l.wo..], &p[l.bo..], d);
        let mut after_attn = x.clone();
        for i in 0..n * d {
            after_attn[i] += proj[i];
        }
        let ffn_pre = linear(&after_attn, n, d, &p[l.w1..], &p[l.b1..], cfg.hidden_dim);
        let relu: Vec<f64> = ffn_pre.iter().map(|&z| z.max(0.0)).collect();
        let ffn_out = linear(&relu, n, cfg.hidden_dim, &p[l.w2..], &p[l.b2..], d);
        let mut next = after_attn.clone();
        for i in 0..n * d {
            next[i] += ffn_out[i];
        }
        layer_cache.push(LayerCache { q, k, v, attn, head_out, after_attn, ffn_pre });
        x = next;
        tokens.push(x.clone());
    }

    let mut pool = vec![0.0; d];
    for r in 0..n {
        for e in 0..d {
            pool[e] += x[r * d + e];
        }
    }
    for e in &mut pool {
        *e /= n as f64;
    }
    let mut logit = p[lay.decoder_b];
    for e in 0..d {
        logit += pool[e] * p[lay.decoder_w + e];
    }
    let raw = sigmoid(logit);
    let prob = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    ForwardCache { n, features: feats, tokens, layer_cache, pool, prob, clamped: raw != prob }
}

/// Occupancy probability in (0, 1). `active_mask`, when given, restricts
/// attention to the listed anchors (other tokens are removed entirely).
pub fn forward(
    params: &AttentionNetParams,
    features: &[AroFeature2D],
    active_mask: Option<&[usize]>,
) -> Result<f64> {
    let active = resolve_mask(features.len(), active_mask)?;
    Ok(forward_cached(params, features, &active).prob)
}

fn resolve_mask(m: usize, active_mask: Option<&[usize]>) -> Result<Vec<usize>> {
    match active_mask {
        None => Ok((0..m).collect()),
        Some(mask) => {
            if mask.is_empty() {
                return Err(AroError::EmptyInput("anchor mask"));
            }
            for &a in mask {
                if a >= m {
                    return Err(AroError::InvalidArgument(format!(
                        "mask index {a} out of range ({m} anchors)"
                    )));
                }
            }
            Ok(mask.to_vec())
        }
    }
}

/// Mean binary cross entropy and exact gradients for a batch under the full
/// (unmasked) anchor set.
pub fn loss_and_gradients(
    params: &AttentionNetParams,
    batch: &[(Vec<AroFeature2D>, f64)],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(AroError::EmptyInput("batch"));
    }
    let mut grad = vec![0.0f64; params.values.len()];
    let mut loss = 0.0;
    for (features, label) in batch {
        let active: Vec<usize> = (0..features.len()).collect();
        let cache = forward_cached(params, features, &active);
        loss += bce(cache.prob, *label);
        backward(params, &cache, *label, 1.0 / batch.len() as f64, &mut grad);
    }
    Ok((loss / batch.len() as f64, grad))
}

pub(crate) fn bce(p: f64, y: f64) -> f64 {
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Accumulate d(scale * bce)/dparams into `grad`.
fn backward(
    params: &AttentionNetParams,
    cache: &ForwardCache,
    label: f64,
    scale_loss: f64,
    grad: &mut [f64],
) {
    let cfg = &params.config;
    let lay = layout(cfg);
    let p = &params.values;
    let d = cfg.model_dim;
    let hd = cfg.hidden_dim;
    let dh = cfg.head_dim();
    let n = cache.n;
    let attn_scale = 1.0 / (dh as f64).sqrt();

    // dL/dlogit = p - y for the unclamped sigmoid; zero when the clamp was
    // active (the clamp is flat there)
    let dlogit = if cache.clamped {
        0.0
    } else {
        (cache.prob - label) * scale_loss
    };

    grad[lay.decoder_b] += dlogit;
    let mut dpool = vec![0.0; d];
    for e in 0..d {
        grad[lay.decoder_w + e] += dlogit * cache.pool[e];
        dpool[e] = dlogit * p[lay.decoder_w + e];
    }
    let mut dx = vec![0.0; n * d];
    for r in 0..n {
        for e in 0..d {
            dx[r * d + e] = dpool[e] / n as f64;
        }
    }

    for (li, l) in lay.layers.iter().enumerate().rev() {
        let lc = &cache.layer_cache[li];
        let x_in = &cache.tokens[li];

        // FFN backward: out = after_attn + relu(after_attn W1 + b1) W2 + b2
        let relu: Vec<f64> = lc.ffn_pre.iter().map(|&z| z.max(0.0)).collect();
        let mut d_relu = vec![0.0; n * hd];
        for r in 0..n {
            let g_row = &dx[r * d..(r + 1) * d];
            for (o, &g) in g_row.iter().enumerate() {
                grad[l.b2 + o] += g;
            }
            for i in 0..hd {
                let rv = relu[r * hd + i];
                let w2_row = &p[l.w2 + i * d..l.w2 + (i + 1) * d];
                let g2_row = &mut grad[l.w2 + i * d..l.w2 + (i + 1) * d];
                let mut acc = 0.0;
                for o in 0..d {
                    g2_row[o] += rv * g_row[o];
                    acc += w2_row[o] * g_row[o];
                }
                d_relu[r * hd + i] = acc;
            }
        }
        let mut d_after = dx.clone(); // residual branch
        for r in 0..n {
            // gate the relu gradient once so the weight loops stay dense
            let gated: Vec<f64> = (0..hd)
                .map(|i| {
                    if lc.ffn_pre[r * hd + i] > 0.0 {
                        let g = d_relu[r * hd + i];
                        grad[l.b1 + i] += g;
                        g
                    } else {
                        0.0
                    }
                })
                .collect();
            for e in 0..d {
                let av = lc.after_attn[r * d + e];
                let w1_row = &p[l.w1 + e * hd..l.w1 + (e + 1) * hd];
                let g1_row = &mut grad[l.w1 + e * hd..l.w1 + (e + 1) * hd];
                let mut acc = 0.0;
                for i in 0..hd {
                    g1_row[i] += av * gated[i];
                    acc += w1_row[i] * gated[i];
                }
                d_after[r * d + e] += acc;
            }
        }

        // attention backward: after_attn = x_in + head_out Wo + bo
        let mut dx_next = d_after.clone(); // residual into x_in
        let mut d_head = vec![0.0; n * d];
        for r in 0..n {
            let g_row = &d_after[r * d..(r + 1) * d];
            for (o, &g) in g_row.iter().enumerate() {
                grad[l.bo + o] += g;
            }
            for i in 0..d {
                let hv = lc.head_out[r * d + i];
                let w_row = &p[l.wo + i * d..l.wo + (i + 1) * d];
                let gw_row = &mut grad[l.wo + i * d..l.wo + (i + 1) * d];
                let mut acc = 0.0;
                for o in 0..d {
                    gw_row[o] += hv * g_row[o];
                    acc += w_row[o] * g_row[o];
                }
                d_head[r * d + i] += acc;
            }
        }
        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        for h in 0..cfg.heads {
            let col = h * dh;
            for r in 0..n {
                // dA and softmax backward per query row
                let mut da = vec![0.0; n];
                for c in 0..n {
                    let mut acc = 0.0;
                    for e in 0..dh {
                        acc += d_head[r * d + col + e] * lc.v[c * d + col + e];
                        dv[c * d + col + e] +=
                            lc.attn[(h * n + r) * n + c] * d_head[r * d + col + e];
                    }
                    da[c] = acc;
                }
                let mut dot = 0.0;
                for c in 0..n {
                    dot += da[c] * lc.attn[(h * n + r) * n + c];
                }
                for c in 0..n {
                    let a = lc.attn[(h * n + r) * n + c];
                    let ds = a * (da[c] - dot) * attn_scale;
                    for e in 0..dh {
                        dq[r * d + col + e] += ds * lc.k[c * d + col + e];
                        dk[c * d + col + e] += ds * lc.q[r * d + col + e];
                    }
                }
            }
        }
        for (dmat, w_off, b_off) in [(&dq, l.wq, l.bq), (&dk, l.wk, l.bk), (&dv, l.wv, l.bv)] {
            for r in 0..n {
                let g_row = &dmat[r * d..(r + 1) * d];
                for (o, &g) in g_row.iter().enumerate() {
                    grad[b_off + o] += g;
                }
                for i in 0..d {
                    let xv = x_in[r * d + i];
                    let w_row = &p[w_off + i * d..w_off + (i + 1) * d];
                    let gw_row = &mut grad[w_off + i * d..w_off + (i + 1) * d];
                    let mut acc = 0.0;
                    for o in 0..d {
                        gw_row[o] += xv * g_row[o];
                        acc += w_row[o] * g_row[o];
                    }
                    dx_next[r * d + i] += acc;
                }
            }
        }
        dx = dx_next;
    }

    // embedding backward
    for r in 0..n {
        for o in 0..d {
            let g = dx[r * d + o];
            grad[lay.embed_b + o] += g;
            for i in 0..FEATURE_DIM {
                grad[lay.embed_w + i * d + o] += cache.features[r][i] * g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec2;

    fn toy_features(m: usize, seed: u64) -> Vec<AroFeature2D> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                let r = vec2(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                AroFeature2D { r, r_norm: r.norm(), d: rng.gen_range(0.05..0.8) }
            })
            .collect()
    }

    #[test]
    fn output_in_open_unit_interval() {
        let params = AttentionNetParams::init(NetConfig::toy(), 1).unwrap();
        let f = toy_features(5, 2);
        let p = forward(&params, &f, None).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn permutation_invariance() {
        let params = AttentionNetParams::init(NetConfig::toy(), 3).unwrap();
        let f = toy_features(6, 4);
        let base = forward(&params, &f, None).unwrap();
        let mut shuffled = f.clone();
        shuffled.rotate_left(2);
        let rotated = forward(&params, &shuffled, None).unwrap();
        assert!((base - rotated).abs() < 1e-12, "{base} vs {rotated}");
    }

    #[test]
    fn full_mask_equals_no_mask() {
        let params = AttentionNetParams::init(NetConfig::toy(), 5).unwrap();
        let f = toy_features(7, 6);
        let all: Vec<usize> = (0..7).collect();
        let a = forward(&params, &f, None).unwrap();
        let b = forward(&params, &f, Some(&all)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_mask_errors() {
        let params = AttentionNetParams::init(NetConfig::toy(), 5).unwrap();
        let f = toy_features(3, 6);
        assert!(forward(&params, &f, Some(&[])).is_err());
    }

    #[test]
    fn single_anchor_mask_ignores_other_features() {
        let params = AttentionNetParams::init(NetConfig::toy(), 7).unwrap();
        let mut f = toy_features(4, 8);
        let base = forward(&params, &f, Some(&[1])).unwrap();
        // perturbing a masked-out anchor's feature must not change the output
        f[3].d += 10.0;
        f[0].r.x -= 5.0;
        let after = forward(&params, &f, Some(&[1])).unwrap();
        assert_eq!(base, after);
        // but perturbing the active anchor does
        f[1].d += 1.0;
        let changed = forward(&params, &f, Some(&[1])).unwrap();
        assert!((changed - base).abs() > 1e-12);
    }

    #[test]
    fn bce_reference_values() {
        assert!((bce(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce(1.0 - PROB_CLAMP, 1.0) < 1e-6);
        assert!(bce(PROB_CLAMP, 0.0) < 1e-6);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // 2 anchors, model dim 8 toy config, exhaustive over all parameters
        let cfg = NetConfig::toy();
        let params = AttentionNetParams::init(cfg, 11).unwrap();
        let batch = vec![
            (toy_features(2, 12), 1.0),
            (toy_features(2, 13), 0.0),
            (toy_features(2, 14), 1.0),
        ];
        let (_, grad) = loss_and_gradients(&params, &batch).unwrap();
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for i in 0..params.values.len() {
            let mut plus = params.clone();
            plus.values[i] += h;
            let mut minus = params.clone();
            minus.values[i] -= h;
            let (lp, _) = loss_and_gradients(&plus, &batch).unwrap();
            let (lm, _) = loss_and_gradients(&minus, &batch).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = grad[i].abs().max(fd.abs()).max(1e-6);
            let rel = (grad[i] - fd).abs() / denom;
            max_rel = max_rel.max(rel);
            assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }
}
