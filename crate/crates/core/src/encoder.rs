//! Trainable embedding network and optimizers.
//!
//! The encoder is a two-layer MLP over sparse hashed features,
//! z = W2ᵀ·relu(W1ᵀx + b1) + b2, with an optional scalar anomaly-logit
//! head. Forward and backward passes are exact and exploit input
//! sparsity: only the W1 rows of active buckets are touched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::SparseFeatures;
use crate::{Error, Result};

/// Network dimensions. `with_head` is true for methods that classify via
/// a logit (MAML, supervised fine-tune) and false for metric-based
/// methods (prototypical).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    /// Input dimension B (feature buckets).
    pub n_buckets: usize,
    /// Hidden width H1.
    pub hidden: usize,
    /// Embedding dimension D.
    pub embed_dim: usize,
    pub with_head: bool,
}

impl EncoderShape {
    pub fn new(n_buckets: usize, hidden: usize, embed_dim: usize, with_head: bool) -> Self {
        EncoderShape { n_buckets, hidden, embed_dim, with_head }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_buckets == 0 || self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// All trainable weights. W1 is row-major by bucket, W2 row-major by
/// hidden unit; `head_w` is empty when the shape has no head.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub shape: EncoderShape,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

/// Gradients, same layout as [`EncoderParams`]. Contributions from
/// multiple examples accumulate additively.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl Gradients {
    pub fn zeros(shape: &EncoderShape) -> Self {
        Gradients {
            w1: vec![0.0; shape.n_buckets * shape.hidden],
            b1: vec![0.0; shape.hidden],
            w2: vec![0.0; shape.hidden * shape.embed_dim],
            b2: vec![0.0; shape.embed_dim],
            head_w: if shape.with_head { vec![0.0; shape.embed_dim] } else { Vec::new() },
            head_b: 0.0,
        }
    }

    pub fn zero(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2.fill(0.0);
        self.head_w.fill(0.0);
        self.head_b = 0.0;
    }

    fn slices(&self) -> [&[f64]; 5] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.head_w]
    }

    pub fn is_finite(&self) -> bool {
        self.head_b.is_finite()
            && self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Global L2 norm over every tensor including the head bias.
    pub fn global_norm(&self) -> f64 {
        let mut acc = self.head_b * self.head_b;
        for s in self.slices() {
            acc += s.iter().map(|v| v * v).sum::<f64>();
        }
        acc.sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.head_w] {
            for v in s.iter_mut() {
                *v *= factor;
            }
        }
        self.head_b *= factor;
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| bound * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

/// Glorot-uniform weights, zero biases, deterministic given seed.
pub fn init_params(shape: EncoderShape, seed: u64) -> Result<EncoderParams> {
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1 = glorot(&mut rng, shape.n_buckets, shape.hidden, shape.n_buckets * shape.hidden);
    let w2 = glorot(&mut rng, shape.hidden, shape.embed_dim, shape.hidden * shape.embed_dim);
    let head_w =
        if shape.with_head { glorot(&mut rng, shape.embed_dim, 1, shape.embed_dim) } else { Vec::new() };
    Ok(EncoderParams {
        shape,
        w1,
        b1: vec![0.0; shape.hidden],
        w2,
        b2: vec![0.0; shape.embed_dim],
        head_w,
        head_b: 0.0,
    })
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EmbedCache {
    pub h_pre: Vec<f64>,
    pub h: Vec<f64>,
    pub z: Vec<f64>,
}

/// Forward pass returning activations; the embedding is `cache.z`.
pub fn embed_forward(x: &SparseFeatures, params: &EncoderParams) -> Result<EmbedCache> {
    let shape = &params.shape;
    if x.dim() != shape.n_buckets {
        return Err(Error::Shape(format!(
            "feature dim {} != encoder input dim {}",
            x.dim(),
            shape.n_buckets
        )));
    }
    let h1 = shape.hidden;
    let d = shape.embed_dim;
    let mut h_pre = params.b1.clone();
    for &(i, v) in x.entries() {
        let row = &params.w1[i * h1..(i + 1) * h1];
        for (acc, w) in h_pre.iter_mut().zip(row) {
            *acc += v * w;
        }
    }
    let h: Vec<f64> = h_pre.iter().map(|&a| if a > 0.0 { a } else { 0.0 }).collect();
    let mut z = params.b2.clone();
    for (j, &hj) in h.iter().enumerate() {
        if hj == 0.0 {
            continue;
        }
        let row = &params.w2[j * d..(j + 1) * d];
        for (acc, w) in z.iter_mut().zip(row) {
            *acc += hj * w;
        }
    }
    Ok(EmbedCache { h_pre, h, z })
}

/// Embedding z = W2ᵀ·relu(W1ᵀx + b1) + b2.
pub fn embed(x: &SparseFeatures, params: &EncoderParams) -> Result<Vec<f64>> {
    embed_forward(x, params).map(|c| c.z)
}

/// Scalar anomaly logit head_w·z + head_b.
pub fn head_logit(z: &[f64], params: &EncoderParams) -> Result<f64> {
    if !params.shape.with_head {
        return Err(Error::Shape("encoder has no classifier head".into()));
    }
    if z.len() != params.shape.embed_dim {
        return Err(Error::Shape(format!(
            "embedding dim {} != head dim {}",
            z.len(),
            params.shape.embed_dim
        )));
    }
    Ok(params.head_w.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + params.head_b)
}

/// Accumulates dL/dθ for one example into `grads` given dL/dz. The relu
/// gate uses relu'(0) = 0; W1 gradient rows are nonzero only at the
/// example's active buckets.
pub fn backward_embed(
    x: &SparseFeatures,
    params: &EncoderParams,
    cache: &EmbedCache,
    upstream: &[f64],
    grads: &mut Gradients,
) {
    let h1 = params.shape.hidden;
    let d = params.shape.embed_dim;
    debug_assert_eq!(upstream.len(), d);
    for (gb, u) in grads.b2.iter_mut().zip(upstream) {
        *gb += u;
    }
    let mut dh_pre = vec![0.0; h1];
    for j in 0..h1 {
        let hj = cache.h[j];
        if hj != 0.0 {
            let grow = &mut grads.w2[j * d..(j + 1) * d];
            for (gw, u) in grow.iter_mut().zip(upstream) {
                *gw += hj * u;
            }
        }
        if cache.h_pre[j] > 0.0 {
            let row = &params.w2[j * d..(j + 1) * d];
            dh_pre[j] = row.iter().zip(upstream).map(|(w, u)| w * u).sum();
        }
    }
    for (gb, dhp) in grads.b1.iter_mut().zip(&dh_pre) {
        *gb += dhp;
    }
    for &(i, v) in x.entries() {
        let grow = &mut grads.w1[i * h1..(i + 1) * h1];
        for (gw, dhp) in grow.iter_mut().zip(&dh_pre) {
            *gw += v * dhp;
        }
    }
}

/// Accumulates head gradients for one example and returns dL/dz for
/// chaining into [`backward_embed`].
pub fn backward_head(
    z: &[f64],
    params: &EncoderParams,
    dlogit: f64,
    grads: &mut Gradients,
) -> Vec<f64> {
    for (gw, v) in grads.head_w.iter_mut().zip(z) {
        *gw += dlogit * v;
    }
    grads.head_b += dlogit;
    params.head_w.iter().map(|w| w * dlogit).collect()
}

/// Per-group SGD learning rates: the classifier head adapts faster than
/// the encoder body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub encoder: f64,
    pub head: f64,
}

impl GroupRates {
    pub fn uniform(lr: f64) -> Self {
        GroupRates { encoder: lr, head: lr }
    }
}

/// θ ← θ − lr_group·g, in place.
pub fn sgd_step(params: &mut EncoderParams, grads: &Gradients, rates: GroupRates) -> Result<()> {
    if rates.encoder < 0.0 || rates.head < 0.0 {
        return Err(Error::Config("learning rates must be >= 0".into()));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("sgd_step received non-finite gradients".into()));
    }
    let enc = rates.encoder;
    for (p, g) in params.w1.iter_mut().zip(&grads.w1) {
        *p -= enc * g;
    }
    for (p, g) in params.b1.iter_mut().zip(&grads.b1) {
        *p -= enc * g;
    }
    for (p, g) in params.w2.iter_mut().zip(&grads.w2) {
        *p -= enc * g;
    }
    for (p, g) in params.b2.iter_mut().zip(&grads.b2) {
        *p -= enc * g;
    }
    for (p, g) in params.head_w.iter_mut().zip(&grads.head_w) {
        *p -= rates.head * g;
    }
    params.head_b -= rates.head * grads.head_b;
    Ok(())
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam first/second-moment accumulators plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(shape: &EncoderShape) -> Self {
        AdamState { m: Gradients::zeros(shape), v: Gradients::zeros(shape), step: 0 }
    }
}

fn adam_slice(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// One Adam update with bias correction and per-group learning rates.
pub fn adam_step_grouped(
    params: &mut EncoderParams,
    grads: &Gradients,
    state: &mut AdamState,
    rates: GroupRates,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("adam_step received non-finite gradients".into()));
    }
    state.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    adam_slice(&mut params.w1, &grads.w1, &mut state.m.w1, &mut state.v.w1, rates.encoder, c1, c2);
    adam_slice(&mut params.b1, &grads.b1, &mut state.m.b1, &mut state.v.b1, rates.encoder, c1, c2);
    adam_slice(&mut params.w2, &grads.w2, &mut state.m.w2, &mut state.v.w2, rates.encoder, c1, c2);
    adam_slice(&mut params.b2, &grads.b2, &mut state.m.b2, &mut state.v.b2, rates.encoder, c1, c2);
    adam_slice(
        &mut params.head_w,
        &grads.head_w,
        &mut state.m.head_w,
        &mut state.v.head_w,
        rates.head,
        c1,
        c2,
    );
    {
        let m = &mut state.m.head_b;
        let v = &mut state.v.head_b;
        let g = grads.head_b;
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        params.head_b -= rates.head * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// One Adam update with a single learning rate for every group.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    adam_step_grouped(params, grads, state, GroupRates::uniform(lr))
}

/// Scales all gradients so the global L2 norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> f64 {
    debug_assert!(max_norm > 0.0);
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
