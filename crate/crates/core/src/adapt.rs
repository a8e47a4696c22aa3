//! Entropy-minimization test-time adaptation with batch-shared negative
//! augmentation.
//!
//! Each step: generate `m` negative augmentations from the batch's shared
//! patch pool, encode originals and negatives with the current affine
//! parameters, average the negative embeddings into a corruption prototype,
//! offset the original embeddings, take 100-scaled similarity logits, and
//! minimize the mean softmax entropy by one SGD step on `(γ, δ)`.
//! Predictions are read from the debiased features computed before the
//! update.
//!
//! Gradients are analytic and flow through normalization, the offset
//! (including the prototype path, switchable), and the logit scale. All
//! reductions run in fixed index order so trajectories reproduce exactly.

use crate::debias::{argmax, TextBank};
use crate::error::{Error, Result};
use crate::metrics::{ground_truth_dist, l1_distance, soft_pred_dist_from_sums};
use crate::nda::{build_pool, default_m, recompose, PatchGrid};
use crate::rng::{content_hash, derive_seed, substream_indexed};
use crate::tensor::ImageTensor;
use crate::world::{FrozenEncoder, LabeledImage};
use rand::Rng;
use serde::Serialize;

/// Which parts of the augmentation pipeline a run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// Batch-shared pool, mean prototype.
    Full,
    /// Negative augmentation disabled entirely (plain entropy minimization).
    NoPanda,
    /// Each negative is recomposed from its own image's patches only.
    PerImageShuffle,
    /// One randomly chosen negative embedding replaces the mean.
    NoAveraging,
}

impl Ablation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoPanda => "no_panda",
            Ablation::PerImageShuffle => "per_image_shuffle",
            Ablation::NoAveraging => "no_averaging",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_panda" => Ok(Ablation::NoPanda),
            "per_image_shuffle" => Ok(Ablation::PerImageShuffle),
            "no_averaging" => Ok(Ablation::NoAveraging),
            other => Err(Error::Parse(format!("unknown ablation '{other}'"))),
        }
    }
}

/// Evaluation / adaptation regime for a stream run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Frozen encoder, no offset.
    ZeroShot,
    /// Frozen encoder, offset applied.
    PandaOnly,
    /// Entropy-minimization updates, no offset.
    Tent,
    /// Entropy-minimization updates on debiased features.
    TentPanda,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ZeroShot => "zero_shot",
            Method::PandaOnly => "panda_only",
            Method::Tent => "tent",
            Method::TentPanda => "tent_panda",
        }
    }

    /// Does this method update the encoder parameters?
    pub fn adapts(&self) -> bool {
        matches!(self, Method::Tent | Method::TentPanda)
    }

    /// Does this method generate negatives and offset the features?
    pub fn uses_offset(&self) -> bool {
        matches!(self, Method::PandaOnly | Method::TentPanda)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_shot" => Ok(Method::ZeroShot),
            "panda_only" => Ok(Method::PandaOnly),
            "tent" => Ok(Method::Tent),
            "tent_panda" => Ok(Method::TentPanda),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

/// Trainable encoder state plus the adaptation hyperparameters.
#[derive(Debug, Clone)]
pub struct AdaptState {
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub learning_rate: f64,
    pub step_count: usize,
    pub beta: f64,
    pub m: usize,
    pub ablation: Ablation,
}

impl AdaptState {
    /// Fresh state from an encoder's initial affine parameters.
    pub fn new(
        encoder: &FrozenEncoder,
        learning_rate: f64,
        beta: f64,
        m: usize,
        ablation: Ablation,
    ) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "learning rate must be finite and >= 0, got {learning_rate}"
            )));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "offset ratio must be finite and >= 0, got {beta}"
            )));
        }
        if m == 0 && ablation != Ablation::NoPanda {
            return Err(Error::InvalidSpec(
                "m = 0 is only valid when negative augmentation is disabled".into(),
            ));
        }
        Ok(Self {
            gamma: encoder.gamma().to_vec(),
            delta: encoder.delta().to_vec(),
            learning_rate,
            step_count: 0,
            beta,
            m,
            ablation,
        })
    }
}

/// Per-batch outcome.
#[derive(Debug, Clone)]
pub struct BatchReport {
    pub predictions: Vec<usize>,
    pub mean_entropy: f64,
    pub accuracy: f64,
    pub l1_bias: f64,
}

/// Aggregates over one stream chunk.
#[derive(Debug, Clone, Serialize)]
pub struct ChunkReport {
    pub chunk_index: usize,
    pub n: usize,
    pub accuracy: f64,
    pub l1_bias: f64,
    pub mean_entropy: f64,
}

/// Whole-stream aggregates plus compute accounting.
#[derive(Debug, Clone, Serialize)]
pub struct FinalReport {
    pub samples: usize,
    pub batches: usize,
    pub accuracy: f64,
    pub l1_bias: f64,
    pub mean_entropy: f64,
    /// Total images pushed through the encoder (originals + negatives).
    pub encoder_forwards: usize,
    /// Per-class counts of hard predictions over the whole stream.
    pub prediction_histogram: Vec<usize>,
}

/// Output of [`run_stream`].
#[derive(Debug, Clone, Serialize)]
pub struct StreamReport {
    pub per_chunk: Vec<ChunkReport>,
    #[serde(rename = "final")]
    pub final_report: FinalReport,
}

/// Shannon entropy (nats) of the softmax over a logit row, computed with
/// max-subtraction.
pub fn softmax_entropy(logits: &[f64]) -> Result<f64> {
    let (_, _, entropy) = softmax_rows(logits)?;
    Ok(entropy)
}

/// Returns `(probs, log_probs, entropy)` for one logit row.
fn softmax_rows(logits: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if logits.is_empty() || logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteLogits);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let ln_sum = sum.ln();
    let mut probs = Vec::with_capacity(logits.len());
    let mut log_probs = Vec::with_capacity(logits.len());
    let mut entropy = 0.0f64;
    for (e, &l) in exps.iter().zip(logits) {
        let p = e / sum;
        let lp = (l - max) - ln_sum;
        entropy -= p * lp;
        probs.push(p);
        log_probs.push(lp);
    }
    Ok((probs, log_probs, entropy))
}

/// Everything the forward pass materializes for one batch.
pub(crate) struct BatchForward {
    pub v: Vec<Vec<f64>>,
    pub v_norms: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
    pub negative_norms: Vec<f64>,
    pub prototype: Option<Vec<f64>>,
    pub prototype_pick: Option<usize>,
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
    pub log_probs: Vec<Vec<f64>>,
    pub entropies: Vec<f64>,
    pub loss: f64,
}

fn affine_forward(z: &[f64], gamma: &[f64], delta: &[f64]) -> Result<(Vec<f64>, f64)> {
    let u: Vec<f64> = z
        .iter()
        .zip(gamma.iter().zip(delta))
        .map(|(zi, (g, d))| g * zi + d)
        .collect();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok((u.iter().map(|x| x / norm).collect(), norm))
}

/// Forward pass over cached projections. `prototype_pick` replaces the mean
/// prototype with a single embedding (the no-averaging ablation).
pub(crate) fn forward_projected(
    state: &AdaptState,
    z_batch: &[Vec<f64>],
    z_negatives: &[Vec<f64>],
    bank: &TextBank,
    prototype_pick: Option<usize>,
) -> Result<BatchForward> {
    if z_batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let dim = state.gamma.len();
    let mut v = Vec::with_capacity(z_batch.len());
    let mut v_norms = Vec::with_capacity(z_batch.len());
    for z in z_batch {
        let (vi, norm) = affine_forward(z, &state.gamma, &state.delta)?;
        v.push(vi);
        v_norms.push(norm);
    }
    let mut negatives = Vec::with_capacity(z_negatives.len());
    let mut negative_norms = Vec::with_capacity(z_negatives.len());
    for z in z_negatives {
        let (ni, norm) = affine_forward(z, &state.gamma, &state.delta)?;
        negatives.push(ni);
        negative_norms.push(norm);
    }
    let prototype = if negatives.is_empty() {
        None
    } else if let Some(pick) = prototype_pick {
        Some(negatives[pick].clone())
    } else {
        let inv_m = 1.0 / negatives.len() as f64;
        let mut acc = vec![0.0f64; dim];
        for n in &negatives {
            for (a, x) in acc.iter_mut().zip(n) {
                *a += x;
            }
        }
        for a in acc.iter_mut() {
            *a *= inv_m;
        }
        Some(acc)
    };
    let debiased: Vec<Vec<f64>> = match &prototype {
        None => v.clone(),
        Some(proto) => v
            .iter()
            .map(|vi| {
                vi.iter()
                    .zip(proto)
                    .map(|(x, n)| x - state.beta * n)
                    .collect()
            })
            .collect(),
    };
    let mut logits = Vec::with_capacity(debiased.len());
    let mut probs = Vec::with_capacity(debiased.len());
    let mut log_probs = Vec::with_capacity(debiased.len());
    let mut entropies = Vec::with_capacity(debiased.len());
    for d in &debiased {
        let row: Vec<f64> = bank
            .embeddings()
            .iter()
            .map(|t| {
                let mut acc = 0.0;
                for (x, y) in d.iter().zip(t) {
                    acc += x * y;
                }
                100.0 * acc
            })
            .collect();
        let (p, lp, h) = softmax_rows(&row)?;
        logits.push(row);
        probs.push(p);
        log_probs.push(lp);
        entropies.push(h);
    }
    let loss = entropies.iter().sum::<f64>() / entropies.len() as f64;
    Ok(BatchForward {
        v,
        v_norms,
        negatives,
        negative_norms,
        prototype,
        prototype_pick,
        logits,
        probs,
        log_probs,
        entropies,
        loss,
    })
}

/// Analytic gradients of the mean entropy w.r.t. `(γ, δ)`.
///
/// `through_prototype` controls whether the negative branch contributes;
/// when false the prototype is treated as a constant.
pub(crate) fn backward_projected(
    state: &AdaptState,
    z_batch: &[Vec<f64>],
    z_negatives: &[Vec<f64>],
    bank: &TextBank,
    fwd: &BatchForward,
    through_prototype: bool,
) -> (Vec<f64>, Vec<f64>) {
    let dim = state.gamma.len();
    let b = z_batch.len();
    let scale = 100.0 / b as f64;
    let mut grad_gamma = vec![0.0f64; dim];
    let mut grad_delta = vec![0.0f64; dim];
    let mut proto_grad = vec![0.0f64; dim];
    let has_proto = fwd.prototype.is_some();
    #[allow(clippy::needless_range_loop)] // i indexes several parallel arrays
    for i in 0..b {
        // entropy backward: dH/dl_c = -p_c (log p_c + H)
        let h = fwd.entropies[i];
        let glogit: Vec<f64> = fwd.probs[i]
            .iter()
            .zip(&fwd.log_probs[i])
            .map(|(p, lp)| -p * (lp + h))
            .collect();
        // logits backward into the debiased feature
        let mut q = vec![0.0f64; dim];
        for (gc, t) in glogit.iter().zip(bank.embeddings()) {
            for (qk, tk) in q.iter_mut().zip(t) {
                *qk += gc * tk;
            }
        }
        for qk in q.iter_mut() {
            *qk *= scale;
        }
        // offset backward: identity into v, -β into the prototype
        if has_proto && through_prototype && state.beta != 0.0 {
            for (pg, qk) in proto_grad.iter_mut().zip(&q) {
                *pg -= state.beta * qk;
            }
        }
        // normalize backward: du = (q - (q·v) v) / ‖u‖
        let qv: f64 = q.iter().zip(&fwd.v[i]).map(|(a, c)| a * c).sum();
        let inv_norm = 1.0 / fwd.v_norms[i];
        for k in 0..dim {
            let du = (q[k] - qv * fwd.v[i][k]) * inv_norm;
            grad_gamma[k] += du * z_batch[i][k];
            grad_delta[k] += du;
        }
    }
    if has_proto && through_prototype {
        match fwd.prototype_pick {
            Some(pick) => {
                backprop_negative(
                    state,
                    z_negatives,
                    fwd,
                    pick,
                    &proto_grad,
                    &mut grad_gamma,
                    &mut grad_delta,
                );
            }
            None => {
                let inv_m = 1.0 / fwd.negatives.len() as f64;
                let shared: Vec<f64> = proto_grad.iter().map(|g| g * inv_m).collect();
                for j in 0..fwd.negatives.len() {
                    backprop_negative(
                        state,
                        z_negatives,
                        fwd,
                        j,
                        &shared,
                        &mut grad_gamma,
                        &mut grad_delta,
                    );
                }
            }
        }
    }
    (grad_gamma, grad_delta)
}

fn backprop_negative(
    _state: &AdaptState,
    z_negatives: &[Vec<f64>],
    fwd: &BatchForward,
    j: usize,
    upstream: &[f64],
    grad_gamma: &mut [f64],
    grad_delta: &mut [f64],
) {
    let n = &fwd.negatives[j];
    let qv: f64 = upstream.iter().zip(n).map(|(a, c)| a * c).sum();
    let inv_norm = 1.0 / fwd.negative_norms[j];
    for k in 0..upstream.len() {
        let du = (upstream[k] - qv * n[k]) * inv_norm;
        grad_gamma[k] += du * z_negatives[j][k];
        grad_delta[k] += du;
    }
}

/// Mean entropy of the batch and its analytic `(γ, δ)` gradients, running
/// the full forward (originals and negatives encoded with the current
/// parameters, prototype, offset, 100-scaled logits).
pub fn loss_and_grad(
    state: &AdaptState,
    batch: &[ImageTensor],
    negatives: &[ImageTensor],
    encoder: &FrozenEncoder,
    bank: &TextBank,
    through_prototype: bool,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let z_batch: Vec<Vec<f64>> = batch
        .iter()
        .map(|img| encoder.project(img))
        .collect::<Result<_>>()?;
    let z_neg: Vec<Vec<f64>> = negatives
        .iter()
        .map(|img| encoder.project(img))
        .collect::<Result<_>>()?;
    let fwd = forward_projected(state, &z_batch, &z_neg, bank, None)?;
    let (gg, gd) = backward_projected(state, &z_batch, &z_neg, bank, &fwd, through_prototype);
    Ok((fwd.loss, gg, gd))
}

/// Negative augmentations for one batch under the state's ablation switch.
///
/// Returns the images and, for the no-averaging ablation, the index of the
/// chosen prototype embedding.
pub fn generate_negatives(
    state: &AdaptState,
    batch: &[ImageTensor],
    patch: usize,
    pool_seed: u64,
) -> Result<(Vec<ImageTensor>, Option<usize>)> {
    if state.ablation == Ablation::NoPanda {
        return Ok((Vec::new(), None));
    }
    let first = &batch[0];
    let grid = PatchGrid::new(first.height(), first.width(), patch, patch)?;
    let m = state.m.min(batch.len());
    let negatives = match state.ablation {
        Ablation::PerImageShuffle => {
            let mut out = Vec::with_capacity(m);
            for (j, image) in batch.iter().take(m).enumerate() {
                let pool = build_pool(
                    std::slice::from_ref(image),
                    &grid,
                    derive_seed(pool_seed, "per-image", j as u64),
                )?;
                out.extend(recompose(&pool, &grid, 1)?);
            }
            out
        }
        _ => {
            let pool = build_pool(batch, &grid, pool_seed)?;
            recompose(&pool, &grid, m)?
        }
    };
    let pick = if state.ablation == Ablation::NoAveraging && !negatives.is_empty() {
        let mut rng = substream_indexed(pool_seed, "proto-pick", 0);
        Some(rng.random_range(0..negatives.len()))
    } else {
        None
    };
    Ok((negatives, pick))
}

/// One full adaptation step: negative augmentation, forward, one SGD update
/// of `(γ, δ)`, and predictions from the pre-update debiased features.
#[allow(clippy::too_many_arguments)]
pub fn adapt_step(
    state: &AdaptState,
    batch: &[ImageTensor],
    labels: &[usize],
    encoder: &FrozenEncoder,
    bank: &TextBank,
    patch: usize,
    pool_seed: u64,
    through_prototype: bool,
) -> Result<(AdaptState, BatchReport)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (negatives, pick) = generate_negatives(state, batch, patch, pool_seed)?;
    let z_batch: Vec<Vec<f64>> = batch
        .iter()
        .map(|img| encoder.project(img))
        .collect::<Result<_>>()?;
    let z_neg: Vec<Vec<f64>> = negatives
        .iter()
        .map(|img| encoder.project(img))
        .collect::<Result<_>>()?;
    let fwd = forward_projected(state, &z_batch, &z_neg, bank, pick)?;
    let (grad_gamma, grad_delta) =
        backward_projected(state, &z_batch, &z_neg, bank, &fwd, through_prototype);
    let mut next = state.clone();
    for (g, dg) in next.gamma.iter_mut().zip(&grad_gamma) {
        *g -= state.learning_rate * dg;
    }
    for (d, dd) in next.delta.iter_mut().zip(&grad_delta) {
        *d -= state.learning_rate * dd;
    }
    next.step_count += 1;
    let report = batch_report(&fwd, labels, bank.num_classes())?;
    Ok((next, report))
}

fn batch_report(fwd: &BatchForward, labels: &[usize], num_classes: usize) -> Result<BatchReport> {
    let predictions: Vec<usize> = fwd.logits.iter().map(|row| argmax(row)).collect();
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    let mut softmax_sums = vec![0.0f64; num_classes];
    for p in &fwd.probs {
        for (s, x) in softmax_sums.iter_mut().zip(p) {
            *s += x;
        }
    }
    let l1 = l1_distance(
        &soft_pred_dist_from_sums(&softmax_sums, fwd.probs.len())?,
        &ground_truth_dist(labels, num_classes)?,
    )?;
    Ok(BatchReport {
        accuracy: correct as f64 / labels.len() as f64,
        mean_entropy: fwd.loss,
        l1_bias: l1,
        predictions,
    })
}

/// Configuration of a stream run.
#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub method: Method,
    pub ablation: Ablation,
    pub beta: f64,
    pub m: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub chunk_size: usize,
    pub patch: usize,
    pub seed: u64,
    pub grad_through_prototype: bool,
}

impl StreamConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ablation: Ablation::Full,
            beta: 0.5,
            m: None,
            learning_rate: 1e-3,
            batch_size: 100,
            chunk_size: 1000,
            patch: crate::world::WORLD_DEFAULT_PATCH,
            seed: 0,
            grad_through_prototype: true,
        }
    }
}

struct ChunkAccumulator {
    softmax_sums: Vec<f64>,
    labels: Vec<usize>,
    pred_counts: Vec<usize>,
    correct: usize,
    entropy_sum: f64,
}

impl ChunkAccumulator {
    fn new(num_classes: usize) -> Self {
        Self {
            softmax_sums: vec![0.0; num_classes],
            labels: Vec::new(),
            pred_counts: vec![0; num_classes],
            correct: 0,
            entropy_sum: 0.0,
        }
    }

    fn report(&self, chunk_index: usize, num_classes: usize) -> Result<ChunkReport> {
        let n = self.labels.len();
        let l1 = l1_distance(
            &soft_pred_dist_from_sums(&self.softmax_sums, n)?,
            &ground_truth_dist(&self.labels, num_classes)?,
        )?;
        Ok(ChunkReport {
            chunk_index,
            n,
            accuracy: self.correct as f64 / n as f64,
            l1_bias: l1,
            mean_entropy: self.entropy_sum / n as f64,
        })
    }

    fn merge_into(&self, other: &mut ChunkAccumulator) {
        for (a, b) in other.softmax_sums.iter_mut().zip(&self.softmax_sums) {
            *a += b;
        }
        other.labels.extend_from_slice(&self.labels);
        for (a, b) in other.pred_counts.iter_mut().zip(&self.pred_counts) {
            *a += b;
        }
        other.correct += self.correct;
        other.entropy_sum += self.entropy_sum;
    }
}

/// Sequential adaptation over a fixed-order stream, aggregated per chunk.
///
/// The per-batch pool seed is derived from the batch's own bytes, so a
/// batch carries its augmentation randomness with it: under a zero learning
/// rate, permuting batches permutes the outputs without changing them.
pub fn run_stream(
    config: &StreamConfig,
    encoder: &FrozenEncoder,
    bank: &TextBank,
    stream: &[LabeledImage],
) -> Result<StreamReport> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    if config.batch_size == 0 || config.chunk_size == 0 {
        return Err(Error::InvalidSpec(
            "batch_size and chunk_size must be positive".into(),
        ));
    }
    let num_classes = bank.num_classes();
    let uses_offset = config.method.uses_offset();
    let ablation = if uses_offset {
        config.ablation
    } else {
        Ablation::NoPanda
    };
    let beta = if uses_offset { config.beta } else { 0.0 };
    let m = if uses_offset {
        config.m.unwrap_or_else(|| default_m(config.batch_size))
    } else {
        0
    };
    let mut state = AdaptState::new(encoder, config.learning_rate, beta, m, ablation)?;

    let mut per_chunk = Vec::new();
    let mut chunk = ChunkAccumulator::new(num_classes);
    let mut overall = ChunkAccumulator::new(num_classes);
    let mut chunk_index = 0usize;
    let mut chunk_fill = 0usize;
    let mut encoder_forwards = 0usize;
    let mut batches = 0usize;

    for batch_samples in stream.chunks(config.batch_size) {
        let images: Vec<ImageTensor> = batch_samples.iter().map(|s| s.image.clone()).collect();
        let labels: Vec<usize> = batch_samples.iter().map(|s| s.label).collect();
        let mut sig_bytes = Vec::new();
        for img in &images {
            sig_bytes.extend_from_slice(&img.byte_view());
        }
        let pool_seed = derive_seed(config.seed, "nda", content_hash(&sig_bytes));

        let (negatives, pick) = generate_negatives(&state, &images, config.patch, pool_seed)?;
        let z_batch: Vec<Vec<f64>> = images
            .iter()
            .map(|img| encoder.project(img))
            .collect::<Result<_>>()?;
        let z_neg: Vec<Vec<f64>> = negatives
            .iter()
            .map(|img| encoder.project(img))
            .collect::<Result<_>>()?;
        let fwd = forward_projected(&state, &z_batch, &z_neg, bank, pick)?;
        if config.method.adapts() {
            let (grad_gamma, grad_delta) = backward_projected(
                &state,
                &z_batch,
                &z_neg,
                bank,
                &fwd,
                config.grad_through_prototype,
            );
            for (g, dg) in state.gamma.iter_mut().zip(&grad_gamma) {
                *g -= state.learning_rate * dg;
            }
            for (d, dd) in state.delta.iter_mut().zip(&grad_delta) {
                *d -= state.learning_rate * dd;
            }
            state.step_count += 1;
        }
        encoder_forwards += images.len() + negatives.len();
        batches += 1;

        // split the batch across chunk boundaries if it straddles one
        let mut offset_in_batch = 0usize;
        while offset_in_batch < batch_samples.len() {
            let room = config.chunk_size - chunk_fill;
            let take = room.min(batch_samples.len() - offset_in_batch);
            let sub = SubBatchView {
                fwd: &fwd,
                start: offset_in_batch,
                len: take,
            };
            sub.absorb_into(&mut chunk, &labels[offset_in_batch..offset_in_batch + take]);
            chunk_fill += take;
            offset_in_batch += take;
            if chunk_fill == config.chunk_size {
                chunk.merge_into(&mut overall);
                per_chunk.push(chunk.report(chunk_index, num_classes)?);
                chunk = ChunkAccumulator::new(num_classes);
                chunk_index += 1;
                chunk_fill = 0;
            }
        }
    }
    if chunk_fill > 0 {
        chunk.merge_into(&mut overall);
        per_chunk.push(chunk.report(chunk_index, num_classes)?);
    }

    let overall_report = overall.report(0, num_classes)?;
    Ok(StreamReport {
        per_chunk,
        final_report: FinalReport {
            samples: stream.len(),
            batches,
            accuracy: overall_report.accuracy,
            l1_bias: overall_report.l1_bias,
            mean_entropy: overall_report.mean_entropy,
            encoder_forwards,
            prediction_histogram: overall.pred_counts.clone(),
        },
    })
}

struct SubBatchView<'a> {
    fwd: &'a BatchForward,
    start: usize,
    len: usize,
}

impl SubBatchView<'_> {
    fn absorb_into(&self, acc: &mut ChunkAccumulator, labels: &[usize]) {
        for i in self.start..self.start + self.len {
            for (s, x) in acc.softmax_sums.iter_mut().zip(&self.fwd.probs[i]) {
                *s += x;
            }
            acc.entropy_sum += self.fwd.entropies[i];
            let pred = argmax(&self.fwd.logits[i]);
            acc.pred_counts[pred] += 1;
            if pred == labels[i - self.start] {
                acc.correct += 1;
            }
        }
        acc.labels.extend_from_slice(labels);
    }
}
