//! Self-tests of the numeric core against independent oracles: central
//! finite differences for gradients and a prefix-by-prefix re-run for the
//! chain-rule factorization of caption scores.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::Example;
use super::transformer::Model;
use super::ModelConfig;
use crate::error::Result;
use crate::exec::Exec;
use crate::image::ImageBuffer;
use crate::vocab::{BOS, EOS};

pub const FD_STEP: f64 = 1e-3;

/// Small enough for thousands of forward passes, large enough to exercise
/// every op with more than one head and layer.
pub fn micro_config(seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: 11,
        d_model: 8,
        n_heads: 2,
        encoder_layers: 1,
        decoder_layers: 1,
        patch_size: 8,
        max_caption_len: 5,
        canvas_size: 16,
        seed,
    }
}

#[derive(Debug, Clone)]
pub struct GradSample {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub samples: Vec<GradSample>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.samples.iter().map(|s| s.rel_err).fold(0.0, f64::max)
    }
}

/// `|a − n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

fn random_batch(cfg: &ModelConfig, rng: &mut ChaCha8Rng, n: usize) -> Vec<Example> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=cfg.max_caption_len);
            Example {
                image: Arc::new(ImageBuffer::white_noise(cfg.canvas_size, rng.gen())),
                tokens: (0..len).map(|_| rng.gen_range(4..cfg.vocab_size as u32)).collect(),
            }
        })
        .collect()
}

/// Compares backpropagated gradients with central differences at
/// `n_samples` scalar parameters drawn uniformly over all parameters that
/// receive gradient from the sampled batch. Key biases have an identically
/// zero gradient (softmax is shift invariant), so roundoff-level entries are
/// skipped.
pub fn gradient_check(cfg: &ModelConfig, n_samples: usize, seed: u64) -> Result<GradCheckReport> {
    let mut model = Model::<f64>::init(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // perturb away from the symmetric init so layer norms and biases matter
    for t in &mut model.params.tensors {
        for x in &mut t.data {
            *x += rng.gen_range(-0.3..0.3);
        }
    }
    let batch = random_batch(cfg, &mut rng, 3);
    let (_, grads) = model.loss_and_grads(&batch, Exec::Sequential)?;
    let loss_at = |m: &Model<f64>| m.loss_and_grads(&batch, Exec::Sequential).map(|r| r.0);

    let candidates: Vec<(usize, usize)> = grads
        .iter()
        .enumerate()
        .flat_map(|(p, g)| (0..g.len()).filter(move |&i| g.data[i].abs() > 1e-12).map(move |i| (p, i)))
        .collect();
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let (p, i) = candidates[rng.gen_range(0..candidates.len())];
        let orig = model.params.tensors[p].data[i];
        model.params.tensors[p].data[i] = orig + FD_STEP;
        let up = loss_at(&model)?;
        model.params.tensors[p].data[i] = orig - FD_STEP;
        let down = loss_at(&model)?;
        model.params.tensors[p].data[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = grads[p].data[i];
        samples.push(GradSample {
            name: model.params.names[p].clone(),
            index: i,
            analytic,
            numeric,
            rel_err: relative_error(analytic, numeric),
        });
    }
    Ok(GradCheckReport { samples })
}

#[derive(Debug, Clone)]
pub struct PrefixOracle {
    pub logprob: f64,
    pub oracle: f64,
    /// Largest |Σ p − 1| over all decoder positions.
    pub max_norm_dev: f64,
}

/// Scores `tokens` once through the batched forward, then again as the sum of
/// conditionals each taken from a separate forward over just that prefix.
pub fn prefix_oracle(model: &Model<f64>, image: &ImageBuffer, tokens: &[u32]) -> Result<PrefixOracle> {
    let logprob = model.caption_logprob(image, tokens)?;
    let memory = model.encode_image(image)?;
    let mut oracle = 0.0;
    let mut max_norm_dev: f64 = 0.0;
    for t in 0..=tokens.len() {
        let mut inputs = vec![BOS];
        inputs.extend_from_slice(&tokens[..t]);
        let rows = model.decode_log_probs(&memory, inputs, 1, t + 1);
        let last = &rows[t];
        let total: f64 = last.iter().map(|x| x.exp()).sum();
        max_norm_dev = max_norm_dev.max((total - 1.0).abs());
        let target = if t < tokens.len() { tokens[t] } else { EOS };
        oracle += last[target as usize];
    }
    Ok(PrefixOracle {
        logprob,
        oracle,
        max_norm_dev,
    })
}

/// Largest change of any earlier-position conditional when the last caption
/// token is replaced; masking makes this exactly zero.
pub fn causality_violation(model: &Model<f64>, image: &ImageBuffer, tokens: &[u32]) -> Result<f64> {
    let a = model.position_distributions(image, tokens)?;
    let mut other = tokens.to_vec();
    if let Some(last) = other.last_mut() {
        *last = if *last == 4 { 5 } else { 4 };
    }
    let b = model.position_distributions(image, &other)?;
    let mut worst: f64 = 0.0;
    for t in 0..tokens.len() {
        for (x, y) in a[t].iter().zip(&b[t]) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// Closed-form parameter count of the architecture.
pub fn closed_form_param_count(cfg: &ModelConfig) -> usize {
    let d = cfg.d_model;
    let v = cfg.vocab_size;
    let enc_layer = 12 * d * d + 13 * d;
    let dec_layer = 16 * d * d + 19 * d;
    cfg.patch_dim() * d
        + d
        + cfg.memory_len() * d
        + cfg.encoder_layers * enc_layer
        + 2 * d
        + v * d
        + (cfg.max_caption_len + 1) * d
        + cfg.decoder_layers * dec_layer
        + 2 * d
        + d * v
        + v
}

/// Random image and caption for oracle runs.
pub fn random_probe(cfg: &ModelConfig, seed: u64) -> (ImageBuffer, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ex = random_batch(cfg, &mut rng, 1).pop().expect("one example");
    (Arc::try_unwrap(ex.image).expect("unique"), ex.tokens)
}
