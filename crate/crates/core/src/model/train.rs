//! Cross-entropy training with AdamW and a linear-decay schedule.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::tensor::{Matrix, Scalar};
use super::transformer::{Model, TeacherForcing};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::image::ImageBuffer;

/// Examples per gradient task. Fixed so that the reduction order, and thus
/// every bit of the update, does not depend on the thread count.
pub const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_steps: u64,
    pub max_steps: u64,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            warmup_steps: 0,
            max_steps: 1000,
            batch_size: 64,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.max_steps > 0
            && self.batch_size > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training settings: {self:?}")))
        }
    }

    pub fn schedule(&self) -> LinearDecay {
        LinearDecay {
            lr0: self.learning_rate,
            warmup_steps: self.warmup_steps,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDecay {
    pub lr0: f64,
    pub warmup_steps: u64,
    pub max_steps: u64,
}

impl LinearDecay {
    /// Rate for the update that follows `step` completed updates; never
    /// negative past `max_steps`.
    pub fn lr(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.lr0 * (step + 1) as f64 / self.warmup_steps as f64;
        }
        self.lr0 * (1.0 - step as f64 / self.max_steps as f64).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState<F> {
    pub m: Vec<Matrix<F>>,
    pub v: Vec<Matrix<F>>,
    pub step: u64,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(params: &[Matrix<F>]) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.rows, p.cols)).collect();
        OptimizerState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    /// One decoupled-weight-decay Adam update.
    pub fn apply(&mut self, params: &mut [Matrix<F>], grads: &[Matrix<F>], settings: &TrainSettings) {
        let lr = settings.schedule().lr(self.step);
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - settings.beta1.powf(t);
        let c2 = 1.0 - settings.beta2.powf(t);
        let f = F::from_f64_lossy;
        let (b1, b2) = (f(settings.beta1), f(settings.beta2));
        let (one_b1, one_b2) = (f(1.0 - settings.beta1), f(1.0 - settings.beta2));
        let step_size = f(lr / c1);
        let inv_c2 = f(1.0 / c2);
        let eps = f(settings.eps);
        let decay = f(lr * settings.weight_decay);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *p -= decay * *p;
                *p -= step_size * *m / ((*v * inv_c2).sqrt() + eps);
            }
        }
    }
}

/// One training example after tokenization.
#[derive(Debug, Clone)]
pub struct Example {
    pub image: Arc<ImageBuffer>,
    pub tokens: Vec<u32>,
}

pub type Batch = Vec<Example>;

/// Replaces each image with probability `p` by white noise; the decision
/// and the noise are pure functions of `(seed, step, position)`.
pub fn apply_noise(batch: &mut [Example], p: f64, seed: u64, step: u64, canvas: usize) {
    if p <= 0.0 {
        return;
    }
    for (i, ex) in batch.iter_mut().enumerate() {
        let key = mix(seed, step, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        if rng.gen::<f64>() < p {
            ex.image = Arc::new(ImageBuffer::white_noise(canvas, rng.gen()));
        }
    }
}

/// Stateless 64-bit key derivation (splitmix64 finalizer over a combination).
pub fn mix(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(c.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<F: Scalar> Model<F> {
    /// Mean per-token cross-entropy over the batch and its gradient for every
    /// parameter. Chunks run under `exec`; their results are summed in order.
    pub fn loss_and_grads(&self, batch: &[Example], exec: Exec) -> Result<(f64, Vec<Matrix<F>>)> {
        if batch.is_empty() {
            return Err(Error::Input("empty training batch".into()));
        }
        for ex in batch {
            self.check_tokens(&ex.tokens)?;
        }
        let total: usize = batch.iter().map(|e| e.tokens.len() + 1).sum();
        let scale = F::one() / F::from_usize(total).unwrap();
        let parts = exec.map_chunks(batch, GRAD_CHUNK, |chunk| self.chunk_grads(chunk, scale));
        let mut loss = 0.0;
        let mut grads: Vec<Matrix<F>> = self
            .params
            .tensors
            .iter()
            .map(|p| Matrix::zeros(p.rows, p.cols))
            .collect();
        for part in parts {
            let (l, g) = part?;
            loss += l;
            for (acc, gi) in grads.iter_mut().zip(g) {
                if let Some(gi) = gi {
                    acc.add_assign(&gi);
                }
            }
        }
        Ok((loss, grads))
    }

    fn chunk_grads(&self, chunk: &[Example], scale: F) -> Result<(f64, Vec<Option<Matrix<F>>>)> {
        let n = chunk.len();
        let m = self.cfg.memory_len();
        let mut patches = Matrix::zeros(n * m, self.cfg.patch_dim());
        for (i, ex) in chunk.iter().enumerate() {
            let p = self.patchify(&ex.image)?;
            patches.data[i * p.len()..(i + 1) * p.len()].copy_from_slice(&p.data);
        }
        let caps: Vec<&[u32]> = chunk.iter().map(|e| e.tokens.as_slice()).collect();
        let tf = TeacherForcing::new(&caps);
        let mut g = Graph::new(&self.params.tensors);
        let pin = g.input(patches);
        let memory = self.encode_graph(&mut g, pin, n);
        let logits = self.decode_graph(&mut g, memory, tf.inputs.clone(), n, tf.len, None);
        let weights = tf.mask.iter().map(|&on| if on { scale } else { F::zero() }).collect();
        let loss = g.cross_entropy(logits, tf.targets.clone(), weights);
        let value = g.value(loss).data[0].to_f64_lossy();
        Ok((value, g.backward(loss)))
    }

    /// Forward, backward and one optimizer update. Returns the pre-update loss.
    pub fn train_step(&mut self, opt: &mut OptimizerState<F>, settings: &TrainSettings, batch: &[Example], exec: Exec) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(batch, exec)?;
        if !loss.is_finite() || !grads.iter().all(Matrix::is_finite) {
            return Err(Error::Diverged { step: opt.step, loss });
        }
        opt.apply(&mut self.params.tensors, &grads, settings);
        if !self.params.is_finite() {
            return Err(Error::Diverged { step: opt.step, loss });
        }
        Ok(loss)
    }
}
