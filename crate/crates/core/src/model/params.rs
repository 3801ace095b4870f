//! Learnable arrays, their stable names, and initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Matrix, Scalar};
use super::ModelConfig;
use crate::error::Result;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
pub struct LnIdx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AttnIdx {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct MlpIdx {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderLayer {
    pub ln1: LnIdx,
    pub attn: AttnIdx,
    pub ln2: LnIdx,
    pub mlp: MlpIdx,
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderLayer {
    pub ln1: LnIdx,
    pub self_attn: AttnIdx,
    pub ln2: LnIdx,
    pub cross: AttnIdx,
    pub ln3: LnIdx,
    pub mlp: MlpIdx,
}

/// Index of every named array inside [`ModelParams::tensors`].
#[derive(Debug, Clone)]
pub struct Layout {
    pub patch_w: usize,
    pub patch_b: usize,
    pub enc_pos: usize,
    pub encoder: Vec<EncoderLayer>,
    pub enc_ln: LnIdx,
    pub tok: usize,
    pub dec_pos: usize,
    pub decoder: Vec<DecoderLayer>,
    pub dec_ln: LnIdx,
    pub out_w: usize,
    pub out_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
pub struct Slot {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

struct Builder {
    slots: Vec<Slot>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.slots.push(Slot { name, rows, cols, init });
        self.slots.len() - 1
    }

    fn ln(&mut self, prefix: &str, d: usize) -> LnIdx {
        LnIdx {
            gain: self.add(format!("{prefix}.gain"), 1, d, Init::Ones),
            bias: self.add(format!("{prefix}.bias"), 1, d, Init::Zeros),
        }
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIdx {
        let mut pair = |n: &str| {
            (
                self.add(format!("{prefix}.w{n}"), d, d, Init::Normal),
                self.add(format!("{prefix}.b{n}"), 1, d, Init::Zeros),
            )
        };
        let (wq, bq) = pair("q");
        let (wk, bk) = pair("k");
        let (wv, bv) = pair("v");
        let (wo, bo) = pair("o");
        AttnIdx { wq, bq, wk, bk, wv, bv, wo, bo }
    }

    fn mlp(&mut self, prefix: &str, d: usize, hidden: usize) -> MlpIdx {
        MlpIdx {
            w1: self.add(format!("{prefix}.w1"), d, hidden, Init::Normal),
            b1: self.add(format!("{prefix}.b1"), 1, hidden, Init::Zeros),
            w2: self.add(format!("{prefix}.w2"), hidden, d, Init::Normal),
            b2: self.add(format!("{prefix}.b2"), 1, d, Init::Zeros),
        }
    }
}

/// Walks the architecture and lists every array in a fixed order.
pub fn layout(cfg: &ModelConfig) -> (Layout, Vec<Slot>) {
    let d = cfg.d_model;
    let h = cfg.mlp_dim();
    let mut b = Builder { slots: Vec::new() };
    let patch_w = b.add("enc.patch.w".into(), cfg.patch_dim(), d, Init::Normal);
    let patch_b = b.add("enc.patch.b".into(), 1, d, Init::Zeros);
    let enc_pos = b.add("enc.pos".into(), cfg.memory_len(), d, Init::Normal);
    let encoder = (0..cfg.encoder_layers)
        .map(|l| EncoderLayer {
            ln1: b.ln(&format!("enc.{l}.ln1"), d),
            attn: b.attn(&format!("enc.{l}.attn"), d),
            ln2: b.ln(&format!("enc.{l}.ln2"), d),
            mlp: b.mlp(&format!("enc.{l}.mlp"), d, h),
        })
        .collect();
    let enc_ln = b.ln("enc.ln_f", d);
    let tok = b.add("dec.tok".into(), cfg.vocab_size, d, Init::Normal);
    let dec_pos = b.add("dec.pos".into(), cfg.max_caption_len + 1, d, Init::Normal);
    let decoder = (0..cfg.decoder_layers)
        .map(|l| DecoderLayer {
            ln1: b.ln(&format!("dec.{l}.ln1"), d),
            self_attn: b.attn(&format!("dec.{l}.self"), d),
            ln2: b.ln(&format!("dec.{l}.ln2"), d),
            cross: b.attn(&format!("dec.{l}.cross"), d),
            ln3: b.ln(&format!("dec.{l}.ln3"), d),
            mlp: b.mlp(&format!("dec.{l}.mlp"), d, h),
        })
        .collect();
    let dec_ln = b.ln("dec.ln_f", d);
    let out_w = b.add("dec.out.w".into(), d, cfg.vocab_size, Init::Normal);
    let out_b = b.add("dec.out.b".into(), 1, cfg.vocab_size, Init::Zeros);
    (
        Layout {
            patch_w,
            patch_b,
            enc_pos,
            encoder,
            enc_ln,
            tok,
            dec_pos,
            decoder,
            dec_ln,
            out_w,
            out_b,
        },
        b.slots,
    )
}

#[derive(Debug, Clone)]
pub struct ModelParams<F> {
    pub names: Vec<String>,
    pub tensors: Vec<Matrix<F>>,
    pub layout: Layout,
}

impl<F: Scalar> ModelParams<F> {
    /// Truncated normal (σ = 0.02, cut at 2σ) for projections and
    /// embeddings, zeros for biases, ones for layer-norm gains.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (layout, slots) = layout(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let tensors = slots
            .iter()
            .map(|s| {
                let n = s.rows * s.cols;
                let data = match s.init {
                    Init::Zeros => vec![F::zero(); n],
                    Init::Ones => vec![F::one(); n],
                    Init::Normal => (0..n)
                        .map(|_| loop {
                            let x: f64 = normal.sample(&mut rng);
                            if x.abs() <= 2.0 * INIT_STD {
                                break F::from_f64_lossy(x);
                            }
                        })
                        .collect(),
                };
                Matrix::from_vec(s.rows, s.cols, data)
            })
            .collect();
        Ok(ModelParams {
            names: slots.into_iter().map(|s| s.name).collect(),
            tensors,
            layout,
        })
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        ModelParams {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Matrix::cast).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Raw little-endian bytes of every array in layout order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.count() * F::BYTES);
        for t in &self.tensors {
            for &x in &t.data {
                x.write_le(&mut out);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::default();
        let a = ModelParams::<f32>::init(&cfg).unwrap();
        let b = ModelParams::<f32>::init(&cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = ModelParams::<f32>::init(&ModelConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn names_are_unique_and_values_bounded() {
        let p = ModelParams::<f32>::init(&ModelConfig::default()).unwrap();
        let set: std::collections::BTreeSet<_> = p.names.iter().collect();
        assert_eq!(set.len(), p.names.len());
        assert!(p.is_finite());
        let w = &p.tensors[p.layout.patch_w];
        assert!(w.data.iter().all(|x| x.abs() <= 0.04));
        let ln = p.layout.enc_ln;
        assert!(p.tensors[ln.gain].data.iter().all(|&x| x == 1.0));
        assert!(p.tensors[ln.bias].data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        let bad = ModelConfig { n_heads: 3, ..ModelConfig::default() };
        assert!(ModelParams::<f32>::init(&bad).is_err());
        let bad = ModelConfig { patch_size: 7, ..ModelConfig::default() };
        assert!(ModelParams::<f32>::init(&bad).is_err());
    }

    #[test]
    fn head_dim_follows_width() {
        let cfg = ModelConfig { d_model: 128, n_heads: 4, ..ModelConfig::default() };
        assert_eq!(cfg.head_dim(), 32);
    }
}
