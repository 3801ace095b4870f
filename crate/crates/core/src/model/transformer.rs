//! Forward passes: patch encoder, causal decoder, caption scoring.

use super::graph::{log_softmax, AttnSpec, Graph, NodeId};
use super::params::{AttnIdx, LnIdx, MlpIdx, ModelParams};
use super::tensor::{Matrix, Scalar};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::vocab::{BOS, EOS, PAD};

#[derive(Debug, Clone)]
pub struct Model<F> {
    pub cfg: ModelConfig,
    pub params: ModelParams<F>,
}

/// Decoder input for a batch of captions: `BOS w₁ … wₙ` padded to a common
/// length, with targets `w₁ … wₙ EOS` and a mask over real positions.
#[derive(Debug, Clone)]
pub struct TeacherForcing {
    pub batch: usize,
    pub len: usize,
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
    pub mask: Vec<bool>,
}

impl TeacherForcing {
    pub fn new(captions: &[&[u32]]) -> Self {
        let len = captions.iter().map(|c| c.len() + 1).max().unwrap_or(1);
        let batch = captions.len();
        let mut inputs = vec![PAD; batch * len];
        let mut targets = vec![PAD; batch * len];
        let mut mask = vec![false; batch * len];
        for (b, c) in captions.iter().enumerate() {
            let row = b * len;
            inputs[row] = BOS;
            inputs[row + 1..row + 1 + c.len()].copy_from_slice(c);
            targets[row..row + c.len()].copy_from_slice(c);
            targets[row + c.len()] = EOS;
            mask[row..=row + c.len()].fill(true);
        }
        TeacherForcing {
            batch,
            len,
            inputs,
            targets,
            mask,
        }
    }

    pub fn real_tokens(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

impl<F: Scalar> Model<F> {
    pub fn init(cfg: ModelConfig) -> Result<Self> {
        let params = ModelParams::init(&cfg)?;
        Ok(Model { cfg, params })
    }

    /// Non-overlapping patches in raster order, pixels scaled to [-1, 1].
    pub fn patchify(&self, image: &ImageBuffer) -> Result<Matrix<F>> {
        let s = self.cfg.canvas_size;
        if image.width != s || image.height != s {
            return Err(Error::Shape(format!(
                "image is {}x{}, model expects {s}x{s}",
                image.width, image.height
            )));
        }
        let p = self.cfg.patch_size;
        let side = self.cfg.patches_per_side();
        let mut out = Matrix::zeros(side * side, self.cfg.patch_dim());
        let scale = F::from_f64_lossy(1.0 / 127.5);
        for py in 0..side {
            for px in 0..side {
                let row = out.row_mut(py * side + px);
                let mut j = 0;
                for y in py * p..(py + 1) * p {
                    let start = (y * s + px * p) * 3;
                    for &v in &image.pixels[start..start + p * 3] {
                        row[j] = F::from_u8(v).unwrap() * scale - F::one();
                        j += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.len() > self.cfg.max_caption_len {
            return Err(Error::Input(format!(
                "caption has {} tokens, limit is {}",
                tokens.len(),
                self.cfg.max_caption_len
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.cfg.vocab_size) {
            return Err(Error::Input(format!(
                "token id {bad} outside vocabulary of {}",
                self.cfg.vocab_size
            )));
        }
        Ok(())
    }

    fn linear(&self, g: &mut Graph<'_, F>, x: NodeId, w: usize, b: usize) -> NodeId {
        let (w, b) = (g.param(w), g.param(b));
        let y = g.matmul(x, w);
        g.add_bias(y, b)
    }

    fn ln(&self, g: &mut Graph<'_, F>, x: NodeId, idx: LnIdx) -> NodeId {
        let (ga, be) = (g.param(idx.gain), g.param(idx.bias));
        g.layer_norm(x, ga, be)
    }

    fn mlp(&self, g: &mut Graph<'_, F>, x: NodeId, idx: MlpIdx) -> NodeId {
        let h = self.linear(g, x, idx.w1, idx.b1);
        let h = g.gelu(h);
        self.linear(g, h, idx.w2, idx.b2)
    }

    fn attend(&self, g: &mut Graph<'_, F>, x: NodeId, kv: NodeId, idx: AttnIdx, spec: AttnSpec) -> NodeId {
        let q = self.linear(g, x, idx.wq, idx.bq);
        let k = self.linear(g, kv, idx.wk, idx.bk);
        let v = self.linear(g, kv, idx.wv, idx.bv);
        let a = g.attention(q, k, v, spec);
        self.linear(g, a, idx.wo, idx.bo)
    }

    /// Encoder over `n_images` row-stacked patch matrices.
    pub fn encode_graph(&self, g: &mut Graph<'_, F>, patches: NodeId, n_images: usize) -> NodeId {
        let lay = &self.params.layout;
        let m = self.cfg.memory_len();
        let x = self.linear(g, patches, lay.patch_w, lay.patch_b);
        let pos = g.param(lay.enc_pos);
        let mut x = g.add_pos(x, pos, m);
        for layer in &lay.encoder {
            let h = self.ln(g, x, layer.ln1);
            let spec = AttnSpec {
                batch: n_images,
                tq: m,
                tk: m,
                heads: self.cfg.n_heads,
                causal: false,
                kv_map: None,
            };
            let a = self.attend(g, h, h, layer.attn, spec);
            x = g.add(x, a);
            let h = self.ln(g, x, layer.ln2);
            let f = self.mlp(g, h, layer.mlp);
            x = g.add(x, f);
        }
        self.ln(g, x, lay.enc_ln)
    }

    /// Decoder logits, one row per input position. `kv_map[b]` names the
    /// memory (image) that caption `b` attends to.
    pub fn decode_graph(
        &self,
        g: &mut Graph<'_, F>,
        memory: NodeId,
        inputs: Vec<u32>,
        batch: usize,
        len: usize,
        kv_map: Option<Vec<usize>>,
    ) -> NodeId {
        let lay = &self.params.layout;
        let m = self.cfg.memory_len();
        let tok = g.param(lay.tok);
        let x = g.embed(tok, inputs);
        let pos = g.param(lay.dec_pos);
        let mut x = g.add_pos(x, pos, len);
        for layer in &lay.decoder {
            let h = self.ln(g, x, layer.ln1);
            let spec = AttnSpec {
                batch,
                tq: len,
                tk: len,
                heads: self.cfg.n_heads,
                causal: true,
                kv_map: None,
            };
            let a = self.attend(g, h, h, layer.self_attn, spec);
            x = g.add(x, a);
            let h = self.ln(g, x, layer.ln2);
            let spec = AttnSpec {
                batch,
                tq: len,
                tk: m,
                heads: self.cfg.n_heads,
                causal: false,
                kv_map: kv_map.clone(),
            };
            let c = self.attend(g, h, memory, layer.cross, spec);
            x = g.add(x, c);
            let h = self.ln(g, x, layer.ln3);
            let f = self.mlp(g, h, layer.mlp);
            x = g.add(x, f);
        }
        let h = self.ln(g, x, lay.dec_ln);
        self.linear(g, h, lay.out_w, lay.out_b)
    }

    /// Memory sequence for one image: `(canvas/patch)²` rows of width d_model.
    pub fn encode_image(&self, image: &ImageBuffer) -> Result<Matrix<F>> {
        let patches = self.patchify(image)?;
        let mut g = Graph::new(&self.params.tensors);
        let p = g.input(patches);
        let out = self.encode_graph(&mut g, p, 1);
        Ok(g.value(out).clone())
    }

    /// Log-softmax rows for a batch of decoder inputs over one encoded image.
    pub fn decode_log_probs(&self, memory: &Matrix<F>, inputs: Vec<u32>, batch: usize, len: usize) -> Vec<Vec<f64>> {
        let mut g = Graph::new(&self.params.tensors);
        let mem = g.input(memory.clone());
        let logits = self.decode_graph(&mut g, mem, inputs, batch, len, Some(vec![0; batch]));
        let lv = g.value(logits);
        (0..lv.rows)
            .map(|r| {
                let row: Vec<f64> = lv.row(r).iter().map(|x| x.to_f64_lossy()).collect();
                log_softmax(&row)
            })
            .collect()
    }

    /// Σ log p(wₜ | w<ₜ, v) over the caption and the closing EOS, for several
    /// captions sharing one image.
    pub fn caption_logprobs(&self, image: &ImageBuffer, captions: &[&[u32]]) -> Result<Vec<f64>> {
        for c in captions {
            self.check_tokens(c)?;
        }
        let memory = self.encode_image(image)?;
        let tf = TeacherForcing::new(captions);
        let rows = self.decode_log_probs(&memory, tf.inputs.clone(), tf.batch, tf.len);
        let mut out = vec![0.0; tf.batch];
        for (i, row) in rows.iter().enumerate() {
            if tf.mask[i] {
                out[i / tf.len] += row[tf.targets[i] as usize];
            }
        }
        Ok(out)
    }

    pub fn caption_logprob(&self, image: &ImageBuffer, tokens: &[u32]) -> Result<f64> {
        Ok(self.caption_logprobs(image, &[tokens])?[0])
    }

    /// Conditional distributions p(· | BOS w<ₜ, v) at every caption position
    /// including the one predicting EOS.
    pub fn position_distributions(&self, image: &ImageBuffer, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
        self.check_tokens(tokens)?;
        let memory = self.encode_image(image)?;
        let tf = TeacherForcing::new(&[tokens]);
        Ok(self
            .decode_log_probs(&memory, tf.inputs, 1, tf.len)
            .into_iter()
            .map(|r| r.into_iter().map(f64::exp).collect())
            .collect())
    }
}
