//! Length-normalized beam search decoding.

use super::tensor::Scalar;
use super::transformer::Model;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::vocab::{BOS, EOS, PAD};

/// A finished hypothesis: tokens without BOS/EOS and its total log-probability
/// including the EOS step.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub logprob: f64,
}

impl Hypothesis {
    /// Mean log-probability per predicted token (EOS counted).
    pub fn normalized(&self) -> f64 {
        self.logprob / (self.tokens.len() + 1) as f64
    }
}

/// Keeps the `beam_width` best extensions by total log-probability at every
/// step; hypotheses that emit EOS leave the beam. The result is the finished
/// hypothesis with the best length-normalized score. Width 1 is greedy.
pub fn beam_search<F: Scalar>(model: &Model<F>, image: &ImageBuffer, beam_width: usize) -> Result<Hypothesis> {
    if beam_width == 0 {
        return Err(Error::Input("beam width must be at least 1".into()));
    }
    let memory = model.encode_image(image)?;
    let max_len = model.cfg.max_caption_len;
    let mut live: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for t in 0..=max_len {
        let len = t + 1;
        let mut inputs = Vec::with_capacity(live.len() * len);
        for (toks, _) in &live {
            inputs.push(BOS);
            inputs.extend_from_slice(toks);
        }
        let rows = model.decode_log_probs(&memory, inputs, live.len(), len);
        let mut cands: Vec<(f64, usize, u32)> = Vec::new();
        for (b, (_, score)) in live.iter().enumerate() {
            let row = &rows[b * len + t];
            for (v, &lp) in row.iter().enumerate() {
                let v = v as u32;
                if v == PAD || v == BOS || (t == max_len && v != EOS) {
                    continue;
                }
                cands.push((score + lp, b, v));
            }
        }
        // ties broken by beam then token for determinism
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(beam_width);
        let mut next = Vec::new();
        for (score, b, v) in cands {
            let toks = live[b].0.clone();
            if v == EOS {
                finished.push(Hypothesis { tokens: toks, logprob: score });
            } else {
                let mut toks = toks;
                toks.push(v);
                next.push((toks, score));
            }
        }
        if next.is_empty() {
            break;
        }
        live = next;
    }
    let best = finished
        .into_iter()
        .reduce(|a, b| if b.normalized() > a.normalized() { b } else { a })
        .expect("the final step forces EOS");
    Ok(best)
}

pub fn generate_caption<F: Scalar>(model: &Model<F>, image: &ImageBuffer, beam_width: usize) -> Result<Vec<u32>> {
    Ok(beam_search(model, image, beam_width)?.tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn model(seed: u64) -> Model<f64> {
        Model::init(ModelConfig {
            vocab_size: 9,
            d_model: 16,
            n_heads: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            patch_size: 8,
            max_caption_len: 5,
            canvas_size: 16,
            seed,
        })
        .unwrap()
    }

    fn greedy(m: &Model<f64>, img: &ImageBuffer) -> Vec<u32> {
        let mut toks = Vec::new();
        for t in 0..=m.cfg.max_caption_len {
            let dist = m.position_distributions(img, &toks).unwrap();
            let row = &dist[t];
            let best = (0..row.len() as u32)
                .filter(|&v| v != PAD && v != BOS && (t < m.cfg.max_caption_len || v == EOS))
                .max_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]).then(b.cmp(&a)))
                .unwrap();
            if best == EOS {
                break;
            }
            toks.push(best);
        }
        toks
    }

    #[test]
    fn width_one_is_greedy() {
        for seed in 0..6 {
            let m = model(seed);
            let img = ImageBuffer::white_noise(16, seed + 10);
            assert_eq!(generate_caption(&m, &img, 1).unwrap(), greedy(&m, &img));
        }
    }

    #[test]
    fn reported_logprob_matches_scoring() {
        let m = model(4);
        let img = ImageBuffer::white_noise(16, 3);
        for w in [1, 2, 4] {
            let h = beam_search(&m, &img, w).unwrap();
            let lp = m.caption_logprob(&img, &h.tokens).unwrap();
            assert!((lp - h.logprob).abs() < 1e-9);
            assert!(h.tokens.len() <= 5);
        }
    }

    #[test]
    fn zero_width_is_rejected() {
        assert!(generate_caption(&model(0), &ImageBuffer::white_noise(16, 0), 0).is_err());
    }
}
