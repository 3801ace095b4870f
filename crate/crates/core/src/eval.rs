//! Minimal-pair preference, macro-F1 over gold verb numbers, and ROUGE-L.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::TestItem;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grammar::{GrammaticalNumber, MinimalPair};
use crate::image::ImageBuffer;
use crate::model::{Model, Scalar};
use crate::vocab::Vocab;

pub const PREDICTIONS_HEADER: &str = "pair_id,gold,predicted,logprob_hier,logprob_lin,tie";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub pair_id: String,
    pub gold_number: GrammaticalNumber,
    pub predicted_number: GrammaticalNumber,
    pub logprob_hier: f64,
    pub logprob_lin: f64,
    pub tie: bool,
}

impl PairPrediction {
    /// The hierarchical caption wins only with a strictly higher score; a
    /// tie goes to the linear reading.
    pub fn decide(pair_id: impl Into<String>, gold: GrammaticalNumber, logprob_hier: f64, logprob_lin: f64) -> Self {
        let predicted_number = if logprob_hier > logprob_lin { gold } else { gold.flip() };
        PairPrediction {
            pair_id: pair_id.into(),
            gold_number: gold,
            predicted_number,
            logprob_hier,
            logprob_lin,
            tie: logprob_hier == logprob_lin,
        }
    }

    pub fn correct(&self) -> bool {
        self.predicted_number == self.gold_number
    }
}

/// Scores both captions of `pair` against `image` and keeps the verb number
/// of the more probable one.
pub fn prefer_hierarchical<F: Scalar>(
    model: &Model<F>,
    vocab: &Vocab,
    pair_id: &str,
    pair: &MinimalPair,
    image: &ImageBuffer,
) -> Result<PairPrediction> {
    let hier = vocab.encode(&pair.hierarchical_caption);
    let lin = vocab.encode(&pair.linear_caption);
    let lp = model.caption_logprobs(image, &[&hier, &lin])?;
    Ok(PairPrediction::decide(pair_id, pair.gold_number, lp[0], lp[1]))
}

/// Runs [`prefer_hierarchical`] over test items; `image_of` chooses the image
/// each item is scored against (its own, or noise for a no-vision model).
pub fn predict_all<F, I>(model: &Model<F>, vocab: &Vocab, items: &[TestItem], image_of: I, exec: Exec) -> Result<Vec<PairPrediction>>
where
    F: Scalar,
    I: Fn(usize, &TestItem) -> Result<std::sync::Arc<ImageBuffer>> + Sync + Send,
{
    let idx: Vec<usize> = (0..items.len()).collect();
    exec.map(&idx, |&i| {
        let item = &items[i];
        let img = image_of(i, item)?;
        prefer_hierarchical(model, vocab, &item.id, &item.pair, &img)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub macro_f1: f64,
    pub f1_singular: f64,
    pub f1_plural: f64,
    pub n_items: usize,
    pub n_ties: usize,
}

fn class_f1(preds: &[PairPrediction], class: GrammaticalNumber) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for p in preds {
        match (p.gold_number == class, p.predicted_number == class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of per-class F1 over {singular, plural} gold numbers, ×100.
pub fn macro_f1(preds: &[PairPrediction]) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::Evaluation("no predictions to score".into()));
    }
    for class in [GrammaticalNumber::Singular, GrammaticalNumber::Plural] {
        if !preds.iter().any(|p| p.gold_number == class) {
            log::warn!("no {class} items among gold labels; its F1 counts as 0");
        }
    }
    let f1_singular = class_f1(preds, GrammaticalNumber::Singular);
    let f1_plural = class_f1(preds, GrammaticalNumber::Plural);
    Ok(EvalReport {
        macro_f1: 100.0 * (f1_singular + f1_plural) / 2.0,
        f1_singular,
        f1_plural,
        n_items: preds.len(),
        n_ties: preds.iter().filter(|p| p.tie).count(),
    })
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1 in [0, 1]; 0 when either side is empty or nothing matches.
pub fn rouge_l_f1<T: PartialEq>(hypothesis: &[T], reference: &[T]) -> f64 {
    let lcs = lcs_len(hypothesis, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / hypothesis.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn predictions_csv(preds: &[PairPrediction]) -> String {
    let mut s = String::from(PREDICTIONS_HEADER);
    s.push('\n');
    for p in preds {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.pair_id, p.gold_number, p.predicted_number, p.logprob_hier, p.logprob_lin, p.tie
        );
    }
    s
}

pub fn write_predictions(path: &Path, preds: &[PairPrediction]) -> Result<()> {
    fs::write(path, predictions_csv(preds)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use GrammaticalNumber::{Plural as P, Singular as S};

    fn preds(gold: &[GrammaticalNumber], pred: &[GrammaticalNumber]) -> Vec<PairPrediction> {
        gold.iter()
            .zip(pred)
            .enumerate()
            .map(|(i, (&g, &p))| {
                let (h, l) = if g == p { (-1.0, -2.0) } else { (-2.0, -1.0) };
                PairPrediction::decide(i.to_string(), g, h, l)
            })
            .collect()
    }

    #[test]
    fn comparison_and_ties() {
        let p = PairPrediction::decide("x", P, -5.0, -6.0);
        assert_eq!(p.predicted_number, P);
        assert!(!p.tie);
        let t = PairPrediction::decide("y", P, -4.0, -4.0);
        assert_eq!(t.predicted_number, S);
        assert!(t.tie);
    }

    #[test]
    fn hand_computed_macro_f1() {
        let r = macro_f1(&preds(&[S, S, P, P], &[S, S, P, S])).unwrap();
        assert!((r.f1_singular - 0.8).abs() < 1e-12);
        assert!((r.f1_plural - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{:.2}", r.macro_f1), "73.33");
        assert_eq!(macro_f1(&preds(&[S, P, P], &[S, P, P])).unwrap().macro_f1, 100.0);
        assert_eq!(macro_f1(&preds(&[S, P, P], &[P, S, S])).unwrap().macro_f1, 0.0);
        assert!(macro_f1(&[]).is_err());
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l_f1(&["a", "c"], &["a", "b", "c"]), 0.8);
        assert_eq!(rouge_l_f1(&["a", "b"], &["a", "b"]), 1.0);
        assert_eq!(rouge_l_f1(&["a"], &["b"]), 0.0);
        assert_eq!(rouge_l_f1::<&str>(&[], &["b"]), 0.0);
    }

    #[test]
    fn csv_layout() {
        let csv = predictions_csv(&[PairPrediction::decide("p1", S, -1.5, -2.0)]);
        assert_eq!(csv, "pair_id,gold,predicted,logprob_hier,logprob_lin,tie\np1,singular,singular,-1.5,-2,false\n");
    }
}
