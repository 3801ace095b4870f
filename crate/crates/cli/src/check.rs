use std::process::ExitCode;

use anyhow::Result;

use poslab::eval::{macro_f1, rouge_l_f1, PairPrediction};
use poslab::grammar::GrammaticalNumber::{Plural, Singular};
use poslab::model::check::{
    causality_violation, closed_form_param_count, gradient_check, micro_config, prefix_oracle, random_probe,
};
use poslab::model::{Model, ModelConfig, ModelParams};

const GRAD_TOL: f64 = 1e-4;
const ORACLE_TOL: f64 = 1e-6;

fn line(ok: bool, name: &str, detail: String) -> bool {
    println!("[{}] {name}: {detail}", if ok { "pass" } else { "FAIL" });
    ok
}

pub fn run(samples: usize, seed: u64) -> Result<ExitCode> {
    let mut all = true;
    let cfg = micro_config(seed);

    let grads = gradient_check(&cfg, samples, seed)?;
    let worst = grads.max_rel_err();
    all &= line(
        worst < GRAD_TOL && grads.samples.len() >= samples,
        "finite-difference gradients",
        format!("{} parameters, max relative error {worst:.2e}", grads.samples.len()),
    );

    let model = Model::<f64>::init(cfg.clone())?;
    let (mut gap, mut norm, mut causal) = (0.0f64, 0.0f64, 0.0f64);
    for s in 0..8 {
        let (img, toks) = random_probe(&cfg, seed.wrapping_add(s));
        let o = prefix_oracle(&model, &img, &toks)?;
        gap = gap.max((o.logprob - o.oracle).abs());
        norm = norm.max(o.max_norm_dev);
        causal = causal.max(causality_violation(&model, &img, &toks)?);
    }
    all &= line(gap < ORACLE_TOL, "prefix-by-prefix log-probability oracle", format!("max gap {gap:.2e}"));
    all &= line(norm < ORACLE_TOL, "softmax normalization", format!("max |sum - 1| {norm:.2e}"));
    all &= line(causal == 0.0, "causal masking", format!("max change {causal:.2e}"));

    let big = ModelConfig {
        vocab_size: 64,
        d_model: 128,
        n_heads: 4,
        encoder_layers: 2,
        decoder_layers: 2,
        patch_size: 8,
        max_caption_len: 16,
        canvas_size: 64,
        seed,
    };
    let counted = ModelParams::<f32>::init(&big)?.count();
    let closed = closed_form_param_count(&big);
    all &= line(counted == closed, "parameter count", format!("shape walk {counted}, closed form {closed}"));

    let preds: Vec<PairPrediction> = [(Singular, true), (Singular, true), (Plural, true), (Plural, false)]
        .iter()
        .enumerate()
        .map(|(i, &(g, ok))| PairPrediction::decide(i.to_string(), g, if ok { -1.0 } else { -2.0 }, -1.5))
        .collect();
    let f1 = macro_f1(&preds)?.macro_f1;
    all &= line(format!("{f1:.2}") == "73.33", "macro-F1 hand case", format!("{f1:.2}"));
    let r = rouge_l_f1(&["a", "c"], &["a", "b", "c"]);
    all &= line((r - 0.8).abs() < 1e-12, "ROUGE-L hand case", format!("{r}"));

    Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
