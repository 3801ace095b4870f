//! End-to-end acceptance checks. Prints one `[pass]`/`[FAIL]` line per
//! criterion and exits nonzero if any fails.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use poslab::artgen::spec::{enumerate_specs, Numeral, VERB_INDEX};
use poslab::artgen::{build_dataset, realize_caption, RenderConfig};
use poslab::dataset::Dataset;
use poslab::eval::{macro_f1, rouge_l_f1, PairPrediction};
use poslab::grammar::{
    classify_agreement, make_minimal_pair, AgreementAnnotation, AgreementLabel, GrammaticalNumber, Inflections,
    VerbLexicon, VerbPhrase,
};
use poslab::model::check::{gradient_check, micro_config, prefix_oracle, random_probe};
use poslab::model::Model;
use poslab::protocol::{aggregate, run_experiment, Arm, ExperimentConfig, RunOptions};
use poslab::splits::{injected_count, SplitSizes};
use poslab::workspace::Workspace;
use poslab::Exec;

const DATASET_SEED: u64 = 1;
const CENSUS_BUDGET: Duration = Duration::from_secs(60);
const NUMERIC_BUDGET: Duration = Duration::from_secs(120);
const SWEEP_BUDGET: Duration = Duration::from_secs(30 * 60);
const GRAD_TOL: f64 = 1e-4;
const GRAD_SAMPLES: usize = 25;
const ORACLE_TOL: f64 = 1e-6;
const ROUGE_TOL: f64 = 1e-9;
const VISION_FLOOR: f64 = 90.0;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn census(dataset: &Dataset, built_in: Duration) -> Outcome {
    let specs = enumerate_specs();
    let plural = |n: Numeral| !matches!(n, Numeral::A);
    let (mut ambiguous, mut disambiguating) = (0usize, 0usize);
    for s in &specs {
        if plural(s.num1) == plural(s.num2) {
            ambiguous += 1;
        } else {
            disambiguating += 1;
        }
    }
    let c = dataset.manifest.counts;
    let sizes = dataset.manifest.splits.train.len()
        + dataset.manifest.splits.validation.len()
        + dataset.manifest.splits.test.len();
    let ok = specs.len() == 28_800
        && ambiguous == 16_000
        && disambiguating == 12_800
        && c.ambiguous == ambiguous
        && c.disambiguating == disambiguating
        && dataset.manifest.splits.train.len() == 15_000
        && dataset.manifest.splits.validation.len() == 1_000
        && dataset.manifest.splits.test.len() == 5_000
        && sizes == 21_000
        && built_in < CENSUS_BUDGET;
    outcome(
        ok,
        format!(
            "{} specs, {ambiguous} ambiguous / {disambiguating} disambiguating, splits 15000/1000/5000, built in {:.1}s",
            specs.len(),
            built_in.as_secs_f64()
        ),
    )
}

fn injection(dataset: &Dataset) -> poslab::Result<Outcome> {
    let mut got = Vec::new();
    let mut ok = true;
    for (rate, want) in [(0.0, 0usize), (0.001, 15), (0.005, 75), (0.01, 150)] {
        let b = dataset.bundle(rate, None)?;
        let (_, dis) = b.count_labels();
        ok &= b.injected_count == want && dis == want && b.train.len() == 15_000 + want;
        got.push(dis);
    }
    let small = dataset.bundle(0.001, Some(10_000))?;
    let (_, dis_small) = small.count_labels();
    ok &= injected_count(0.001, 10_000) == 10 && dis_small == 10;
    Ok(outcome(
        ok,
        format!("injected {got:?} at rates 0/0.001/0.005/0.01; {dis_small} at 0.001 of 10000"),
    ))
}

fn numeric_core() -> poslab::Result<Outcome> {
    let start = Instant::now();
    let cfg = micro_config(7);
    let report = gradient_check(&cfg, GRAD_SAMPLES, 7)?;
    let worst = report.max_rel_err();
    let model = Model::<f64>::init(cfg.clone())?;
    let (mut gap, mut norm) = (0.0f64, 0.0f64);
    for s in 0..16 {
        let (img, toks) = random_probe(&cfg, 100 + s);
        let o = prefix_oracle(&model, &img, &toks)?;
        gap = gap.max((o.logprob - o.oracle).abs());
        norm = norm.max(o.max_norm_dev);
    }
    let elapsed = start.elapsed();
    let ok = report.samples.len() >= GRAD_SAMPLES
        && worst < GRAD_TOL
        && norm < ORACLE_TOL
        && gap < ORACLE_TOL
        && elapsed < NUMERIC_BUDGET;
    Ok(outcome(
        ok,
        format!(
            "{} gradients max rel err {worst:.2e}; softmax dev {norm:.2e}; prefix gap {gap:.2e}; {:.1}s",
            report.samples.len(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn number(plural: bool) -> GrammaticalNumber {
    if plural {
        GrammaticalNumber::Plural
    } else {
        GrammaticalNumber::Singular
    }
}

fn oracle_f1(gold: &[bool], pred: &[bool]) -> f64 {
    let mut m = [[0usize; 2]; 2];
    for (&g, &p) in gold.iter().zip(pred) {
        m[g as usize][p as usize] += 1;
    }
    let mut total = 0.0;
    for c in 0..2 {
        let tp = m[c][c];
        let fp = m[1 - c][c];
        let fn_ = m[c][1 - c];
        let denom = 2 * tp + fp + fn_;
        total += if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    }
    100.0 * total / 2.0
}

fn oracle_rouge(a: &[u8], b: &[u8]) -> f64 {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    let lcs = t[a.len()][b.len()] as f64;
    if lcs == 0.0 {
        0.0
    } else {
        2.0 * lcs / (a.len() + b.len()) as f64
    }
}

fn metric_oracles() -> poslab::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut f1_mismatch = 0;
    for i in 0..1000 {
        let n = rng.gen_range(1..60);
        let gold: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let pred: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let preds: Vec<_> = gold
            .iter()
            .zip(&pred)
            .enumerate()
            .map(|(j, (&g, &p))| {
                let lp = if p == g { (0.0, -1.0) } else { (-1.0, 0.0) };
                PairPrediction::decide(format!("{i}-{j}"), number(g), lp.0, lp.1)
            })
            .collect();
        debug_assert!(preds.iter().zip(&pred).all(|(x, &p)| x.predicted_number == number(p)));
        if macro_f1(&preds)?.macro_f1 != oracle_f1(&gold, &pred) {
            f1_mismatch += 1;
        }
    }
    let hand: Vec<_> = [(false, false), (false, false), (true, true), (true, false)]
        .iter()
        .enumerate()
        .map(|(i, &(g, p))| {
            let (h, l) = if g == p { (0.0, -1.0) } else { (-1.0, 0.0) };
            PairPrediction::decide(i.to_string(), number(g), h, l)
        })
        .collect();
    let hand_f1 = macro_f1(&hand)?.macro_f1;
    let toy = rouge_l_f1(&["a", "c"], &["a", "b", "c"]);
    let mut rouge_gap: f64 = 0.0;
    for _ in 0..1000 {
        let la = rng.gen_range(0..25);
        let lb = rng.gen_range(0..25);
        let a: Vec<u8> = (0..la).map(|_| rng.gen_range(0..6)).collect();
        let b: Vec<u8> = (0..lb).map(|_| rng.gen_range(0..6)).collect();
        rouge_gap = rouge_gap.max((rouge_l_f1(&a, &b) - oracle_rouge(&a, &b)).abs());
    }
    let ok = f1_mismatch == 0
        && (hand_f1 - 73.33).abs() < 0.005
        && (toy - 0.8).abs() < 1e-12
        && rouge_gap < ROUGE_TOL;
    Ok(outcome(
        ok,
        format!(
            "{f1_mismatch} macro-F1 mismatches; hand case {hand_f1:.2}; rouge toy {toy:.3}; rouge oracle gap {rouge_gap:.1e}"
        ),
    ))
}

fn replication(dataset: &Dataset) -> poslab::Result<Outcome> {
    let dir = tempfile::tempdir().map_err(|e| poslab::Error::io(Path::new("tempdir"), e))?;
    let ws = Workspace::new(dir.path());
    let cfg = ExperimentConfig {
        injection_rates: vec![0.0, 0.01],
        arms: vec![Arm::Vision, Arm::NoVision],
        seeds: vec![1, 2],
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let opts = RunOptions {
        rouge_items: Some(200),
        ..RunOptions::default()
    };
    let records = run_experiment(&cfg, dataset, &ws, opts)?;
    let elapsed = start.elapsed();
    let summary = aggregate(&records)?;
    let first = *summary.steps.first().unwrap_or(&0);
    let last = *summary.steps.last().unwrap_or(&0);
    let f1 = |arm, rate, step| summary.row(arm, rate, step).map(|r| r.f1_mean).unwrap_or(f64::NAN);
    let vision_final = f1(Arm::Vision, 0.01, last);
    let delta_first = f1(Arm::Vision, 0.01, first) - f1(Arm::NoVision, 0.01, first);
    let ordering = [Arm::Vision, Arm::NoVision]
        .iter()
        .all(|&arm| f1(arm, 0.0, last) < f1(arm, 0.01, last));
    for r in &summary.rows {
        println!(
            "      {:<9} rate {:<5} step {:>5}: macro-F1 {:6.2} [{:6.2}, {:6.2}]",
            r.arm.to_string(),
            r.rate,
            r.step,
            r.f1_mean,
            r.f1_min,
            r.f1_max
        );
    }
    let a = vision_final >= VISION_FLOOR;
    let b = delta_first > 0.0;
    let ok = a && b && ordering && summary.failed == 0 && elapsed < SWEEP_BUDGET;
    Ok(outcome(
        ok,
        format!(
            "(a) vision {vision_final:.1} at step {last} [{}]; (b) delta {delta_first:+.2} at step {first} [{}]; \
             (c) rate ordering [{}]; {} failed runs; {:.0}s",
            if a { "ok" } else { "miss" },
            if b { "ok" } else { "miss" },
            if ordering { "ok" } else { "miss" },
            summary.failed,
            elapsed.as_secs_f64()
        ),
    ))
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.train_size = Some(2_000);
    cfg.injection_rates = vec![0.01];
    cfg.arms = vec![Arm::Vision, Arm::NoVision];
    cfg.seeds = vec![3];
    cfg.train.max_steps = 24;
    cfg.train.batch_size = 16;
    cfg.eval_steps = vec![8, 16, 24];
    cfg
}

fn metrics_files(root: &Path) -> poslab::Result<HashMap<String, Vec<u8>>> {
    let mut out = HashMap::new();
    let runs = root.join("runs");
    for entry in fs::read_dir(&runs).map_err(|e| poslab::Error::io(&runs, e))? {
        let entry = entry.map_err(|e| poslab::Error::io(&runs, e))?;
        if !entry.path().is_dir() {
            continue;
        }
        for name in ["metrics.csv", "predictions-step-000024.csv"] {
            let p = entry.path().join(name);
            let bytes = fs::read(&p).map_err(|e| poslab::Error::io(&p, e))?;
            out.insert(format!("{}/{name}", entry.file_name().to_string_lossy()), bytes);
        }
    }
    Ok(out)
}

fn determinism(dataset: &Dataset) -> poslab::Result<Outcome> {
    let cfg = small_config();
    let tmp = |_| tempfile::tempdir().map_err(|e| poslab::Error::io(Path::new("tempdir"), e));
    let (d1, d2, d3) = (tmp(1)?, tmp(2)?, tmp(3)?);
    let opts = |exec, stop_after| RunOptions {
        exec,
        stop_after,
        rouge_items: Some(8),
    };
    run_experiment(&cfg, dataset, &Workspace::new(d1.path()), opts(Exec::default(), None))?;
    run_experiment(&cfg, dataset, &Workspace::new(d2.path()), opts(Exec::Sequential, None))?;
    let ws3 = Workspace::new(d3.path());
    let interrupted = run_experiment(&cfg, dataset, &ws3, opts(Exec::default(), Some(12)))?;
    let stopped_early = interrupted.iter().all(|r| r.rows.last().map(|m| m.step) == Some(8));
    run_experiment(&cfg, dataset, &ws3, opts(Exec::default(), None))?;
    let (a, b, c) = (metrics_files(d1.path())?, metrics_files(d2.path())?, metrics_files(d3.path())?);
    let repeat = !a.is_empty() && a == b;
    let resumed = a == c;
    Ok(outcome(
        repeat && resumed && stopped_early,
        format!(
            "{} files byte-identical across repeat [{}] and across kill at step 12 + resume [{}]",
            a.len(),
            if repeat { "ok" } else { "differs" },
            if resumed && stopped_early { "ok" } else { "differs" }
        ),
    ))
}

fn grammar_properties() -> poslab::Result<Outcome> {
    use GrammaticalNumber::*;
    let mut table_ok = true;
    for s in [Singular, Plural] {
        for a in [Singular, Plural] {
            for v in [Singular, Plural] {
                let ann = AgreementAnnotation {
                    subject_index: 0,
                    attractor_index: 1,
                    verb_index: 2,
                    subject_number: s,
                    attractor_number: a,
                    verb_number: v,
                };
                let got = classify_agreement(&ann).ok();
                let want = if v != s {
                    None
                } else if s == a {
                    Some(AgreementLabel::Ambiguous)
                } else {
                    Some(AgreementLabel::Disambiguating)
                };
                table_ok &= got == want;
            }
        }
    }
    let lexicon = VerbLexicon::artificial();
    let mut round_trips = 0;
    for vp in VerbPhrase::ALL {
        for (n1, n2) in [(Numeral::A, Numeral::Two), (Numeral::Three, Numeral::A)] {
            let spec = enumerate_specs()
                .into_iter()
                .find(|s| s.vp == vp && s.num1 == n1 && s.num2 == n2)
                .expect("grammar covers every verb phrase");
            let (caption, ann) = realize_caption(&spec);
            let pair = make_minimal_pair(&caption, &ann, spec.index(), &lexicon)?;
            let diffs: Vec<usize> = (0..caption.len())
                .filter(|&i| pair.hierarchical_caption[i] != pair.linear_caption[i])
                .collect();
            let (sg, pl) = lexicon.forms_of(&caption[VERB_INDEX]).expect("verb in lexicon");
            let reinflected = {
                let mut c = pair.linear_caption.clone();
                c[pair.verb_index] = match pair.gold_number {
                    Singular => sg.clone(),
                    Plural => pl.clone(),
                };
                c
            };
            let linear_form = match ann.attractor_number {
                Singular => &sg,
                Plural => &pl,
            };
            if diffs == [VERB_INDEX]
                && pair.hierarchical_caption.len() == pair.linear_caption.len()
                && &pair.linear_caption[VERB_INDEX] == linear_form
                && reinflected == pair.hierarchical_caption
            {
                round_trips += 1;
            }
        }
    }
    Ok(outcome(
        table_ok && round_trips == 20,
        format!(
            "2x2x2 classification table [{}]; {round_trips}/20 minimal-pair round trips over 10 verb phrases",
            if table_ok { "ok" } else { "wrong" }
        ),
    ))
}

fn report(all: &mut bool, id: u32, name: &str, result: poslab::Result<Outcome>) {
    let o = result.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    println!("[{}] {id}. {name}: {}", if o.ok { "pass" } else { "FAIL" }, o.detail);
    *all &= o.ok;
}

fn main() -> ExitCode {
    let mut all = true;
    let start = Instant::now();
    let dataset = build_dataset(DATASET_SEED, SplitSizes::default(), &RenderConfig::default(), Exec::default());
    let built_in = start.elapsed();
    let dataset = match dataset {
        Ok(d) => d,
        Err(e) => {
            println!("[FAIL] dataset build: {e}");
            return ExitCode::FAILURE;
        }
    };
    report(&mut all, 1, "dataset census", Ok(census(&dataset, built_in)));
    report(&mut all, 2, "injection bookkeeping", injection(&dataset));
    report(&mut all, 3, "numeric core", numeric_core());
    report(&mut all, 4, "metric oracles", metric_oracles());
    report(&mut all, 7, "grammar properties", grammar_properties());
    report(&mut all, 6, "determinism and resume", determinism(&dataset));
    report(&mut all, 5, "desk-scale replication", replication(&dataset));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
