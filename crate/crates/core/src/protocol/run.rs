use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_arm, noise_image, Arm, ExperimentConfig, MetricsRow, RunRecord, RunSpec, RunStatus, METRICS_HEADER, ROUGE_BEAM};
use crate::dataset::{Dataset, GroundedPair, SplitBundle};
use crate::error::{Error, Result};
use crate::eval::{macro_f1, predict_all, rouge_l_f1, write_predictions};
use crate::exec::Exec;
use crate::grammar::AgreementLabel;
use crate::model::train::{apply_noise, mix, Example};
use crate::model::{generate_caption, load_checkpoint, save_checkpoint, Checkpoint, Model, OptimizerState};
use crate::vocab::Vocab;
use crate::workspace::{run_id, Workspace};

const BATCH_SALT: u64 = 0x0062_6174_6368;
const INIT_SALT: u64 = 0x696e_6974;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub exec: Exec,
    /// Stop every run once this many updates are done (simulated interrupt).
    pub stop_after: Option<u64>,
    /// Score ROUGE-L on at most this many validation items.
    pub rouge_items: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunInfo {
    run_id: String,
    spec: RunSpec,
    injected_count: usize,
    train_items: usize,
}

/// Training-set positions for update `step`: consecutive slices of a
/// per-epoch seeded shuffle. Depends only on `(n, batch, seed, step)`.
pub fn batch_indices(n: usize, batch: usize, seed: u64, step: u64) -> Vec<usize> {
    let mut perms: HashMap<u64, Vec<usize>> = HashMap::new();
    let start = step as u128 * batch as u128;
    (0..batch)
        .map(|j| {
            let pos = start + j as u128;
            let epoch = (pos / n as u128) as u64;
            let perm = perms.entry(epoch).or_insert_with(|| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, epoch, BATCH_SALT)));
                p
            });
            perm[(pos % n as u128) as usize]
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut lines = text.lines();
    if lines.next().is_some_and(|h| h != METRICS_HEADER) {
        return Err(Error::Dataset(format!("{}: unexpected metrics header", path.display())));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Dataset(format!("{}: bad metrics row '{l}'", path.display()));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(MetricsRow {
                step: f[0].parse().map_err(|_| bad())?,
                loss: f[1].parse().map_err(|_| bad())?,
                macro_f1: f[2].parse().map_err(|_| bad())?,
                rouge_l: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn append_metrics(path: &Path, row: &MetricsRow) -> Result<()> {
    let mut f = fs::OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", row.to_csv()).map_err(|e| Error::io(path, e))
}

fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("step-{step:06}.ckpt"))
}

/// Reads every run directory under the workspace.
pub fn load_records(ws: &Workspace) -> Result<Vec<RunRecord>> {
    let runs = ws.runs_dir();
    let entries = match fs::read_dir(&runs) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(&runs, e)),
    };
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("run.json").is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| load_record(d)).collect()
}

fn load_record(dir: &Path) -> Result<RunRecord> {
    let info: RunInfo = read_json(&dir.join("run.json"))?;
    let status_path = dir.join("status.json");
    let status = if status_path.is_file() {
        read_json(&status_path)?
    } else {
        RunStatus::Running
    };
    let rows = read_metrics(&dir.join("metrics.csv"))?;
    let checkpoints = rows.iter().map(|r| checkpoint_path(dir, r.step)).filter(|p| p.is_file()).collect();
    Ok(RunRecord {
        spec: info.spec,
        run_id: info.run_id,
        dir: dir.to_path_buf(),
        injected_count: info.injected_count,
        rows,
        checkpoints,
        status,
    })
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    config_text: &'a str,
    vocab: &'a Vocab,
    ws: &'a Workspace,
    opts: RunOptions,
}

/// Every (rate × arm × seed) run of the sweep, resuming finished or
/// interrupted runs from their directories. A diverged run is recorded as
/// failed and the sweep continues.
pub fn run_experiment(cfg: &ExperimentConfig, dataset: &Dataset, ws: &Workspace, opts: RunOptions) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if dataset.manifest.canvas_size != cfg.model.canvas_size {
        return Err(Error::Config(format!(
            "dataset canvas {} differs from model canvas {}",
            dataset.manifest.canvas_size, cfg.model.canvas_size
        )));
    }
    let vocab = dataset_vocab(dataset)?;
    if vocab.len() > cfg.model.vocab_size {
        return Err(Error::Config(format!(
            "dataset vocabulary has {} entries but model.vocab_size is {}",
            vocab.len(),
            cfg.model.vocab_size
        )));
    }
    let config_text = cfg.to_toml()?;
    let _lock = ws.lock()?;
    let ctx = Context {
        cfg,
        config_text: &config_text,
        vocab: &vocab,
        ws,
        opts,
    };
    let mut records = Vec::new();
    for &rate in &cfg.injection_rates {
        let bundle = dataset.bundle(rate, cfg.dataset.train_size)?;
        let (_, disamb) = bundle.count_labels();
        if disamb != bundle.injected_count {
            return Err(Error::Partition(format!(
                "training set holds {disamb} disambiguating items, expected {}",
                bundle.injected_count
            )));
        }
        log::info!(
            "rate {rate}: injected {} disambiguating items into {} training items",
            bundle.injected_count,
            bundle.train.len()
        );
        for &arm in &cfg.arms {
            for &seed in &cfg.seeds {
                records.push(run_one(&ctx, &bundle, RunSpec { arm, rate, seed })?);
            }
        }
    }
    Ok(records)
}

/// Every caption and minimal-pair variant of the dataset, so no scored
/// token maps to UNK.
pub fn dataset_vocab(dataset: &Dataset) -> Result<Vocab> {
    let mut captions: Vec<Vec<String>> = dataset.pairs.iter().map(|p| p.tokens.clone()).collect();
    for p in &dataset.pairs {
        if p.label == AgreementLabel::Disambiguating {
            captions.push(p.minimal_pair()?.linear_caption);
        }
    }
    Ok(Vocab::from_captions(captions.iter()))
}

fn examples(pairs: &[GroundedPair], vocab: &Vocab) -> Result<Vec<Example>> {
    pairs
        .iter()
        .map(|p| {
            let image = p
                .image
                .clone()
                .ok_or_else(|| Error::Dataset(format!("pair {} has no image; only the novision arm can use it", p.id)))?;
            Ok(Example {
                image,
                tokens: vocab.encode(&p.tokens),
            })
        })
        .collect()
}

fn run_one(ctx: &Context<'_>, bundle: &SplitBundle, spec: RunSpec) -> Result<RunRecord> {
    let id = run_id(ctx.config_text.as_bytes(), &spec.key());
    let dir = ctx.ws.run_dir(&id);
    fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(&dir, e))?;

    let config_path = dir.join("config.toml");
    match fs::read_to_string(&config_path) {
        Ok(existing) if existing != ctx.config_text => {
            return Err(Error::Config(format!("run id {id} collides with a run of a different config")));
        }
        Ok(_) => {}
        Err(_) => fs::write(&config_path, ctx.config_text).map_err(|e| Error::io(&config_path, e))?,
    }
    let info_path = dir.join("run.json");
    if !info_path.is_file() {
        let info = RunInfo {
            run_id: id.clone(),
            spec,
            injected_count: bundle.injected_count,
            train_items: bundle.train.len(),
        };
        write_json(&info_path, &info)?;
    }
    let record = load_record(&dir)?;
    if record.status != RunStatus::Running {
        log::info!("run {id} ({}) already {:?}", spec.key(), record.status);
        return Ok(record);
    }
    log::info!("run {id}: {}", spec.key());
    match train_run(ctx, bundle, spec, &dir) {
        Ok(finished) => {
            if finished {
                write_json(&dir.join("status.json"), &RunStatus::Completed)?;
            }
        }
        Err(e @ Error::Diverged { .. }) => {
            log::warn!("run {id} failed: {e}");
            write_json(&dir.join("status.json"), &RunStatus::Failed { error: e.to_string() })?;
        }
        Err(e) => return Err(e),
    }
    load_record(&dir)
}

/// Trains (resuming from the newest checkpoint with a metrics row) until
/// `max_steps` or the simulated interrupt. Returns whether it finished.
fn train_run(ctx: &Context<'_>, bundle: &SplitBundle, spec: RunSpec, dir: &Path) -> Result<bool> {
    let cfg = ctx.cfg;
    let exec = ctx.opts.exec;
    let canvas = cfg.model.canvas_size;
    let train = examples(&apply_arm(&bundle.train, spec.arm, spec.seed, canvas)?, ctx.vocab)?;
    let mut validation = bundle.validation.clone();
    if let Some(k) = ctx.opts.rouge_items {
        validation.truncate(k);
    }
    let validation = examples(&apply_arm(&validation, spec.arm, spec.seed, canvas)?, ctx.vocab)?;
    let test_images: Vec<Arc<_>> = bundle
        .test
        .iter()
        .map(|t| match spec.arm {
            Arm::NoVision => Ok(Arc::new(noise_image(canvas, spec.seed, t.pair.source))),
            _ => t
                .image
                .clone()
                .ok_or_else(|| Error::Dataset(format!("test pair {} has no image", t.id))),
        })
        .collect::<Result<_>>()?;

    let metrics_path = dir.join("metrics.csv");
    let mut rows = read_metrics(&metrics_path)?;
    let resume = rows
        .iter()
        .rev()
        .map(|r| r.step)
        .find(|&s| checkpoint_path(dir, s).is_file());
    let (mut model, mut opt, start) = match resume {
        Some(step) => {
            let ck: Checkpoint<f32> = load_checkpoint(&checkpoint_path(dir, step))?;
            log::info!("resuming from step {step}");
            rows.retain(|r| r.step <= step);
            (
                Model {
                    cfg: ck.config,
                    params: ck.params,
                },
                ck.optimizer,
                step,
            )
        }
        None => {
            rows.clear();
            let mcfg = crate::model::ModelConfig {
                seed: mix(cfg.model.seed, spec.seed, INIT_SALT),
                ..cfg.model.clone()
            };
            let model = Model::<f32>::init(mcfg)?;
            let opt = OptimizerState::new(&model.params.tensors);
            (model, opt, 0)
        }
    };
    write_metrics(&metrics_path, &rows)?;

    let mut loss_sum = 0.0;
    let mut loss_n = 0u64;
    for step in start..cfg.train.max_steps {
        let idx = batch_indices(train.len(), cfg.train.batch_size, spec.seed, step);
        let mut batch: Vec<Example> = idx.iter().map(|&i| train[i].clone()).collect();
        apply_noise(&mut batch, cfg.noise_replace_prob, spec.seed, step, canvas);
        loss_sum += model.train_step(&mut opt, &cfg.train, &batch, exec)?;
        loss_n += 1;
        let done = step + 1;
        if cfg.eval_steps.contains(&done) {
            let preds = predict_all(&model, ctx.vocab, &bundle.test, |i, _| Ok(test_images[i].clone()), exec)?;
            let report = macro_f1(&preds)?;
            let rouge = exec
                .map(&validation, |ex| {
                    generate_caption(&model, &ex.image, ROUGE_BEAM).map(|h| rouge_l_f1(&h, &ex.tokens))
                })
                .into_iter()
                .collect::<Result<Vec<f64>>>()?;
            let row = MetricsRow {
                step: done,
                loss: loss_sum / loss_n as f64,
                macro_f1: report.macro_f1,
                rouge_l: rouge.iter().sum::<f64>() / rouge.len().max(1) as f64,
            };
            log::info!(
                "step {done}: loss {:.4} macro-F1 {:.2} ROUGE-L {:.3} ties {}",
                row.loss,
                row.macro_f1,
                row.rouge_l,
                report.n_ties
            );
            write_predictions(&dir.join(format!("predictions-step-{done:06}.csv")), &preds)?;
            let ck = Checkpoint {
                config: model.cfg.clone(),
                params: model.params.clone(),
                optimizer: opt.clone(),
                step: done,
                rng_state: [spec.seed.to_le_bytes(), done.to_le_bytes()].concat(),
            };
            save_checkpoint(&ck, &checkpoint_path(dir, done))?;
            append_metrics(&metrics_path, &row)?;
            loss_sum = 0.0;
            loss_n = 0;
        }
        if ctx.opts.stop_after == Some(done) {
            return Ok(false);
        }
    }
    Ok(true)
}
