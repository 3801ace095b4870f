//! Poverty-of-stimulus experiment sweeps: injection rates × arms × seeds,
//! checkpoint-wise evaluation, and seed aggregation.

mod aggregate;
mod run;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::GroundedPair;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::model::train::mix;
use crate::model::{ModelConfig, TrainSettings};

pub use aggregate::{aggregate, DeltaRow, Summary, SummaryRow};
pub use run::{batch_indices, load_records, read_metrics, run_experiment, RunOptions};

pub const METRICS_HEADER: &str = "step,loss,macro_f1,rouge_l";
/// Beam width used when decoding validation captions for ROUGE-L.
pub const ROUGE_BEAM: usize = 4;

const NOISE_SALT: u64 = 0x006e_6f69_7365;
const SHUFFLE_SALT: u64 = 0x7368_7566;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Vision,
    #[serde(rename = "novision")]
    NoVision,
    Shuffled,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Vision => "vision",
            Arm::NoVision => "novision",
            Arm::Shuffled => "shuffled",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vision" => Ok(Arm::Vision),
            "novision" | "no-vision" => Ok(Arm::NoVision),
            "shuffled" => Ok(Arm::Shuffled),
            other => Err(Error::Config(format!("unknown arm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    /// Name under the workspace `datasets/` directory, or a path.
    pub path: String,
    /// Truncates the training base before injection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetRef,
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub injection_rates: Vec<f64>,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    pub eval_steps: Vec<u64>,
    pub noise_replace_prob: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetRef {
                path: "artificial".into(),
                train_size: None,
            },
            model: ModelConfig::default(),
            train: TrainSettings::default(),
            injection_rates: vec![0.0, 0.001, 0.005, 0.01],
            arms: vec![Arm::Vision, Arm::NoVision],
            seeds: vec![1, 2],
            eval_steps: vec![100, 500, 1000],
            noise_replace_prob: 0.2,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Canonical serialization; also the bytes hashed into run ids.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        self.model.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if self.arms.is_empty() {
            return fail("arms must not be empty".into());
        }
        if self.injection_rates.is_empty() {
            return fail("injection_rates must not be empty".into());
        }
        if let Some(r) = self.injection_rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return fail(format!("injection rate {r} outside [0, 1]"));
        }
        if self.eval_steps.is_empty() {
            return fail("eval_steps must not be empty".into());
        }
        if self.eval_steps.windows(2).any(|w| w[0] >= w[1]) || self.eval_steps[0] == 0 {
            return fail(format!("eval_steps {:?} must be positive and strictly ascending", self.eval_steps));
        }
        if *self.eval_steps.last().unwrap() > self.train.max_steps {
            return fail(format!(
                "eval step {} exceeds max_steps {}",
                self.eval_steps.last().unwrap(),
                self.train.max_steps
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_replace_prob) {
            return fail(format!("noise_replace_prob {} outside [0, 1]", self.noise_replace_prob));
        }
        let mut arms = self.arms.clone();
        arms.sort();
        arms.dedup();
        if arms.len() != self.arms.len() {
            return fail("arms contain duplicates".into());
        }
        Ok(())
    }

    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &rate in &self.injection_rates {
            for &arm in &self.arms {
                for &seed in &self.seeds {
                    out.push(RunSpec { arm, rate, seed });
                }
            }
        }
        out
    }
}

/// One cell of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub arm: Arm,
    pub rate: f64,
    pub seed: u64,
}

impl RunSpec {
    pub fn key(&self) -> String {
        format!("arm={};rate={};seed={}", self.arm, self.rate, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub loss: f64,
    pub macro_f1: f64,
    pub rouge_l: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.step, self.loss, self.macro_f1, self.rouge_l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub spec: RunSpec,
    pub run_id: String,
    pub dir: PathBuf,
    pub injected_count: usize,
    pub rows: Vec<MetricsRow>,
    pub checkpoints: Vec<PathBuf>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        matches!(self.status, RunStatus::Failed { .. })
    }
}

/// White noise standing in for the image of dataset item `ordinal`.
pub fn noise_image(canvas: usize, seed: u64, ordinal: usize) -> ImageBuffer {
    ImageBuffer::white_noise(canvas, mix(seed, ordinal as u64, NOISE_SALT))
}

/// Vision: unchanged. NoVision: every image becomes seeded white noise.
/// Shuffled: images permuted by a seeded uniform permutation; captions stay.
pub fn apply_arm(pairs: &[GroundedPair], arm: Arm, seed: u64, canvas: usize) -> Result<Vec<GroundedPair>> {
    if pairs.is_empty() {
        return Err(Error::Input("no pairs to transform".into()));
    }
    let mut out = pairs.to_vec();
    match arm {
        Arm::Vision => {}
        Arm::NoVision => {
            for p in &mut out {
                p.image = Some(Arc::new(noise_image(canvas, seed, p.ordinal)));
            }
        }
        Arm::Shuffled => {
            let mut perm: Vec<usize> = (0..pairs.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, pairs.len() as u64, SHUFFLE_SALT)));
            for (p, &src) in out.iter_mut().zip(&perm) {
                p.image = pairs[src].image.clone();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artgen::{enumerate_specs, grounded_pair, RenderConfig};

    fn pairs(n: usize) -> Vec<GroundedPair> {
        let cfg = RenderConfig::default();
        enumerate_specs().iter().step_by(97).take(n).map(|s| grounded_pair(s, &cfg).unwrap()).collect()
    }

    #[test]
    fn arms_transform_images_only() {
        let ps = pairs(40);
        let v = apply_arm(&ps, Arm::Vision, 1, 64).unwrap();
        assert_eq!(v.iter().map(|p| p.image.clone()).collect::<Vec<_>>(), ps.iter().map(|p| p.image.clone()).collect::<Vec<_>>());

        let n1 = apply_arm(&ps, Arm::NoVision, 1, 64).unwrap();
        let n2 = apply_arm(&ps, Arm::NoVision, 1, 64).unwrap();
        for ((a, b), orig) in n1.iter().zip(&n2).zip(&ps) {
            assert_eq!(a.image, b.image);
            assert_ne!(a.image, orig.image);
            assert_eq!(a.tokens, orig.tokens);
        }

        let s = apply_arm(&ps, Arm::Shuffled, 1, 64).unwrap();
        let mut before: Vec<Vec<u8>> = ps.iter().map(|p| p.image.as_ref().unwrap().pixels.clone()).collect();
        let mut after: Vec<Vec<u8>> = s.iter().map(|p| p.image.as_ref().unwrap().pixels.clone()).collect();
        let moved = before.iter().zip(&after).filter(|(a, b)| a != b).count();
        assert!(moved >= 30, "{moved}");
        before.sort();
        after.sort();
        assert_eq!(before, after);
        assert!(apply_arm(&[], Arm::Vision, 1, 64).is_err());
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        let typo = text.replace("noise_replace_prob", "noise_replace_prb");
        assert!(ExperimentConfig::from_toml(&typo).is_err());
        let nested = text.replace("d_model", "dmodel");
        assert!(ExperimentConfig::from_toml(&nested).is_err());
        assert!(ExperimentConfig::from_toml(&text.replace("\"novision\"", "\"blind\"")).is_err());
    }

    #[test]
    fn config_invariants() {
        let bad = ExperimentConfig { eval_steps: vec![500, 100], ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { eval_steps: vec![100, 2000], ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { seeds: vec![], ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_is_cartesian() {
        let cfg = ExperimentConfig { injection_rates: vec![0.0, 0.01], ..ExperimentConfig::default() };
        assert_eq!(cfg.runs().len(), 8);
    }
}
