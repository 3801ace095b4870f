use std::collections::BTreeMap;

use serde::Serialize;

use super::{Arm, RunRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub arm: Arm,
    pub rate: f64,
    pub step: u64,
    pub n_seeds: usize,
    pub f1_mean: f64,
    pub f1_min: f64,
    pub f1_max: f64,
    pub rouge_mean: f64,
    pub loss_mean: f64,
}

impl SummaryRow {
    pub fn f1_range(&self) -> f64 {
        self.f1_max - self.f1_min
    }
}

/// Seed-mean Vision F1 minus seed-mean NoVision F1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub rate: f64,
    pub step: u64,
    pub vision: f64,
    pub novision: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub steps: Vec<u64>,
    pub rows: Vec<SummaryRow>,
    pub deltas: Vec<DeltaRow>,
    pub failed: usize,
}

impl Summary {
    pub fn row(&self, arm: Arm, rate: f64, step: u64) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.arm == arm && r.rate == rate && r.step == step)
    }
}

/// Mean and range over seeds per (arm, rate, step), plus Δ per (rate, step).
/// Failed runs are excluded and counted; running ones are ignored.
pub fn aggregate(records: &[RunRecord]) -> Result<Summary> {
    let failed = records.iter().filter(|r| r.failed()).count();
    let done: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.status == super::RunStatus::Completed)
        .collect();
    let Some(first) = done.first() else {
        return Err(Error::Aggregation("no completed runs to aggregate".into()));
    };
    let steps: Vec<u64> = first.rows.iter().map(|r| r.step).collect();
    for r in &done {
        let s: Vec<u64> = r.rows.iter().map(|x| x.step).collect();
        if s != steps {
            return Err(Error::Aggregation(format!(
                "run {} evaluated at {s:?}, others at {steps:?}",
                r.run_id
            )));
        }
    }
    // keyed by (arm, rate bits) so iteration order is deterministic
    let mut groups: BTreeMap<(Arm, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in &done {
        groups.entry((r.spec.arm, r.spec.rate.to_bits())).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((arm, rate_bits), runs) in &groups {
        for (i, &step) in steps.iter().enumerate() {
            let f1: Vec<f64> = runs.iter().map(|r| r.rows[i].macro_f1).collect();
            let n = runs.len() as f64;
            rows.push(SummaryRow {
                arm: *arm,
                rate: f64::from_bits(*rate_bits),
                step,
                n_seeds: runs.len(),
                f1_mean: f1.iter().sum::<f64>() / n,
                f1_min: f1.iter().copied().fold(f64::INFINITY, f64::min),
                f1_max: f1.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                rouge_mean: runs.iter().map(|r| r.rows[i].rouge_l).sum::<f64>() / n,
                loss_mean: runs.iter().map(|r| r.rows[i].loss).sum::<f64>() / n,
            });
        }
    }
    rows.sort_by(|a, b| a.rate.total_cmp(&b.rate).then(a.arm.cmp(&b.arm)).then(a.step.cmp(&b.step)));
    let mut deltas = Vec::new();
    let mut rates: Vec<f64> = rows.iter().map(|r| r.rate).collect();
    rates.dedup();
    for &rate in &rates {
        for &step in &steps {
            let find = |arm| rows.iter().find(|r| r.arm == arm && r.rate == rate && r.step == step);
            if let (Some(v), Some(n)) = (find(Arm::Vision), find(Arm::NoVision)) {
                deltas.push(DeltaRow {
                    rate,
                    step,
                    vision: v.f1_mean,
                    novision: n.f1_mean,
                    delta: v.f1_mean - n.f1_mean,
                });
            }
        }
    }
    Ok(Summary {
        steps,
        rows,
        deltas,
        failed,
    })
}
