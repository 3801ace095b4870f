//! Summary tables and learning-curve plots from aggregated runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::protocol::{Arm, Summary};

pub const SUMMARY_HEADER: &str = "rate,arm,step,n_seeds,f1_mean,f1_min,f1_max,f1_range,rouge_l_mean,loss_mean";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// One row per (rate, arm, step).
pub fn summary_csv(s: &Summary) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in &s.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.2},{:.2},{:.2},{:.2},{:.4},{:.4}",
            r.rate,
            r.arm,
            r.step,
            r.n_seeds,
            r.f1_mean,
            r.f1_min,
            r.f1_max,
            r.f1_range(),
            r.rouge_mean,
            r.loss_mean
        );
    }
    out
}

/// Wide layout: seed-mean F1 per arm with one column per step, followed by
/// the Δ (vision − novision) row of each rate.
pub fn table_csv(s: &Summary) -> String {
    let mut out = String::from("rate,arm");
    for step in &s.steps {
        let _ = write!(out, ",{step}");
    }
    out.push('\n');
    for rate in rates(s) {
        let mut arms: Vec<Arm> = s.rows.iter().filter(|r| r.rate == rate).map(|r| r.arm).collect();
        arms.dedup();
        for arm in arms {
            let _ = write!(out, "{rate},{arm}");
            for &step in &s.steps {
                let v = s.row(arm, rate, step).map(|r| r.f1_mean).unwrap_or(f64::NAN);
                let _ = write!(out, ",{v:.2}");
            }
            out.push('\n');
        }
        if s.deltas.iter().any(|d| d.rate == rate) {
            let _ = write!(out, "{rate},delta");
            for &step in &s.steps {
                match s.deltas.iter().find(|d| d.rate == rate && d.step == step) {
                    Some(d) => {
                        let _ = write!(out, ",{:+.2}", d.delta);
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    out
}

fn rates(s: &Summary) -> Vec<f64> {
    let mut r: Vec<f64> = s.rows.iter().map(|r| r.rate).collect();
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

fn dash(arm: Arm) -> &'static str {
    match arm {
        Arm::Vision => "",
        Arm::NoVision => " stroke-dasharray=\"8 5\"",
        Arm::Shuffled => " stroke-dasharray=\"2 4\"",
    }
}

fn color(arm: Arm) -> &'static str {
    match arm {
        Arm::Vision => "#1f77b4",
        Arm::NoVision => "#d62728",
        Arm::Shuffled => "#2ca02c",
    }
}

/// Seed-mean macro-F1 against update steps for one injection rate. Vision
/// is solid, no-vision dashed, shuffled dotted; chance is drawn at 50.
pub fn learning_curve_svg(s: &Summary, rate: f64) -> String {
    let max_step = s.steps.last().copied().unwrap_or(1).max(1) as f64;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let x = |step: f64| LEFT + pw * step / max_step;
    let y = |f1: f64| TOP + ph * (1.0 - f1 / 100.0);
    let mut o = String::new();
    let _ = writeln!(
        o,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(o, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(o, "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">injection rate {rate}</text>", LEFT + pw / 2.0);
    // axes and ticks
    let _ = writeln!(
        o,
        "<path d=\"M{:.1} {:.1} V{:.1} H{:.1}\" stroke=\"black\" fill=\"none\"/>",
        LEFT,
        TOP,
        TOP + ph,
        LEFT + pw
    );
    for f1 in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let _ = writeln!(
            o,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{f1}</text>",
            LEFT - 6.0,
            y(f1) + 4.0
        );
    }
    for &step in &s.steps {
        let _ = writeln!(
            o,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{step}</text>",
            x(step as f64),
            TOP + ph + 18.0
        );
    }
    let _ = writeln!(o, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">steps</text>", LEFT + pw / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        o,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">macro-F1</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let _ = writeln!(
        o,
        "<line class=\"chance\" x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"1 3\"/>",
        LEFT,
        y(50.0),
        LEFT + pw,
        y(50.0)
    );
    let mut legend_y = TOP + 10.0;
    for arm in [Arm::Vision, Arm::NoVision, Arm::Shuffled] {
        let pts: Vec<(f64, f64)> = s
            .rows
            .iter()
            .filter(|r| r.arm == arm && r.rate == rate)
            .map(|r| (x(r.step as f64), y(r.f1_mean)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (i, (px, py)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{px:.1} {py:.1}", if i == 0 { "M" } else { " L" });
        }
        let _ = writeln!(
            o,
            "<path class=\"{arm}\" d=\"{d}\" stroke=\"{}\" stroke-width=\"2\" fill=\"none\"{}/>",
            color(arm),
            dash(arm)
        );
        for (px, py) in &pts {
            let _ = writeln!(o, "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"3\" fill=\"{}\"/>", color(arm));
        }
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            o,
            "<line x1=\"{lx:.1}\" y1=\"{legend_y:.1}\" x2=\"{:.1}\" y2=\"{legend_y:.1}\" stroke=\"{}\" stroke-width=\"2\"{}/>",
            lx + 30.0,
            color(arm),
            dash(arm)
        );
        let _ = writeln!(o, "<text x=\"{:.1}\" y=\"{:.1}\">{arm}</text>", lx + 36.0, legend_y + 4.0);
        legend_y += 20.0;
    }
    o.push_str("</svg>\n");
    o
}

/// Writes `summary.csv`, `table.csv` and one `curves-rate-<rate>.svg` per rate.
pub fn write_report(s: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    if s.rows.is_empty() {
        return Err(Error::Report("nothing to report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        (dir.join("summary.csv"), summary_csv(s)),
        (dir.join("table.csv"), table_csv(s)),
    ];
    for rate in rates(s) {
        files.push((dir.join(format!("curves-rate-{rate}.svg")), learning_curve_svg(s, rate)));
    }
    let mut out = Vec::new();
    for (path, text) in files {
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}
