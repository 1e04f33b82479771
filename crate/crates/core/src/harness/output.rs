//! CSV emission. All files carry a header row, LF newlines, and floats with
//! six significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{mean, sample_std, RunRecord, SummaryRow};
use crate::error::{Error, Result};
use crate::fmt::sig6;

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out =
        String::from("agent,env,mean_reward,final_integrity_mean,final_integrity_std,mean_supply_used,runs\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.agent,
            r.env,
            sig6(r.mean_reward),
            sig6(r.final_mean),
            sig6(r.final_std),
            sig6(r.mean_supply),
            r.runs
        );
    }
    out
}

/// Mean and sample std of integrity at each step over runs.
pub fn trajectory_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("step,mean_integrity,std_integrity\n");
    let steps = records.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    for k in 0..steps {
        let xs: Vec<f64> = records.iter().filter_map(|r| r.rows.get(k)).map(|row| row.integrity).collect();
        let _ = writeln!(out, "{},{},{}", k + 1, sig6(mean(&xs)), sig6(sample_std(&xs)));
    }
    out
}

const DISCRETE_LABELS: [&str; 3] = ["chemical", "thermal", "none"];

/// `(label, count, fraction)` over every recorded step.
pub fn action_frequencies(records: &[RunRecord]) -> Vec<(&'static str, usize, f64)> {
    let mut labels: Vec<&'static str> = DISCRETE_LABELS.to_vec();
    if records.iter().flat_map(|r| &r.rows).any(|row| row.action == "dosage") {
        labels.push("dosage");
    }
    let total: usize = records.iter().map(|r| r.rows.len()).sum();
    labels
        .into_iter()
        .map(|label| {
            let count = records
                .iter()
                .flat_map(|r| &r.rows)
                .filter(|row| row.action == label)
                .count();
            let frac = if total == 0 { 0.0 } else { count as f64 / total as f64 };
            (label, count, frac)
        })
        .collect()
}

pub fn action_freq_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("action,count,fraction\n");
    for (label, count, frac) in action_frequencies(records) {
        let _ = writeln!(out, "{label},{count},{}", sig6(frac));
    }
    out
}

pub fn supply_reward_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("run,total_supply,total_reward\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.run_id, sig6(r.total_supply), sig6(r.total_reward));
    }
    out
}

/// Writes `action_freq.csv`, `trajectory.csv`, and `supply_reward.csv`
/// into `dir`.
pub fn emit_figure_data(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Argument("figure data needs at least one run".into()));
    }
    let files = [
        ("action_freq.csv", action_freq_csv(records)),
        ("trajectory.csv", trajectory_csv(records)),
        ("supply_reward.csv", supply_reward_csv(records)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
