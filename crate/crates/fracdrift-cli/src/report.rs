//! Experiment reports: per-repetition rows, aggregate statistics and the
//! emitted file set (`results.csv`, `summary.json`, `curves.csv`).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use crate::config::{config_echo, ExperimentConfig};
use crate::io::format_float;
use crate::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

/// Outcome of one Monte-Carlo repetition.
#[derive(Debug, Clone, Serialize)]
pub struct RepetitionRow {
    pub rep: usize,
    pub m_hat: usize,
    pub mise_qv: f64,
    pub mise_l2: f64,
    pub c_cal: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_hat: Option<f64>,
}

/// A repetition aborted by a module error.
#[derive(Debug, Clone, Serialize)]
pub struct RepetitionFailure {
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Aggregates {
    pub mean_mise_qv: f64,
    pub std_mise_qv: f64,
    pub mean_mise_l2: f64,
    pub std_mise_l2: f64,
    pub mean_m_hat: f64,
    pub mean_c_cal: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_sigma_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_sigma_hat: Option<f64>,
}

/// Estimated and true curves evaluated on a common grid (the data behind
/// the usual overlay plots).
#[derive(Debug, Clone, Default)]
pub struct CurveSet {
    pub times: Vec<f64>,
    pub truth: Vec<f64>,
    pub estimates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<RepetitionRow>,
    pub failures: Vec<RepetitionFailure>,
    pub curves: CurveSet,
    pub wall_clock: Duration,
}

impl ExperimentReport {
    /// Aggregate statistics over the completed repetitions (sample standard
    /// deviations, `R - 1` in the denominator).
    pub fn aggregates(&self) -> Aggregates {
        let qv: Vec<f64> = self.rows.iter().map(|r| r.mise_qv).collect();
        let l2: Vec<f64> = self.rows.iter().map(|r| r.mise_l2).collect();
        let (mean_mise_qv, std_mise_qv) = mean_std(&qv);
        let (mean_mise_l2, std_mise_l2) = mean_std(&l2);
        let m_hat: Vec<f64> = self.rows.iter().map(|r| r.m_hat as f64).collect();
        let c_cal: Vec<f64> = self.rows.iter().map(|r| r.c_cal).collect();
        let sigma: Vec<f64> = self.rows.iter().filter_map(|r| r.sigma_hat).collect();
        let (mean_sigma_hat, std_sigma_hat) = if sigma.len() == self.rows.len() && !sigma.is_empty() {
            let (m, s) = mean_std(&sigma);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        Aggregates {
            mean_mise_qv,
            std_mise_qv,
            mean_mise_l2,
            std_mise_l2,
            mean_m_hat: mean_std(&m_hat).0,
            mean_c_cal: mean_std(&c_cal).0,
            mean_sigma_hat,
            std_sigma_hat,
        }
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Mean and sample standard deviation; zeros on empty input.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    format_version: u32,
    config: BTreeMap<String, String>,
    repetitions_completed: usize,
    partial: bool,
    failures: &'a [RepetitionFailure],
    aggregates: Aggregates,
}

/// Write `results.csv`, `summary.json` and `curves.csv` into `dir`.
///
/// All emitted bytes are a pure function of the report contents (timing is
/// deliberately excluded from the files), so identical configurations and
/// seeds reproduce identical files.
pub fn emit_outputs(report: &ExperimentReport, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    probe_writable(dir)?;

    let mut results = String::from("rep,m_hat,mise_qv,mise_l2,c_cal\n");
    for row in &report.rows {
        results.push_str(&format!(
            "{},{},{},{},{}\n",
            row.rep,
            row.m_hat,
            format_float(row.mise_qv),
            format_float(row.mise_l2),
            format_float(row.c_cal)
        ));
    }
    fs::File::create(dir.join("results.csv"))?.write_all(results.as_bytes())?;

    let summary = SummaryDoc {
        format_version: FORMAT_VERSION,
        config: config_echo(&report.config),
        repetitions_completed: report.rows.len(),
        partial: report.is_partial(),
        failures: &report.failures,
        aggregates: report.aggregates(),
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Io(format!("summary serialization: {e}")))?;
    fs::File::create(dir.join("summary.json"))?.write_all(json.as_bytes())?;

    if !report.curves.times.is_empty() {
        let mut header = vec!["t".to_string(), "truth".to_string()];
        for k in 0..report.curves.estimates.len() {
            header.push(format!("estimate_{:02}", k + 1));
        }
        let mut columns = vec![report.curves.times.clone(), report.curves.truth.clone()];
        columns.extend(report.curves.estimates.iter().cloned());
        crate::io::write_csv(&dir.join("curves.csv"), &header, &columns)?;
    }
    Ok(())
}

/// Fail fast when the output directory is not writable.
pub fn probe_writable(dir: &Path) -> CliResult<()> {
    let probe = dir.join(".write-probe");
    fs::File::create(&probe)
        .map_err(|e| CliError::Io(format!("output directory {} not writable: {e}", dir.display())))?;
    let _ = fs::remove_file(&probe);
    Ok(())
}

/// Re-read an emitted report and verify that the aggregates stored in
/// `summary.json` equal statistics recomputed from the `results.csv` rows.
pub fn verify_outputs(dir: &Path) -> CliResult<()> {
    let (header, columns) = crate::io::read_csv(&dir.join("results.csv"))?;
    if header != ["rep", "m_hat", "mise_qv", "mise_l2", "c_cal"] {
        return Err(CliError::Io(format!("unexpected results.csv header {header:?}")));
    }
    let text = fs::read_to_string(dir.join("summary.json"))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("summary.json: {e}")))?;
    let agg = &doc["aggregates"];
    let completed = doc["repetitions_completed"]
        .as_u64()
        .ok_or_else(|| CliError::Io("summary.json missing repetitions_completed".into()))? as usize;
    if completed != columns[0].len() {
        return Err(CliError::Io(format!(
            "summary reports {completed} repetitions, results.csv has {}",
            columns[0].len()
        )));
    }
    for (name, values) in [("mise_qv", &columns[2]), ("mise_l2", &columns[3])] {
        let (mean, std) = mean_std(values);
        for (field, expect) in [(format!("mean_{name}"), mean), (format!("std_{name}"), std)] {
            let got = agg[&field]
                .as_f64()
                .ok_or_else(|| CliError::Io(format!("summary.json missing {field}")))?;
            if (got - expect).abs() > 1e-12 * expect.abs().max(1.0) {
                return Err(CliError::Io(format!(
                    "{field} = {got} does not match recomputed {expect}"
                )));
            }
        }
    }
    let (mean_m, _) = mean_std(&columns[1]);
    let got = agg["mean_m_hat"]
        .as_f64()
        .ok_or_else(|| CliError::Io("summary.json missing mean_m_hat".into()))?;
    if (got - mean_m).abs() > 1e-12 {
        return Err(CliError::Io(format!("mean_m_hat = {got} does not match recomputed {mean_m}")));
    }
    Ok(())
}
