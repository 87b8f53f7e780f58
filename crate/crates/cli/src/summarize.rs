use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::Serialize;

use crate::experiment::RunRecord;
use crate::CliError;

/// Mean and sample standard deviation; one value has deviation zero.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub providers: usize,
    pub iterations: usize,
    pub runs: usize,
    pub time_s_mean: f64,
    pub time_s_sd: f64,
    pub mpc_rounds: u64,
    pub mpc_global_bytes: u64,
    pub mpc_local_bytes_player0_mean: f64,
    pub global_bytes_mean: f64,
    /// MPC rounds and global bytes agree across every run of the point.
    pub consistent: bool,
}

pub fn read_records<R: BufRead>(source: R) -> Result<Vec<RunRecord>, CliError> {
    source
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|line| {
            let line = line.map_err(|e| CliError::Io(e.to_string()))?;
            serde_json::from_str(&line)
                .map_err(|e| CliError::Config(format!("bad metrics line: {e}")))
        })
        .collect()
}

pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>, CliError> {
    if records.is_empty() {
        return Err(CliError::Config("no metrics records to summarize".into()));
    }
    let mut points: BTreeMap<(String, usize, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        points
            .entry((r.experiment.clone(), r.providers, r.iterations))
            .or_default()
            .push(r);
    }
    Ok(points
        .into_iter()
        .map(|((experiment, providers, iterations), runs)| {
            let times: Vec<f64> = runs.iter().map(|r| r.time_ms as f64 / 1000.0).collect();
            let (time_s_mean, time_s_sd) = mean_sd(&times);
            let local: Vec<f64> = runs
                .iter()
                .map(|r| r.mpc_local_bytes_player0 as f64)
                .collect();
            let globals: Vec<f64> = runs.iter().map(|r| r.global_bytes as f64).collect();
            let first = runs[0];
            // player 0's own traffic depends on whether it was elected
            // enclave, so only the global counters are compared
            let consistent = runs.iter().all(|r| {
                r.mpc_rounds == first.mpc_rounds && r.mpc_global_bytes == first.mpc_global_bytes
            });
            SummaryRow {
                experiment,
                providers,
                iterations,
                runs: runs.len(),
                time_s_mean,
                time_s_sd,
                mpc_rounds: first.mpc_rounds,
                mpc_global_bytes: first.mpc_global_bytes,
                mpc_local_bytes_player0_mean: mean_sd(&local).0,
                global_bytes_mean: mean_sd(&globals).0,
                consistent,
            }
        })
        .collect())
}

pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<14} {:>9} {:>6} {:>5} {:>18} {:>7} {:>14} {:>14}  status",
        "experiment", "providers", "T", "runs", "time (s)", "rounds", "mpc bytes", "local bytes p0"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<14} {:>9} {:>6} {:>5} {:>18} {:>7} {:>14} {:>14.0}  {}",
            r.experiment,
            r.providers,
            r.iterations,
            r.runs,
            format!("{:.2} ± {:.2}", r.time_s_mean, r.time_s_sd),
            r.mpc_rounds,
            r.mpc_global_bytes,
            r.mpc_local_bytes_player0_mean,
            if r.consistent { "ok" } else { "INCONSISTENT" }
        )
        .unwrap();
    }
    out
}
