//! Plot-ready CSV files derived from a finished run directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::output::{io_err, RunManifest, ROUNDS_COLUMNS, ROUNDS_FILE};
use crate::CliError;

/// Summary row of one round, as stored in `rounds.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundSummary {
    pub round: usize,
    pub mu_broadcast: Option<f64>,
    pub mu_aggregate: Option<f64>,
    pub acc_personal: Option<f64>,
    pub acc_global: Option<f64>,
    pub frozen_down: Option<f64>,
    pub frozen_up: Option<f64>,
    pub params_down: u64,
    pub params_up: u64,
}

fn parse_opt(field: &str, col: &str) -> Result<Option<f64>, CliError> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| CliError::Report(format!("column {col}: cannot parse {field:?}")))
}

fn parse_int<T: std::str::FromStr>(field: &str, col: &str) -> Result<T, CliError> {
    field
        .parse()
        .map_err(|_| CliError::Report(format!("column {col}: cannot parse {field:?}")))
}

/// Reads the summary rows (`client_id = -1`) of a rounds file.
pub fn read_round_summaries(path: &Path) -> Result<Vec<RoundSummary>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Report(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Report(e.to_string()))?.clone();
    if headers.iter().ne(ROUNDS_COLUMNS) {
        return Err(CliError::Report(format!("{}: unexpected columns", path.display())));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| CliError::Report(e.to_string()))?;
        if &row[1] != "-1" {
            continue;
        }
        out.push(RoundSummary {
            round: parse_int(&row[0], "round")?,
            mu_broadcast: parse_opt(&row[2], "mu_broadcast")?,
            mu_aggregate: parse_opt(&row[3], "mu_aggregate")?,
            acc_personal: parse_opt(&row[4], "acc_personal")?,
            acc_global: parse_opt(&row[5], "acc_global")?,
            frozen_down: parse_opt(&row[6], "frozen_down")?,
            frozen_up: parse_opt(&row[7], "frozen_up")?,
            params_down: parse_int(&row[8], "params_down")?,
            params_up: parse_int(&row[9], "params_up")?,
        });
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map(crate::output::fmt_f64).unwrap_or_default()
}

fn write_table(path: &Path, comments: &[&str], header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let mut text = String::new();
    for c in comments {
        text.push_str("# ");
        text.push_str(c);
        text.push('\n');
    }
    text.push_str(&header.join(","));
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

pub const REPORT_FILES: [&str; 4] = [
    "accuracy_vs_round.csv",
    "frozen_layers_vs_round.csv",
    "traffic_vs_round.csv",
    "mu_vs_round.csv",
];

/// Writes the four per-round plot tables into `run_dir`.
pub fn report(run_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let manifest = RunManifest::read(run_dir)?;
    let expected = manifest
        .rounds
        .ok_or_else(|| CliError::Report("manifest describes no federated run".into()))?;
    let rows = read_round_summaries(&run_dir.join(ROUNDS_FILE))?;
    if rows.len() != expected || rows.iter().enumerate().any(|(i, r)| r.round != i) {
        return Err(CliError::Report(format!(
            "incomplete run: {} of {expected} rounds recorded",
            rows.len()
        )));
    }
    let paths: Vec<PathBuf> = REPORT_FILES.iter().map(|f| run_dir.join(f)).collect();
    write_table(
        &paths[0],
        &[
            "acc_personal: mean personalized test accuracy of the round's selected clients",
            "acc_global: mean test accuracy of the global model over all clients after the round",
        ],
        &["round", "acc_personal", "acc_global"],
        rows.iter()
            .map(|r| vec![r.round.to_string(), cell(r.acc_personal), cell(r.acc_global)])
            .collect(),
    )?;
    write_table(
        &paths[1],
        &[
            "frozen_down: mean count of layers with broadcast mix degree 0 (kept local)",
            "frozen_up: mean count of layers with aggregate mix degree 1 (kept global)",
        ],
        &["round", "frozen_down", "frozen_up"],
        rows.iter()
            .map(|r| {
                vec![r.round.to_string(), cell(r.frozen_down.or(Some(0.0))), cell(r.frozen_up.or(Some(0.0)))]
            })
            .collect(),
    )?;
    write_table(
        &paths[2],
        &[
            "params_down: parameters sent to clients in layers with broadcast mix degree > 0",
            "params_up: parameters sent to the server in layers with aggregate mix degree < 1",
        ],
        &["round", "params_down", "params_up"],
        rows.iter()
            .map(|r| vec![r.round.to_string(), r.params_down.to_string(), r.params_up.to_string()])
            .collect(),
    )?;
    write_table(
        &paths[3],
        &[
            "mu_broadcast: mean broadcast mix factor over selected clients (empty when unused)",
            "mu_aggregate: aggregation mix factor shared by all clients (empty when unused)",
        ],
        &["round", "mu_broadcast", "mu_aggregate"],
        rows.iter()
            .map(|r| vec![r.round.to_string(), cell(r.mu_broadcast), cell(r.mu_aggregate)])
            .collect(),
    )?;
    Ok(paths)
}
