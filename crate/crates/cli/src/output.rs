//! Run artifacts: per-round CSV, binary model files and the manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use pmixfed_core::model::{LayerShape, LayeredParams};
use pmixfed_core::orchestrator::RoundRecord;
use pmixfed_core::theory::Verdict;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FINAL_GLOBAL_FILE: &str = "final_global.bin";
pub const VERDICTS_FILE: &str = "verdicts.json";
pub const CLIENTS_DIR: &str = "clients";

pub const ROUNDS_COLUMNS: [&str; 10] = [
    "round",
    "client_id",
    "mu_broadcast",
    "mu_aggregate",
    "acc_personal",
    "acc_global",
    "frozen_down",
    "frozen_up",
    "params_down",
    "params_up",
];

const PARAMS_MAGIC: &[u8; 4] = b"PMIX";
const PARAMS_VERSION: u32 = 1;
const MANIFEST_SCHEMA: u32 = 1;

/// Round-trip decimal formatting: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// One row per (round, client), then a summary row with `client_id = -1`:
/// mean broadcast mix factor, mean personalized accuracy, mean frozen layer
/// counts and summed traffic over the selected clients.
pub fn write_rounds_csv(path: &Path, records: &[RoundRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Report(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| CliError::Report(format!("{}: {e}", path.display()));
    w.write_record(ROUNDS_COLUMNS).map_err(csv_err)?;
    for r in records {
        let mu_agg = fmt_opt(r.mu_aggregate);
        let acc_glob = fmt_opt(r.acc_global);
        for c in &r.clients {
            w.write_record([
                r.round.to_string(),
                c.client_id.to_string(),
                fmt_opt(c.mu_broadcast),
                mu_agg.clone(),
                fmt_opt(c.acc_personal),
                acc_glob.clone(),
                c.frozen_down.to_string(),
                c.frozen_up.to_string(),
                c.params_down.to_string(),
                c.params_up.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.write_record([
            r.round.to_string(),
            "-1".to_string(),
            fmt_opt(mean(r.clients.iter().filter_map(|c| c.mu_broadcast))),
            mu_agg,
            fmt_opt(r.mean_personal_accuracy()),
            acc_glob,
            fmt_opt(mean(r.clients.iter().map(|c| c.frozen_down as f64))),
            fmt_opt(mean(r.clients.iter().map(|c| c.frozen_up as f64))),
            r.params_down.to_string(),
            r.params_up.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// `PMIX`, version, layer count, then per layer its length and values, all
/// little-endian.
pub fn encode_params(params: &LayeredParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * params.num_layers() + 8 * params.num_params());
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.num_layers() as u32).to_le_bytes());
    for layer in params.layers() {
        out.extend_from_slice(&(layer.len() as u32).to_le_bytes());
        for v in layer {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decodes a params file into flat layers (shapes are not stored).
pub fn decode_params(bytes: &[u8]) -> Result<Vec<Vec<f64>>, CliError> {
    let bad = |m: &str| CliError::Report(format!("params file: {m}"));
    let u32_at = |o: usize| -> Result<u32, CliError> {
        bytes
            .get(o..o + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| bad("truncated"))
    };
    if bytes.get(..4) != Some(PARAMS_MAGIC.as_slice()) {
        return Err(bad("bad magic"));
    }
    if u32_at(4)? != PARAMS_VERSION {
        return Err(bad("unsupported version"));
    }
    let count = u32_at(8)? as usize;
    let mut offset = 12;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32_at(offset)? as usize;
        offset += 4;
        let body = bytes.get(offset..offset + 8 * len).ok_or_else(|| bad("truncated"))?;
        layers.push(
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect(),
        );
        offset += 8 * len;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(layers)
}

/// Rebuilds params from a file and the expected shapes.
pub fn read_params(path: &Path, shapes: Vec<LayerShape>) -> Result<LayeredParams, CliError> {
    let layers = decode_params(&fs::read(path).map_err(io_err(path))?)?;
    Ok(LayeredParams::new(shapes, layers)?)
}

pub fn write_params(path: &Path, params: &LayeredParams) -> Result<(), CliError> {
    fs::write(path, encode_params(params)).map_err(io_err(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub initial_global: Option<f64>,
    pub final_global: Option<f64>,
    pub final_personal: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub command: String,
    pub config: Value,
    pub started_unix_secs: f64,
    pub finished_unix_secs: f64,
    pub elapsed_secs: f64,
    pub rounds: Option<usize>,
    pub rounds_file: Option<String>,
    pub final_global_file: Option<String>,
    pub client_state_files: Vec<String>,
    pub summary: Option<AccuracySummary>,
    pub theory_verdicts: Vec<Verdict>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA,
            code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).into(),
            command: command.into(),
            config,
            started_unix_secs: unix_now(),
            finished_unix_secs: 0.0,
            elapsed_secs: 0.0,
            rounds: None,
            rounds_file: None,
            final_global_file: None,
            client_state_files: Vec::new(),
            summary: None,
            theory_verdicts: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.finished_unix_secs = unix_now();
        self.elapsed_secs = (self.finished_unix_secs - self.started_unix_secs).max(0.0);
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let value = serde_json::to_value(self).map_err(|e| CliError::Report(e.to_string()))?;
        validate_manifest(&value, dir)?;
        let text = serde_json::to_string_pretty(&value).map_err(|e| CliError::Report(e.to_string()))?;
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(text.as_bytes()).map_err(io_err(&path))?;
        f.write_all(b"\n").map_err(io_err(&path))
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Report(format!("manifest: {e}")))?;
        validate_manifest(&value, dir)?;
        serde_json::from_value(value).map_err(|e| CliError::Report(format!("manifest: {e}")))
    }
}

fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Checks a manifest against its schema: required fields and types,
/// accuracies in `[0, 1]`, and referenced files present under `dir`.
pub fn validate_manifest(v: &Value, dir: &Path) -> Result<(), CliError> {
    let bad = |m: String| CliError::Report(format!("manifest schema: {m}"));
    let obj = v.as_object().ok_or_else(|| bad("not an object".into()))?;
    let require = |key: &str, ok: fn(&Value) -> bool| -> Result<(), CliError> {
        match obj.get(key) {
            Some(x) if ok(x) => Ok(()),
            Some(_) => Err(bad(format!("{key} has the wrong type"))),
            None => Err(bad(format!("{key} missing"))),
        }
    };
    let opt_str = |x: &Value| x.is_null() || x.is_string();
    require("schema_version", |x| x.as_u64() == Some(u64::from(MANIFEST_SCHEMA)))?;
    require("code_version", Value::is_string)?;
    require("command", Value::is_string)?;
    require("config", |x| x.is_object() || x.is_null())?;
    require("started_unix_secs", Value::is_number)?;
    require("finished_unix_secs", Value::is_number)?;
    require("elapsed_secs", |x| x.as_f64().is_some_and(|e| e >= 0.0))?;
    require("rounds", |x| x.is_null() || x.is_u64())?;
    require("rounds_file", opt_str)?;
    require("final_global_file", opt_str)?;
    require("client_state_files", |x| x.as_array().is_some_and(|a| a.iter().all(Value::is_string)))?;
    require("summary", |x| x.is_null() || x.is_object())?;
    require("theory_verdicts", Value::is_array)?;
    if let Some(summary) = obj.get("summary").and_then(Value::as_object) {
        for (k, acc) in summary {
            if !acc.is_null() && !acc.as_f64().is_some_and(|a| (0.0..=1.0).contains(&a)) {
                return Err(bad(format!("summary.{k} outside [0, 1]")));
            }
        }
    }
    let mut files: Vec<PathBuf> = Vec::new();
    for key in ["rounds_file", "final_global_file"] {
        if let Some(f) = obj.get(key).and_then(Value::as_str) {
            files.push(dir.join(f));
        }
    }
    if let Some(list) = obj.get("client_state_files").and_then(Value::as_array) {
        files.extend(list.iter().filter_map(Value::as_str).map(|f| dir.join(f)));
    }
    if let Some(missing) = files.iter().find(|p| !p.exists()) {
        return Err(bad(format!("{} does not exist", missing.display())));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub suite: String,
    pub seed: u64,
    pub all_passed: bool,
    pub verdicts: Vec<Verdict>,
}

pub fn write_verdicts(path: &Path, report: &VerdictReport) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Report(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}
