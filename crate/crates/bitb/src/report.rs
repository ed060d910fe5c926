//! Writing a suite's results to the output directory.
//!
//! `metrics.json` holds only deterministic content (suite, resolved config
//! minus the output path, metrics, invariants) and is byte-identical across
//! runs with the same configuration. `summary.json` adds the library version,
//! the output path and a separate `run` block with wall-clock information.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::suites::{Invariant, SuiteReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct Metrics<'a> {
    suite: &'a str,
    config: Value,
    metrics: &'a BTreeMap<String, Value>,
    invariants: &'a [Invariant],
    passed: bool,
}

#[derive(Serialize)]
struct RunInfo {
    timestamp_unix: u64,
    elapsed_ms: u128,
}

#[derive(Serialize)]
struct Summary<'a> {
    tool: &'static str,
    version: &'static str,
    #[serde(flatten)]
    body: &'a Metrics<'a>,
    out: String,
    files: Vec<String>,
    run: RunInfo,
}

fn deterministic_config(cfg: &ExperimentConfig) -> Value {
    let mut v = serde_json::to_value(cfg).expect("config serialises");
    if let Value::Object(map) = &mut v {
        map.remove("out");
    }
    v
}

/// Writes every file of the report into `cfg.out` and returns their paths.
pub fn write_report(cfg: &ExperimentConfig, rep: &SuiteReport, elapsed: Duration) -> Result<Vec<PathBuf>> {
    let dir: &Path = &cfg.out;
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut written = Vec::new();
    let put = |written: &mut Vec<PathBuf>, name: &str, contents: &[u8]| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(())
    };
    for table in &rep.tables {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        put(&mut written, &table.file, &w.into_inner()?)?;
    }
    for (name, contents) in &rep.attachments {
        put(&mut written, name, contents.as_bytes())?;
    }
    let body = Metrics {
        suite: cfg.suite.name(),
        config: deterministic_config(cfg),
        metrics: &rep.metrics,
        invariants: &rep.invariants,
        passed: rep.passed(),
    };
    put(&mut written, "metrics.json", serde_json::to_string_pretty(&body)?.as_bytes())?;
    let mut files: Vec<String> =
        written.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    files.push("summary.json".into());
    let summary = Summary {
        tool: "bitb",
        version: VERSION,
        body: &body,
        out: dir.display().to_string(),
        files,
        run: RunInfo {
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            elapsed_ms: elapsed.as_millis(),
        },
    };
    put(&mut written, "summary.json", serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(written)
}
