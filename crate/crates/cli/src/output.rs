//! Deterministic result emission: fixed-format CSV, sorted-key JSON and the
//! run manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{Runtime, RunResult};

/// Scientific notation with nine significant digits, the fixed CSV format.
pub fn sci(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes a CSV file with a header row; rows come preformatted.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> RunResult<()> {
    let mut buf = String::new();
    buf.push_str(&header.join(","));
    buf.push('\n');
    for row in rows {
        buf.push_str(&row.join(","));
        buf.push('\n');
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> RunResult<()> {
    let mut file = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| crate::Failure::io(e.to_string()))?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct Delta {
    expected: f64,
    actual: f64,
    relative: f64,
}

/// Record of one run: inputs, outputs and the key numeric results. Two runs
/// with equal manifests produced byte-identical files.
#[derive(Serialize)]
pub struct Manifest {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    scenario_sha256: String,
    seed: u64,
    outputs: Vec<String>,
    results: BTreeMap<String, serde_json::Value>,
    /// Relative deviations from the scenario's expected figures.
    deltas: BTreeMap<String, Delta>,
    #[serde(skip)]
    out_dir: PathBuf,
}

impl Manifest {
    pub(crate) fn new(subcommand: &'static str, runtime: &Runtime) -> Self {
        Self {
            tool: "vlcsim",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            scenario_sha256: runtime.scenario_sha256.clone(),
            seed: runtime.seed,
            outputs: Vec::new(),
            results: BTreeMap::new(),
            deltas: BTreeMap::new(),
            out_dir: runtime.out.clone(),
        }
    }

    /// Registers an output file name (relative to the output directory).
    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn record(&mut self, key: &str, value: f64) {
        self.results
            .insert(key.to_string(), serde_json::json!(value));
    }

    pub fn record_value(&mut self, key: &str, value: serde_json::Value) {
        self.results.insert(key.to_string(), value);
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Compares recorded numeric results against the scenario's expected
    /// figures.
    pub fn attach_deltas(&mut self, expectations: &BTreeMap<String, f64>) {
        for (key, expected) in expectations {
            if let Some(serde_json::Value::Number(n)) = self.results.get(key) {
                if let Some(actual) = n.as_f64() {
                    self.deltas.insert(
                        key.clone(),
                        Delta {
                            expected: *expected,
                            actual,
                            relative: (actual - expected) / expected,
                        },
                    );
                }
            }
        }
    }

    pub fn write(&mut self, out: &Path) -> RunResult<()> {
        self.outputs.sort();
        write_json(&out.join("manifest.json"), self)
    }
}
